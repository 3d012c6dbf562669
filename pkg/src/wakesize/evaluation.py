"""Baselines, out-of-sample testing and sensitivity sweeps."""

from __future__ import annotations

import csv
import enum
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .grid import GridCase, eval_gE, eval_gN
from .sizing import SizingProblem, SizingSolution, algorithm2, solve_robust
from .uncertainty import AmbiguityConfig, ScenarioSet, scenario_atoms

log = logging.getLogger(__name__)


class BaselineKind(str, enum.Enum):
    DRO = "DRO"
    SP1 = "SP1"  # no ambiguity, wake neglected
    SP2 = "SP2"  # no ambiguity, wake envelope kept
    RO = "RO"


def run_baseline(kind, prob: SizingProblem, tol_x: float = 0.1, max_iter: int = 50, backend=None) -> SizingSolution:
    kind = BaselineKind(kind)
    if kind is BaselineKind.DRO:
        return algorithm2(prob, tol_x, max_iter, backend)
    if kind is BaselineKind.SP1:
        return algorithm2(prob.replace(ambiguity=AmbiguityConfig(0.0), use_facets=False), tol_x, max_iter, backend)
    if kind is BaselineKind.SP2:
        return algorithm2(prob.replace(ambiguity=AmbiguityConfig(0.0)), tol_x, max_iter, backend)
    return solve_robust(prob, backend)


@dataclass
class OutOfSample:
    tested_g_extreme: float | None  # mean MWh over extreme scenarios
    tested_g_normal: float | None  # mean CNY over normal scenarios that need no shedding
    violations: int  # normal scenarios the capacity cannot serve
    g_extreme: np.ndarray
    g_normal: np.ndarray  # inf where infeasible


def out_of_sample(case: GridCase, x, held_out: ScenarioSet, use_facets: bool = True, backend=None) -> OutOfSample:
    """Evaluate a fixed capacity on held-out scenarios through the operation LPs."""
    x = np.asarray(x, float)
    normal, extreme = held_out.normal(), held_out.extreme()
    gE = np.array([eval_gE(case, x, z, backend).value for z in scenario_atoms(case, extreme, x, use_facets)])
    gN = np.array([eval_gN(case, x, z, backend).value for z in scenario_atoms(case, normal, x, use_facets)])
    ok = np.isfinite(gN)
    return OutOfSample(
        float(gE.mean()) if gE.size else None,
        float(gN[ok].mean()) if ok.any() else None,
        int((~ok).sum()), gE, gN,
    )


# --------------------------------------------------------------------------- report


def estimated_values(kind, sol: SizingSolution) -> tuple[float, float]:
    """(estimated shedding, estimated fuel cost) as each method sees them."""
    if not sol.feasible:
        return np.nan, np.nan
    ev = sol.evaluation
    if BaselineKind(kind) is BaselineKind.RO:
        return float(np.max(ev.g_extreme, initial=0.0)), sol.fuel_objective
    return ev.extreme_lhs, sol.fuel_objective


@dataclass
class MethodResult:
    method: str
    budget: float | None
    status: str
    capacity: dict | None
    investment: float | None
    estimated_g_extreme: float | None
    estimated_g_normal: float | None
    tested_g_extreme: float | None = None
    tested_g_normal: float | None = None
    violations: int | None = None
    runtime_s: float = 0.0


TABLE_COLUMNS = ["method", "budget_cny", "status", "wind_mw", "ess_power_mw", "ess_energy_mwh", "investment_cny",
                 "estimated_g_extreme_mwh", "tested_g_extreme_mwh", "estimated_g_normal_cny",
                 "tested_g_normal_cny", "violations", "runtime_s"]


def _num(v):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return None
    return float(v)


@dataclass
class EvalReport:
    methods: list = field(default_factory=list)
    sweeps: dict = field(default_factory=dict)  # knob -> list of rows

    def to_dict(self) -> dict:
        return {"methods": [m.__dict__ for m in self.methods], "sweeps": self.sweeps}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")

    def write_comparison_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TABLE_COLUMNS)
            for m in self.methods:
                cap = m.capacity or {}
                w.writerow([m.method, _cell(m.budget), m.status, _join(cap.get("wind_mw")), _join(cap.get("ess_power_mw")),
                            _join(cap.get("ess_energy_mwh")), _cell(m.investment), _cell(m.estimated_g_extreme),
                            _cell(m.tested_g_extreme), _cell(m.estimated_g_normal), _cell(m.tested_g_normal),
                            _cell(m.violations), f"{m.runtime_s:.3f}"])

    def write_sweep_csv(self, knob: str, path) -> None:
        rows = self.sweeps[knob]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for r in rows:
                w.writerow([r["knob"], _cell(r["value"]), r["status"], _join(r["wind_mw"]), _join(r["ess_power_mw"]),
                            _join(r["ess_energy_mwh"]), _cell(r["investment_cny"]), _cell(r["fuel_objective_cny"]),
                            _cell(r["tested_g_extreme_mwh"]), _cell(r["tested_g_normal_cny"])])


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def _join(vals) -> str:
    if vals is None:
        return ""
    return ";".join(repr(float(v)) for v in vals)


def method_result(kind, sol: SizingSolution, runtime: float, case: GridCase, held_out: ScenarioSet | None,
                  backend=None, budget: float | None = None) -> MethodResult:
    kind = BaselineKind(kind)
    if not sol.feasible:
        return MethodResult(kind.value, budget, sol.status, None, None, None, None, runtime_s=runtime)
    est_e, est_n = estimated_values(kind, sol)
    cap = sol.capacity
    res = MethodResult(
        kind.value, budget, sol.status,
        {"wind_mw": cap.wind.tolist(), "ess_power_mw": cap.power.tolist(), "ess_energy_mwh": cap.energy.tolist()},
        sol.investment, _num(est_e), _num(est_n), runtime_s=runtime,
    )
    if held_out is not None:
        # tested values always use the wake envelope, whatever the method assumed
        oos = out_of_sample(case, sol.x, held_out, True, backend)
        res.tested_g_extreme, res.tested_g_normal, res.violations = (
            oos.tested_g_extreme, oos.tested_g_normal, oos.violations)
    return res


def compare_methods(prob: SizingProblem, kinds, held_out: ScenarioSet | None = None, tol_x: float = 0.1,
                    max_iter: int = 50, backend=None, timer=time.perf_counter):
    """Solve every requested method; returns (EvalReport, {method: SizingSolution})."""
    report = EvalReport()
    sols = {}
    for kind in kinds:
        kind = BaselineKind(kind)
        t0 = timer()
        sol = run_baseline(kind, prob, tol_x, max_iter, backend)
        sols[kind.value] = sol
        report.methods.append(method_result(kind, sol, timer() - t0, prob.case, held_out, backend, prob.budget))
    return report, sols


# --------------------------------------------------------------------------- sweeps


KNOBS = ("eps0", "g_cap", "kappa")
SWEEP_COLUMNS = ["knob", "value", "status", "wind_mw", "ess_power_mw", "ess_energy_mwh", "investment_cny",
                 "fuel_objective_cny", "tested_g_extreme_mwh", "tested_g_normal_cny"]


def _with_knob(prob: SizingProblem, knob: str, value: float) -> SizingProblem:
    if knob == "eps0":
        return prob.replace(ambiguity=AmbiguityConfig(value))
    if knob == "g_cap":
        return prob.replace(g_cap=value)
    return prob.replace(ess_cost_scale=value)


def sensitivity_sweep(prob: SizingProblem, knob: str, values, held_out: ScenarioSet | None = None,
                      tol_x: float = 0.1, max_iter: int = 50, backend=None) -> list[dict]:
    """Re-solve with one parameter changed per row; infeasible cells are recorded, not raised."""
    if knob not in KNOBS:
        raise ValueError(f"knob must be one of {KNOBS}")
    rows = []
    for v in values:
        v = float(v)
        if not np.isfinite(v):
            raise ValueError("sweep values must be finite")
        sol = algorithm2(_with_knob(prob, knob, v), tol_x, max_iter, backend)
        row = {"knob": knob, "value": v, "status": sol.status, "wind_mw": None, "ess_power_mw": None,
               "ess_energy_mwh": None, "investment_cny": None, "fuel_objective_cny": None,
               "tested_g_extreme_mwh": None, "tested_g_normal_cny": None}
        if sol.feasible:
            cap = sol.capacity
            row.update(wind_mw=cap.wind.tolist(), ess_power_mw=cap.power.tolist(),
                       ess_energy_mwh=cap.energy.tolist(), investment_cny=sol.investment,
                       fuel_objective_cny=sol.evaluation.fuel_objective)
            if held_out is not None:
                oos = out_of_sample(prob.case, sol.x, held_out, True, backend)
                row.update(tested_g_extreme_mwh=oos.tested_g_extreme, tested_g_normal_cny=oos.tested_g_normal)
        else:
            log.info("sweep %s=%g: %s", knob, v, sol.status)
        rows.append(row)
    return rows
