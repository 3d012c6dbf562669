"""Command-line entry point: ``wakesize {wake,size,eval,oracle}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .evaluation import BaselineKind, EvalReport, compare_methods, sensitivity_sweep
from .geometry import select_facets, upper_hull_facets
from .grid import GridCase, load_case
from .lipschitz import extreme_bounds
from .sizing import (DEFAULT_G_CAP, MIN_FUEL, MIN_INVESTMENT, FrontierPoint, SizingProblem, algorithm2,
                     pareto_sweep, round_solution)
from .uncertainty import AmbiguityConfig, load_scenarios
from .wake import sweep

log = logging.getLogger("wakesize")

DATA = Path(__file__).resolve().parent / "data"
EXIT_VALIDATION = 2


class ConfigError(ValueError):
    """Bad command-line input; reported with exit code 2."""


@dataclass
class RunConfig:
    command: str
    case: str
    scenarios: str | None = None
    heldout: str | None = None
    out: str = "out"
    eps0: float = 0.05
    g_cap: float = DEFAULT_G_CAP
    budgets: list = field(default_factory=list)
    tol_hull: float | None = None
    tol_x: float = 0.1
    max_iter: int = 50
    jobs: int = 1
    seed: int = 0
    node_limit: int = 20000
    baselines: list = field(default_factory=list)
    sweep_eps0: list = field(default_factory=list)
    sweep_g_cap: list = field(default_factory=list)
    sweep_kappa: list = field(default_factory=list)
    sweep_objective: str = MIN_INVESTMENT
    probes: int = 100

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    def solver_settings(self) -> dict:
        """Settings that can change results; output location and parallelism cannot."""
        return {k: v for k, v in self.__dict__.items() if k not in ("out", "jobs")}


# --------------------------------------------------------------------------- parsing


def _floats(text: str) -> list[float]:
    if text is None or text.strip() == "":
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    if text is None or text.strip() == "":
        return []
    names = [v.strip().upper() for v in text.split(",")]
    for n in names:
        if n not in BaselineKind.__members__:
            raise argparse.ArgumentTypeError(f"unknown method {n!r}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wakesize", description=__doc__)
    p.add_argument("--version", action="version", version=f"wakesize {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenarios=True):
        sp.add_argument("--case", required=True, help="grid case JSON, or the name of a bundled case")
        if scenarios:
            sp.add_argument("--scenarios", help="scenario CSV (defaults to the bundled set for bundled cases)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--tol-hull", type=float, default=None, help="facet selection tolerance, MW")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-v", "--verbose", action="store_true")

    def sizing(sp):
        sp.add_argument("--eps0", type=float, default=0.05)
        sp.add_argument("--g-cap", type=float, default=DEFAULT_G_CAP, help="shedding cap, MWh")
        sp.add_argument("--budgets", type=_floats, default=[], help="comma-separated budgets, CNY")
        sp.add_argument("--tol-x", type=float, default=0.1, help="convergence tolerance, MW")
        sp.add_argument("--max-iter", type=int, default=50)
        sp.add_argument("--node-limit", type=int, default=20000, help="search limit per shedding-bound component")

    common(sub.add_parser("wake", help="wake sweep and facet fitting per wind site"), scenarios=False)
    sz = sub.add_parser("size", help="Pareto sweep over budgets")
    common(sz)
    sizing(sz)
    ev = sub.add_parser("eval", help="baselines, out-of-sample tests and sensitivity sweeps")
    common(ev)
    sizing(ev)
    ev.add_argument("--heldout", help="held-out scenario CSV")
    ev.add_argument("--baselines", type=_names, default=["SP1", "SP2", "RO"],
                    help="comma-separated subset of SP1,SP2,RO (DRO always runs)")
    ev.add_argument("--sweep-eps0", type=_floats, default=[])
    ev.add_argument("--sweep-g-cap", type=_floats, default=[])
    ev.add_argument("--sweep-kappa", type=_floats, default=[])
    ev.add_argument("--sweep-objective", choices=[MIN_INVESTMENT, MIN_FUEL], default=MIN_INVESTMENT)
    orc = sub.add_parser("oracle", help="brute-force cross-checks on a case")
    common(orc)
    orc.add_argument("--probes", type=int, default=100)
    orc.add_argument("--eps0", type=float, default=0.05)
    orc.add_argument("--node-limit", type=int, default=20000)
    return p


def config_from_args(args) -> RunConfig:
    cfg = RunConfig(command=args.command, case=args.case, out=args.out, tol_hull=args.tol_hull,
                    jobs=max(1, args.jobs), seed=args.seed)
    for name in ("scenarios", "heldout", "eps0", "g_cap", "budgets", "tol_x", "max_iter", "node_limit",
                 "baselines", "sweep_eps0", "sweep_g_cap", "sweep_kappa", "sweep_objective", "probes"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    return cfg


# --------------------------------------------------------------------------- inputs


def _bundled(name: str) -> Path | None:
    path = DATA / f"{name}.json"
    return path if "/" not in name and path.is_file() else None


def resolve_inputs(cfg: RunConfig) -> tuple[Path, Path | None, Path | None]:
    """Paths of the case, scenario and held-out files; bundled names fill in defaults."""
    case = Path(cfg.case)
    bundled = None
    if not case.is_file():
        bundled = _bundled(cfg.case)
        if bundled is None:
            raise ConfigError(f"grid case not found: {cfg.case}")
        case = bundled
    scen = Path(cfg.scenarios) if cfg.scenarios else None
    held = Path(cfg.heldout) if cfg.heldout else None
    if bundled is not None:
        scen = scen or DATA / f"{cfg.case}_scenarios.csv"
        if cfg.command == "eval" and held is None:
            held = DATA / f"{cfg.case}_heldout.csv"
    for p in (scen, held):
        if p is not None and not p.is_file():
            raise ConfigError(f"scenario file not found: {p}")
    if cfg.command != "wake" and scen is None:
        raise ConfigError("--scenarios is required for cases that are not bundled")
    return case, scen, held


def ensure_facets(case: GridCase, tol_hull: float | None) -> list:
    """Fit envelopes for wind sites that came without one; returns the sweeps that were run."""
    runs = []
    for site in case.wind_sites:
        if site.facets is None:
            samples = sweep(site.turbine, site.layout)
            site.facets = select_facets(upper_hull_facets(samples), tol_hull)
            runs.append((site, samples))
    if runs:
        case._models.clear()
    return runs


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(cfg: RunConfig, inputs: list[Path], out: Path) -> None:
    config = cfg.as_dict()
    text = json.dumps(config, sort_keys=True)
    manifest = {
        "command": cfg.command,
        "config": config,
        "config_hash": hashlib.sha256(text.encode()).hexdigest(),
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
        "versions": {"wakesize": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    _write_json(out / "manifest.json", manifest)


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def _write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(clean(data), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _load(cfg: RunConfig):
    case_path, scen_path, held_path = resolve_inputs(cfg)
    case = load_case(case_path)
    ensure_facets(case, cfg.tol_hull)
    scen = load_scenarios(scen_path, case) if scen_path else None
    held = load_scenarios(held_path, case) if held_path else None
    return case, scen, held, [case_path, scen_path, held_path]


def _bounds(cfg: RunConfig, case: GridCase, out: Path):
    return extreme_bounds(case, node_limit=cfg.node_limit, seed=cfg.seed, cache_dir=out / "cache")


# --------------------------------------------------------------------------- commands


def cmd_wake(cfg: RunConfig) -> int:
    case_path, _, _ = resolve_inputs(cfg)
    case = load_case(case_path)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for site in case.wind_sites:
        samples = sweep(site.turbine, site.layout)
        facets = select_facets(upper_hull_facets(samples), cfg.tol_hull)
        samples.write_csv(out / f"wake_sweep_bus{site.bus}.csv")
        facets.write_csv(out / f"facets_bus{site.bus}.csv")
        log.info("bus %d: %d samples, %d facets", site.bus, len(samples), len(facets))
    write_manifest(cfg, [case_path], out)
    return 0


FRONTIER_COLUMNS = ["budget_cny", "status", "investment_cny", "fuel_objective_cny", "wind_mw", "ess_power_mw",
                    "ess_energy_mwh", "iterations"]


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return repr(float(v))


def cmd_size(cfg: RunConfig) -> int:
    case, scen, _, inputs = _load(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    bounds = _bounds(cfg, case, out)
    prob = SizingProblem(case, scen, AmbiguityConfig(cfg.eps0), bounds, g_cap=cfg.g_cap)
    budgets = sorted(cfg.budgets) if cfg.budgets else [None]
    if budgets == [None]:
        sol = algorithm2(prob, cfg.tol_x, cfg.max_iter)
        points = [FrontierPoint(None, sol.status, sol.investment, sol.fuel_objective, sol)]
    else:
        points = pareto_sweep(prob, budgets, cfg.tol_x, cfg.max_iter, jobs=cfg.jobs)
    frontier = []
    for pt in points:
        entry = {"budget_cny": pt.budget, **pt.solution.summary(), "trace": pt.solution.trace}
        if pt.solution.feasible:
            rr = round_solution(prob, pt.solution)
            entry["rounded"] = {
                "wind_mw": rr.capacity.wind, "fuel_objective_cny": rr.fuel_after,
                "relative_delta": rr.relative_delta, "extreme_lhs": rr.extreme_lhs,
                "cap_satisfied": rr.cap_satisfied, "normal_feasible": rr.normal_feasible,
            }
        frontier.append(entry)
    report = {
        "case": case.name,
        "config": cfg.solver_settings(),
        "scenarios": {"normal": len(scen.normal()), "extreme": len(scen.extreme())},
        "extreme_bounds": {"wind": bounds.wind_extreme, "demand": bounds.demand_extreme,
                           "details": bounds.details},
        "frontier": frontier,
    }
    _write_json(out / "report.json", report)
    with open(out / "frontier.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRONTIER_COLUMNS)
        for pt in points:
            s = pt.solution
            cap = s.capacity
            w.writerow([_cell(pt.budget), pt.status, _cell(s.investment), _cell(s.fuel_objective),
                        "" if cap is None else ";".join(repr(float(v)) for v in cap.wind),
                        "" if cap is None else ";".join(repr(float(v)) for v in cap.power),
                        "" if cap is None else ";".join(repr(float(v)) for v in cap.energy), s.iterations])
    write_manifest(cfg, inputs, out)
    for pt in points:
        log.info("budget %s: %s", pt.budget, pt.status)
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    case, scen, held, inputs = _load(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if held is None:
        log.warning("no held-out scenarios; tested fields are left empty")
    bounds = _bounds(cfg, case, out)
    prob = SizingProblem(case, scen, AmbiguityConfig(cfg.eps0), bounds, g_cap=cfg.g_cap)
    kinds = ["DRO"] + [k for k in cfg.baselines if k != "DRO"]
    report = EvalReport()
    for b in (sorted(cfg.budgets) or [None]):
        part, _ = compare_methods(prob.replace(budget=b), kinds, held, cfg.tol_x, cfg.max_iter)
        report.methods.extend(part.methods)
    sweep_prob = prob.replace(objective=cfg.sweep_objective)
    for knob, values in (("eps0", cfg.sweep_eps0), ("g_cap", cfg.sweep_g_cap), ("kappa", cfg.sweep_kappa)):
        if values:
            report.sweeps[knob] = sensitivity_sweep(sweep_prob, knob, values, held, cfg.tol_x, cfg.max_iter)
    _write_json(out / "eval_report.json", report.to_dict())
    report.write_comparison_csv(out / "comparison.csv")
    for knob in report.sweeps:
        report.write_sweep_csv(knob, out / f"sweep_{knob}.csv")
    write_manifest(cfg, inputs, out)
    return 0


def cmd_oracle(cfg: RunConfig) -> int:
    from . import oracles

    case, scen, _, inputs = _load(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    bounds = _bounds(cfg, case, out)
    probes = oracles.extreme_probe_ratios(case, cfg.probes, rng)
    amb = AmbiguityConfig(cfg.eps0)
    extreme = scen.extreme()
    gaps = []
    for _ in range(min(cfg.probes, 50)):
        x = oracles.random_capacity(case, rng)
        smp = oracles.sample_ball_distribution(case, extreme, x, amb, rng)
        gaps.append(oracles.ball_expectation(case, smp) - oracles.expectation_bound(case, extreme, x, amb, bounds))
    result = {
        "extreme_bounds": {"wind": bounds.wind_extreme, "demand": bounds.demand_extreme},
        "extreme_probe_max": {"wind": probes["wind"], "demand": probes["demand"]},
        "extreme_bounds_dominate": bool(np.all(probes["wind"] <= bounds.wind_extreme + 1e-6)
                                        and probes["demand"] <= bounds.demand_extreme + 1e-6),
        "expectation_bound_max_gap": max(gaps) if gaps else None,
        "expectation_bound_holds": all(g <= 1e-6 for g in gaps),
    }
    small = oracles.one_period_case(case)
    if small.model("extreme").n_vars <= 12:
        checks = []
        for _ in range(10):
            x, z, _ = oracles.random_extreme_point(small, rng)
            checks.append(oracles.shedding_vertex_check(small, x, z))
        result["vertex_check_max_error"] = max(abs(a - b) for a, b in checks)
    _write_json(out / "oracle.json", result)
    write_manifest(cfg, inputs, out)
    ok = result["extreme_bounds_dominate"] and result["expectation_bound_holds"]
    return 0 if ok else 1


COMMANDS = {"wake": cmd_wake, "size": cmd_size, "eval": cmd_eval, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = config_from_args(args)
    try:
        return COMMANDS[cfg.command](cfg)
    except (ValueError, FileNotFoundError) as exc:  # ConfigError, CaseError, ScenarioError included
        print(f"wakesize: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
