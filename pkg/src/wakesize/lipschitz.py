"""Upper bounds on the Lipschitz constants of the operation value functions.

Extreme conditions use one LPCC per component: the KKT system of the shedding
LP is embedded and the sensitivity of the optimal value to one wind (or demand)
coordinate is maximised over every capacity and realisation in the domain.  The
LPCC is posed on a slightly shrunken box so that the duals stay bounded at
degenerate boundary points (for instance zero demand at a bus, where the
shedding bounds 0 <= p <= demand pinch together).

Normal conditions use the scenario points: for each one the largest sensitivity
over all optimal duals of the fuel-cost LP is taken.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .constants import INTERIOR_MARGIN
from .grid import EXTREME, NORMAL, GridCase, OperationModel, eval_gE, eval_gN
from .lp import ComplementarityProblem, LinearProgram, solve_lp, solve_lpcc
from .uncertainty import ScenarioSet, scenario_atoms

log = logging.getLogger(__name__)


class InfeasibleCapacity(RuntimeError):
    """The capacity vector cannot serve some normal scenario without shedding."""


@dataclass
class ComponentBound:
    value: float
    status: str  # optimal | node_limit
    nodes: int
    lower: float  # best attained value (equals value when certified)


@dataclass
class LipschitzBounds:
    wind_extreme: np.ndarray
    demand_extreme: float
    wind_normal: np.ndarray | None = None
    demand_normal: float | None = None
    details: dict = field(default_factory=dict)


# --------------------------------------------------------------------------- domain


def wind_extreme_max(case: GridCase, site: int) -> float:
    """Largest extreme wind power over all capacities of a site."""
    s = case.wind_sites[site]
    if s.facets is None or len(s.facets) == 0:
        return s.capacity_max
    F = s.facets.coeffs
    # max p  s.t.  p <= x,  p <= a1 x + a2 xi_max + a3,  0 <= x <= x_max
    A = np.vstack([[[1.0, -1.0]], np.column_stack([F[:, 0], -np.ones(len(F))])])
    b = np.concatenate([[0.0], -(F[:, 1] * s.facets.xi_max + F[:, 2])])
    lp = LinearProgram.build([0.0, -1.0], A_ineq=A, b_ineq=b, lb=[0.0, 0.0], ub=[s.capacity_max, np.inf])
    sol = solve_lp(lp)
    return max(-sol.objective, 0.0) if sol.optimal else 0.0


def lpcc_domain(case: GridCase, margin: float = INTERIOR_MARGIN):
    """Lower/upper bounds for (x, zeta) in the uniform-bound problem."""
    T = case.periods
    nw, ne = len(case.wind_sites), len(case.ess_sites)
    x_hi = case.x_upper()
    x_lo = np.zeros_like(x_hi)
    # wind capacity does not enter the operation LP; fix it
    x_hi[:nw] = 0.0
    pad = margin * x_hi
    x_lo[nw:] += pad[nw:]
    x_hi[nw:] -= pad[nw:]
    z_hi = np.concatenate([np.repeat([wind_extreme_max(case, i) for i in range(nw)], T),
                           case.demand_max_vector()])
    z_lo = margin * z_hi
    z_hi = z_hi - margin * z_hi
    return x_lo, x_hi, z_lo, z_hi


# --------------------------------------------------------------------------- LPCC


def _kkt_problem(model: OperationModel, objective_row: np.ndarray, bounds) -> ComplementarityProblem:
    """max objective_row @ (lam, mu) over primal-dual KKT points with (x, zeta) boxed."""
    x_lo, x_hi, z_lo, z_hi = bounds
    nx, nz, ny = x_lo.size, z_lo.size, model.n_vars
    m1, m2 = model.A1.shape[0], model.A2.shape[0]
    Z = sp.csr_matrix
    primal_ge = sp.hstack([-model.B1, -model.B2, model.A1, Z((m1, m1)), Z((m1, m2))], format="csr")
    primal_eq = sp.hstack([-model.B4, -model.B5, model.A2, Z((m2, m1)), Z((m2, m2))], format="csr")
    dual_eq = sp.hstack([Z((ny, nx)), Z((ny, nz)), Z((ny, ny)), model.A1.T, model.A2.T], format="csr")
    n = nx + nz + ny + m1 + m2
    c = np.zeros(n)
    c[nx + nz + ny:] = objective_row
    lb = np.concatenate([x_lo, z_lo, np.full(ny, -np.inf), np.zeros(m1), np.full(m2, -np.inf)])
    ub = np.concatenate([x_hi, z_hi, np.full(ny, np.inf), np.full(m1, np.inf), np.full(m2, np.inf)])
    lp = LinearProgram(c, primal_ge, model.B3.copy(), sp.vstack([primal_eq, dual_eq], format="csr"),
                       np.concatenate([model.B6, model.c]), lb, ub)
    pairs = [(r, nx + nz + ny + r) for r in range(m1)]
    return ComplementarityProblem(lp, pairs, maximize=True)


def _sensitivity_row(model: OperationModel, component: int, sign: float) -> np.ndarray:
    """Coefficients of sign * (B2^T lam + B5^T mu)[component] over (lam, mu)."""
    return sign * np.concatenate([model.B2[:, component].toarray().ravel(),
                                  model.B5[:, component].toarray().ravel()])


def max_sensitivity_over_optimal_duals(model, x, zeta, row: np.ndarray, value: float,
                                       backend=None, rtol: float = 1e-9) -> float:
    """max row @ (lam, mu) over the optimal dual face of the operation LP at (x, zeta)."""
    b1, b2 = model.rhs(x, zeta)
    m1, m2 = b1.size, b2.size
    A_eq = sp.hstack([model.A1.T, model.A2.T], format="csr")
    A_ge = sp.csr_matrix(np.concatenate([b1, b2])[None, :])
    lb = np.concatenate([np.zeros(m1), np.full(m2, -np.inf)])
    lp = LinearProgram(-row, A_ge, np.array([value - rtol * (1.0 + abs(value))]), A_eq, model.c.copy(),
                       lb, np.full(m1 + m2, np.inf))
    sol = solve_lp(lp, backend)
    if sol.status == "unbounded":
        return np.inf
    if not sol.optimal:
        # the face is numerically empty; fall back to the plain dual
        return -np.inf
    return -sol.objective


def _seed_incumbent(case, model, row, bounds, rng, samples, backend):
    """Best sensitivity found by sampling the domain; a valid LPCC lower bound."""
    x_lo, x_hi, z_lo, z_hi = bounds
    best = -np.inf
    corners = [(x_lo, z_lo), (x_hi, z_lo), (x_lo, z_hi), (x_hi, z_hi)]
    pts = corners + [(rng.uniform(x_lo, x_hi), rng.uniform(z_lo, z_hi)) for _ in range(samples)]
    for x, z in pts:
        res = eval_gE(case, x, z, backend)
        v = max_sensitivity_over_optimal_duals(model, x, z, row, res.value, backend)
        if np.isfinite(v):
            best = max(best, v)
    return best


def _component_bound(case, component, sign, node_limit, backend, seed, samples, margin):
    model = case.model(EXTREME)
    bounds = lpcc_domain(case, margin)
    row = _sensitivity_row(model, component, sign)
    rng = np.random.default_rng(seed)
    seed_val = _seed_incumbent(case, model, row, bounds, rng, samples, backend)
    prob = _kkt_problem(model, row, bounds)
    res = solve_lpcc(prob, node_limit=node_limit, backend=backend,
                     incumbent=seed_val if np.isfinite(seed_val) else None)
    if res.status == "unbounded":
        raise RuntimeError(f"sensitivity of component {component} is unbounded on the domain")
    if res.status == "infeasible":
        raise RuntimeError("KKT system infeasible; the shedding LP should always be solvable")
    lower = res.objective if np.isfinite(res.objective) else seed_val
    value = res.bound if res.status == "node_limit" else res.objective
    return ComponentBound(max(float(value), 0.0), res.status, res.nodes, max(float(lower), 0.0))


def extreme_bound_wind(case: GridCase, site: int, period: int = 0, node_limit: int = 20000,
                       backend=None, seed: int = 0, samples: int = 8,
                       margin: float = INTERIOR_MARGIN) -> ComponentBound:
    """Uniform bound on the shedding sensitivity to the wind power of one site.

    The model is invariant under a cyclic shift of periods, so any ``period``
    gives the same optimum.
    """
    a = case.wind_index(site, period)
    # more wind can only lower shedding; the sensitivity is -gamma_a
    return _component_bound(case, a, -1.0, node_limit, backend, seed, samples, margin)


def extreme_bound_demand(case: GridCase, node_limit: int = 20000, backend=None, seed: int = 0,
                         samples: int = 8, margin: float = INTERIOR_MARGIN, period: int = 0):
    """Uniform bound over all load buses; returns (bound, per-bus ComponentBound list)."""
    per_bus = []
    for j in range(len(case.load_buses)):
        a = case.demand_index(j, period)
        per_bus.append(_component_bound(case, a, 1.0, node_limit, backend, seed + 1 + j, samples, margin))
    value = max((cb.value for cb in per_bus), default=0.0)
    return value, per_bus


# --------------------------------------------------------------------------- cache


def case_fingerprint(case: GridCase, extra: dict | None = None) -> str:
    payload = {
        "T": case.periods, "dt": case.period_hours,
        "eta": [case.eta_charge, case.eta_discharge], "soc": [case.soc_min, case.soc_max],
        "buses": [[b.id, b.demand_max, None if b.generator is None else [
            b.generator.p_min, b.generator.p_max, b.generator.ramp_down, b.generator.ramp_up,
            [[p.slope, p.offset] for p in b.generator.fuel]]] for b in case.buses],
        "lines": [[ln.start, ln.end, ln.reactance, ln.capacity] for ln in case.lines],
        "wind": [[s.bus, s.capacity_max, None if s.facets is None else s.facets.coeffs.tolist(),
                  None if s.facets is None else s.facets.xi_max] for s in case.wind_sites],
        "ess": [[s.bus, s.power_max, s.energy_max] for s in case.ess_sites],
        "extra": extra or {},
    }
    text = json.dumps(payload, sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def _cache_dir(cache_dir) -> Path | None:
    env = os.environ.get("WAKESIZE_CACHE")
    if env:
        return Path(env)
    return None if cache_dir is None else Path(cache_dir)


def extreme_bounds(case: GridCase, node_limit: int = 20000, backend=None, seed: int = 0,
                   cache_dir=None, margin: float = INTERIOR_MARGIN) -> LipschitzBounds:
    """Uniform extreme-condition bounds for every wind site and the demand block."""
    key = case_fingerprint(case, {"node_limit": node_limit, "margin": margin, "seed": seed})
    folder = _cache_dir(cache_dir)
    path = None if folder is None else folder / f"lipschitz-{key}.json"
    if path is not None and path.is_file():
        with open(path) as fh:
            data = json.load(fh)
        return LipschitzBounds(np.array(data["wind_extreme"], float), float(data["demand_extreme"]),
                               details=data.get("details", {}))
    wind = []
    details = {"wind": [], "demand": []}
    for i in range(len(case.wind_sites)):
        cb = extreme_bound_wind(case, i, node_limit=node_limit, backend=backend, seed=seed + 101 * i,
                                margin=margin)
        wind.append(cb.value)
        details["wind"].append(cb.__dict__)
    dem, per_bus = extreme_bound_demand(case, node_limit=node_limit, backend=backend, seed=seed,
                                        margin=margin)
    details["demand"] = [cb.__dict__ for cb in per_bus]
    out = LipschitzBounds(np.array(wind, float), float(dem), details=details)
    if path is not None:
        folder.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump({"wind_extreme": out.wind_extreme.tolist(), "demand_extreme": out.demand_extreme,
                       "details": details}, fh, indent=2, sort_keys=True)
    return out


# --------------------------------------------------------------------------- normal


@dataclass
class NormalBoundDetails:
    wind_per_scenario: np.ndarray  # (n_scenarios, n_wind_sites)
    demand_per_scenario: np.ndarray  # (n_scenarios,)
    unbounded_components: list


def normal_bounds(case: GridCase, scenarios: ScenarioSet, x, use_facets: bool = True, backend=None,
                  refine: bool = True):
    """Sensitivity bounds of the fuel cost at the normal scenario points.

    For each scenario the fuel-cost LP is solved, and for every wind and demand
    coordinate the largest sensitivity over all optimal duals is found (the
    local Lipschitz constant along that coordinate).  With ``refine=False`` only
    the dual returned by the solver is used.

    Returns ``(wind_bounds, demand_bound, details)``.
    """
    model = case.model(NORMAL)
    atoms = scenario_atoms(case, scenarios, x, use_facets)
    T = case.periods
    nw, nd = len(case.wind_sites), len(case.load_buses)
    wind_s = np.zeros((len(atoms), nw))
    dem_s = np.zeros(len(atoms))
    unbounded = []
    for n, z in enumerate(atoms):
        res = eval_gN(case, x, z, backend)
        if not res.feasible:
            raise InfeasibleCapacity(f"normal scenario {scenarios.ids[n]} needs load shedding at this capacity")
        gam_hat = -model.gamma(res.solution.lam, res.solution.mu)
        for i in range(nw):
            best = max(gam_hat[case.wind_index(i, t)] for t in range(T))
            if refine:
                for t in range(T):
                    a = case.wind_index(i, t)
                    v = max_sensitivity_over_optimal_duals(
                        model, x, z, _sensitivity_row(model, a, -1.0), res.value, backend)
                    if np.isinf(v) and v > 0:
                        unbounded.append((scenarios.ids[n], "wind", i, t))
                    elif np.isfinite(v):
                        best = max(best, v)
            wind_s[n, i] = max(best, 0.0)
        best = max((abs(gam_hat[case.demand_index(j, t)]) for j in range(nd) for t in range(T)), default=0.0)
        if refine:
            for j in range(nd):
                for t in range(T):
                    a = case.demand_index(j, t)
                    v = max_sensitivity_over_optimal_duals(
                        model, x, z, _sensitivity_row(model, a, 1.0), res.value, backend)
                    if np.isinf(v) and v > 0:
                        unbounded.append((scenarios.ids[n], "demand", j, t))
                    elif np.isfinite(v):
                        best = max(best, abs(v))
        dem_s[n] = best
    if unbounded:
        log.warning("normal sensitivity unbounded at %d components (domain boundary)", len(unbounded))
    details = NormalBoundDetails(wind_s, dem_s, unbounded)
    return wind_s.max(axis=0) if len(atoms) else np.zeros(nw), float(dem_s.max(initial=0.0)), details
