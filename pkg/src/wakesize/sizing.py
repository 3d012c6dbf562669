"""Capacity sizing: the approximate master LP, the bound-update loop and the Pareto sweep."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import EXTREME, NORMAL, CapacityVector, GridCase, eval_gE, eval_gN
from .lipschitz import LipschitzBounds, normal_bounds
from .lp import INFEASIBLE, LinearProgram, LpSolution, solve_lp
from .uncertainty import AmbiguityConfig, Radii, ScenarioSet, scenario_atoms

log = logging.getLogger(__name__)

DEFAULT_G_CAP = 220.0  # MWh
MIN_FUEL = "fuel"
MIN_INVESTMENT = "investment"


@dataclass
class SizingProblem:
    """Data of one sizing run.

    ``objective="fuel"`` minimises the worst-case fuel cost under an optional
    investment budget; ``objective="investment"`` minimises investment under an
    optional fuel-cost cap.  Both keep the shedding cap ``g_cap``.
    """

    case: GridCase
    scenarios: ScenarioSet
    ambiguity: AmbiguityConfig
    extreme: LipschitzBounds
    g_cap: float = DEFAULT_G_CAP
    budget: float | None = None
    fuel_cap: float | None = None
    objective: str = MIN_FUEL
    ess_cost_scale: float = 1.0
    use_facets: bool = True

    def __post_init__(self):
        if self.g_cap < 0:
            raise ValueError("shedding cap must be nonnegative")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if self.objective not in (MIN_FUEL, MIN_INVESTMENT):
            raise ValueError(f"objective must be {MIN_FUEL!r} or {MIN_INVESTMENT!r}")
        nw = len(self.case.wind_sites)
        if np.asarray(self.extreme.wind_extreme).shape != (nw,):
            raise ValueError(f"expected {nw} extreme wind bounds")

    @property
    def normal(self) -> ScenarioSet:
        return self.scenarios.normal()

    @property
    def extreme_set(self) -> ScenarioSet:
        return self.scenarios.extreme()

    def radii(self) -> Radii:
        return self.ambiguity.radii(self.case, max(len(self.normal), 1), max(len(self.extreme_set), 1))

    def costs(self) -> np.ndarray:
        return self.case.investment_costs(self.ess_cost_scale)

    def replace(self, **changes) -> "SizingProblem":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return SizingProblem(**data)


@dataclass
class Evaluation:
    """Objective terms recomputed at a fixed capacity from the operation LPs."""

    fuel_objective: float  # CNY
    extreme_lhs: float  # left side of the shedding cap, MWh
    g_normal: np.ndarray
    g_extreme: np.ndarray
    investment: float

    @property
    def normal_feasible(self) -> bool:
        return bool(np.all(np.isfinite(self.g_normal)))


@dataclass
class SizingSolution:
    status: str  # optimal | infeasible | not_converged
    x: np.ndarray | None = None
    capacity: CapacityVector | None = None
    fuel_objective: float = np.nan
    investment: float = np.nan
    g_normal: np.ndarray | None = None  # epigraph values from the LP
    g_extreme: np.ndarray | None = None
    evaluation: Evaluation | None = None
    wind_normal_bounds: np.ndarray | None = None
    demand_normal_bound: float = 0.0
    extreme: LipschitzBounds | None = None
    iterations: int = 0
    trace: list = field(default_factory=list)
    lp_solution: LpSolution | None = None

    @property
    def feasible(self) -> bool:
        return self.x is not None

    def summary(self) -> dict:
        out = {"status": self.status, "iterations": self.iterations}
        if self.x is None:
            return out
        cap = self.capacity
        out.update(
            wind_mw=cap.wind.tolist(), ess_power_mw=cap.power.tolist(), ess_energy_mwh=cap.energy.tolist(),
            investment_cny=self.investment, fuel_objective_cny=self.fuel_objective,
            g_normal_lp=self.g_normal.tolist(), g_extreme_lp=self.g_extreme.tolist(),
            wind_normal_bounds=self.wind_normal_bounds.tolist(), demand_normal_bound=self.demand_normal_bound,
            wind_extreme_bounds=np.asarray(self.extreme.wind_extreme).tolist(),
            demand_extreme_bound=float(self.extreme.demand_extreme),
        )
        if self.evaluation is not None:
            ev = self.evaluation
            out.update(g_normal_eval=ev.g_normal.tolist(), g_extreme_eval=ev.g_extreme.tolist(),
                       extreme_lhs=ev.extreme_lhs, fuel_objective_eval=ev.fuel_objective)
        return out


# --------------------------------------------------------------------------- master LP


@dataclass
class MasterLayout:
    """Column offsets of the master LP."""

    n_x: int
    blocks: list  # (mode, scenario index, y offset, n_y, zeta-wind offset, epigraph column)
    n_vars: int
    epigraph_max: int | None = None  # column of the max variable in the robust variant

    def columns(self, mode: str) -> list[int]:
        return [b[5] for b in self.blocks if b[0] == mode]


def master_var_count(case: GridCase, n_normal: int, n_extreme: int, robust: bool = False) -> int:
    nwt = len(case.wind_sites) * case.periods
    return (case.n_x + n_normal * (case.model(NORMAL).n_vars + nwt + 1)
            + n_extreme * (case.model(EXTREME).n_vars + nwt + 1) + int(robust))


def _scenario_block(case: GridCase, mode: str, xi: np.ndarray, demand: np.ndarray, use_facets: bool):
    """Rows of one scenario copy over columns [x | y | zeta_wind | g]."""
    model = case.model(mode)
    T = case.periods
    nw = len(case.wind_sites)
    nwt = nw * T
    n_y = model.n_vars
    d = np.asarray(demand, float).ravel()
    B2w, B2d = model.B2[:, :nwt], model.B2[:, nwt:]
    B5w, B5d = model.B5[:, :nwt], model.B5[:, nwt:]

    ineq_x = [-model.B1]
    ineq_b = [-B2w]
    ineq_y = [model.A1]
    ineq_g = [sp.csr_matrix((model.A1.shape[0], 1))]
    rhs = [model.B3 + B2d @ d]

    # epigraph: g - c.y >= 0
    ineq_x.append(sp.csr_matrix((1, case.n_x)))
    ineq_y.append(sp.csr_matrix(-model.c.reshape(1, -1)))
    ineq_b.append(sp.csr_matrix((1, nwt)))
    ineq_g.append(sp.csr_matrix(np.ones((1, 1))))
    rhs.append(np.zeros(1))

    # wind rows: xi*x_i - zeta >= 0 and, per facet, a1*x_i - zeta >= -(a2*xi + a3)
    rows_x, rows_z, wrhs = [], [], []
    for i, site in enumerate(case.wind_sites):
        for t in range(T):
            col = i * T + t
            rows_x.append({i: xi[i, t]})
            rows_z.append(col)
            wrhs.append(0.0)
            if use_facets and site.facets is not None:
                for a1, a2, a3 in site.facets.coeffs:
                    rows_x.append({i: a1})
                    rows_z.append(col)
                    wrhs.append(-(a2 * xi[i, t] + a3))
    m = len(wrhs)
    if m:
        Wx = sp.lil_matrix((m, case.n_x))
        for r, terms in enumerate(rows_x):
            for j, v in terms.items():
                Wx[r, j] = v
        Wz = sp.csr_matrix((-np.ones(m), (np.arange(m), rows_z)), shape=(m, nwt))
        ineq_x.append(Wx.tocsr())
        ineq_y.append(sp.csr_matrix((m, n_y)))
        ineq_b.append(Wz)
        ineq_g.append(sp.csr_matrix((m, 1)))
        rhs.append(np.asarray(wrhs))

    ineq = (sp.vstack(ineq_x), sp.hstack([sp.vstack(ineq_y), sp.vstack(ineq_b), sp.vstack(ineq_g)]),
            np.concatenate(rhs))
    eq = (-model.B4, sp.hstack([model.A2, -B5w, sp.csr_matrix((model.A2.shape[0], 1))]),
          model.B6 + B5d @ d)
    return ineq, eq


def _assemble(prob: SizingProblem, objective_x, objective_g, extra_rows, robust: bool):
    """Stack scenario blocks; ``extra_rows(layout)`` returns global (A, b) rows."""
    case = prob.case
    nwt = len(case.wind_sites) * case.periods
    blocks = []
    offset = case.n_x
    parts = []
    for mode, subset in ((NORMAL, prob.normal), (EXTREME, prob.extreme_set)):
        for n in range(len(subset)):
            ineq, eq = _scenario_block(case, mode, subset.xi[n], subset.demand[n], prob.use_facets)
            n_y = case.model(mode).n_vars
            width = n_y + nwt + 1
            blocks.append((mode, n, offset, n_y, offset + n_y, offset + n_y + nwt))
            parts.append((offset, width, ineq, eq))
            offset += width
    n_vars = offset + int(robust)
    layout = MasterLayout(case.n_x, blocks, n_vars, offset if robust else None)

    def place(Ax, Ab, start, width):
        m = Ax.shape[0]
        pieces = [Ax]
        if start > case.n_x:
            pieces.append(sp.csr_matrix((m, start - case.n_x)))
        pieces.append(Ab)
        if n_vars - start - width > 0:
            pieces.append(sp.csr_matrix((m, n_vars - start - width)))
        return sp.hstack(pieces)

    A1 = [place(ineq[0], ineq[1], s, w) for s, w, ineq, _ in parts]
    b1 = [ineq[2] for _, _, ineq, _ in parts]
    A2 = [place(eq[0], eq[1], s, w) for s, w, _, eq in parts]
    b2 = [eq[2] for _, _, _, eq in parts]
    for A, b in extra_rows(layout):
        A1.append(sp.csr_matrix(A))
        b1.append(np.atleast_1d(b))

    c = np.zeros(n_vars)
    c[:case.n_x] = objective_x
    for col, w in objective_g(layout):
        c[col] = w
    lb = np.full(n_vars, -np.inf)
    ub = np.full(n_vars, np.inf)
    lb[:case.n_x] = 0.0
    ub[:case.n_x] = case.x_upper()
    for b in blocks:
        lb[b[4]:b[4] + nwt] = 0.0
    lp = LinearProgram.build(c, sp.vstack(A1).tocsr(), np.concatenate(b1),
                             sp.vstack(A2).tocsr() if A2 else None,
                             np.concatenate(b2) if b2 else None, lb, ub)
    return lp, layout


def _row(n_vars, entries: dict):
    r = np.zeros((1, n_vars))
    for j, v in entries.items():
        r[0, j] += v
    return r


def _extreme_terms(prob: SizingProblem, radii: Radii):
    """Wind coefficients and constant of the shedding-cap row."""
    nw = len(prob.case.wind_sites)
    coef = np.zeros(prob.case.n_x)
    coef[:nw] = radii.wind_extreme * np.asarray(prob.extreme.wind_extreme, float)
    return coef, radii.demand_extreme * float(prob.extreme.demand_extreme)


def _normal_terms(prob: SizingProblem, radii: Radii, wind_normal, demand_normal):
    nw = len(prob.case.wind_sites)
    coef = np.zeros(prob.case.n_x)
    coef[:nw] = radii.wind_normal * np.asarray(wind_normal, float)
    return coef, radii.demand_normal * float(demand_normal)


def build_master_lp(prob: SizingProblem, wind_normal, demand_normal):
    """Master LP for given normal-condition bounds; returns ``(lp, layout, constant)``.

    ``constant`` is the demand radius term that the fuel objective adds on top
    of the LP objective.
    """
    case = prob.case
    nw = len(case.wind_sites)
    wind_normal = np.asarray(wind_normal, float)
    if wind_normal.shape != (nw,):
        raise ValueError(f"expected {nw} normal wind bounds, got shape {wind_normal.shape}")
    if np.any(wind_normal < 0) or demand_normal < 0:
        raise ValueError("Lipschitz bounds must be nonnegative")
    radii = prob.radii()
    n_norm, n_ext = len(prob.normal), len(prob.extreme_set)
    fuel_x, fuel_const = _normal_terms(prob, radii, wind_normal, demand_normal)
    ext_x, ext_const = _extreme_terms(prob, radii)
    costs = prob.costs()

    def fuel_entries(layout):
        e = {j: v for j, v in enumerate(fuel_x) if v}
        for col in layout.columns(NORMAL):
            e[col] = e.get(col, 0.0) + 1.0 / n_norm
        return e

    def extra_rows(layout):
        n = layout.n_vars
        rows = []
        if prob.budget is not None:
            rows.append((_row(n, {j: -v for j, v in enumerate(costs)}), -prob.budget))
        e = {j: -v for j, v in enumerate(ext_x) if v}
        for col in layout.columns(EXTREME):
            e[col] = -1.0 / n_ext
        rows.append((_row(n, e), -(prob.g_cap - ext_const)))
        if prob.fuel_cap is not None:
            rows.append((_row(n, {j: -v for j, v in fuel_entries(layout).items()}),
                         -(prob.fuel_cap - fuel_const)))
        return rows

    if prob.objective == MIN_FUEL:
        lp, layout = _assemble(prob, fuel_x, lambda lay: [(c, 1.0 / n_norm) for c in lay.columns(NORMAL)],
                               extra_rows, robust=False)
    else:
        lp, layout = _assemble(prob, costs, lambda lay: [], extra_rows, robust=False)
    return lp, layout, fuel_const


def build_robust_lp(prob: SizingProblem):
    """Epigraph LP: minimise the largest normal fuel cost, every extreme scenario within the cap."""
    costs = prob.costs()

    def extra_rows(layout):
        n = layout.n_vars
        rows = []
        if prob.budget is not None:
            rows.append((_row(n, {j: -v for j, v in enumerate(costs)}), -prob.budget))
        for col in layout.columns(NORMAL):
            rows.append((_row(n, {layout.epigraph_max: 1.0, col: -1.0}), 0.0))
        for col in layout.columns(EXTREME):
            rows.append((_row(n, {col: -1.0}), -prob.g_cap))
        return rows

    def obj_g(layout):
        return [(layout.epigraph_max, 1.0)]

    return _assemble(prob, np.zeros(prob.case.n_x), obj_g, extra_rows, robust=True)


# --------------------------------------------------------------------------- evaluation


def evaluate_at(prob: SizingProblem, x, wind_normal, demand_normal, backend=None) -> Evaluation:
    """Recompute the fuel objective and the shedding-cap left side at fixed ``x``.

    Available wind enters at its upper bound; curtailment makes that equivalent
    to optimising the wind variables.
    """
    case = prob.case
    x = np.asarray(x, float)
    radii = prob.radii()
    gN = np.array([eval_gN(case, x, z, backend).value
                   for z in scenario_atoms(case, prob.normal, x, prob.use_facets)])
    gE = np.array([eval_gE(case, x, z, backend).value
                   for z in scenario_atoms(case, prob.extreme_set, x, prob.use_facets)])
    fx, fc = _normal_terms(prob, radii, wind_normal, demand_normal)
    ex, ec = _extreme_terms(prob, radii)
    fuel = float(fx @ x + fc + (gN.mean() if gN.size else 0.0))
    lhs = float(ex @ x + ec + (gE.mean() if gE.size else 0.0))
    return Evaluation(fuel, lhs, gN, gE, float(prob.costs() @ x))


def _finish(prob, lp, layout, sol, wind_normal, demand_normal, const, backend, evaluate=True) -> SizingSolution:
    case = prob.case
    x = np.clip(sol.y[:case.n_x], 0.0, case.x_upper())
    gN = sol.y[layout.columns(NORMAL)]
    gE = sol.y[layout.columns(EXTREME)]
    radii = prob.radii()
    fx, fc = _normal_terms(prob, radii, wind_normal, demand_normal)
    fuel = float(fx @ x + fc + (gN.mean() if gN.size else 0.0))
    ev = evaluate_at(prob, x, wind_normal, demand_normal, backend) if evaluate else None
    return SizingSolution(
        "optimal", x, case.unpack_x(x), fuel, float(prob.costs() @ x), gN, gE, ev,
        np.asarray(wind_normal, float).copy(), float(demand_normal), prob.extreme, lp_solution=sol,
    )


def solve_master(prob: SizingProblem, wind_normal, demand_normal, backend=None, evaluate=True) -> SizingSolution:
    lp, layout, const = build_master_lp(prob, wind_normal, demand_normal)
    sol = solve_lp(lp, backend)
    if sol.status == INFEASIBLE:
        return SizingSolution(INFEASIBLE, extreme=prob.extreme)
    if not sol.optimal:
        raise RuntimeError(f"master LP is {sol.status}")
    return _finish(prob, lp, layout, sol, wind_normal, demand_normal, const, backend, evaluate)


def solve_robust(prob: SizingProblem, backend=None) -> SizingSolution:
    lp, layout = build_robust_lp(prob)
    sol = solve_lp(lp, backend)
    nw = len(prob.case.wind_sites)
    if sol.status == INFEASIBLE:
        return SizingSolution(INFEASIBLE, extreme=prob.extreme)
    if not sol.optimal:
        raise RuntimeError(f"robust LP is {sol.status}")
    out = _finish(prob, lp, layout, sol, np.zeros(nw), 0.0, 0.0, backend)
    out.fuel_objective = float(sol.y[layout.epigraph_max])
    return out


# --------------------------------------------------------------------------- iteration


def algorithm2(prob: SizingProblem, tol_x: float = 0.1, max_iter: int = 50, backend=None) -> SizingSolution:
    """Alternate the master LP with normal-condition bound updates until x settles.

    Convergence is tested from the second solve on, so the returned solution
    always uses bounds computed at a previous iterate.
    """
    nw = len(prob.case.wind_sites)
    wind_normal, demand_normal = np.zeros(nw), 0.0
    x_prev = None
    trace = []
    sol = None
    for k in range(1, max_iter + 1):
        sol = solve_master(prob, wind_normal, demand_normal, backend, evaluate=False)
        if not sol.feasible:
            sol.iterations, sol.trace = k, trace
            return sol
        step = np.inf if x_prev is None else float(np.max(np.abs(sol.x - x_prev), initial=0.0))
        trace.append({"iteration": k, "x": sol.x.tolist(), "fuel_objective": sol.fuel_objective,
                      "investment": sol.investment, "wind_normal_bounds": wind_normal.tolist(),
                      "demand_normal_bound": demand_normal, "step": step})
        log.info("iteration %d: fuel=%.6g step=%.3g", k, sol.fuel_objective, step)
        if step <= tol_x:
            break
        wind_normal, demand_normal, _ = normal_bounds(prob.case, prob.normal, sol.x, prob.use_facets, backend)
        x_prev = sol.x
    else:
        sol.status = "not_converged"
        log.warning("bound iteration did not settle within %d iterations", max_iter)
    sol.evaluation = evaluate_at(prob, sol.x, sol.wind_normal_bounds, sol.demand_normal_bound, backend)
    sol.iterations, sol.trace = len(trace), trace
    return sol


@dataclass
class FrontierPoint:
    budget: float
    status: str
    investment: float
    fuel_objective: float
    solution: SizingSolution


def _frontier_point(prob: SizingProblem, budget: float, tol_x, max_iter, backend) -> FrontierPoint:
    sol = algorithm2(prob.replace(budget=budget, objective=MIN_FUEL), tol_x, max_iter, backend)
    return FrontierPoint(budget, sol.status, sol.investment, sol.fuel_objective, sol)


def pareto_sweep(prob: SizingProblem, budgets, tol_x: float = 0.1, max_iter: int = 50, backend=None,
                 jobs: int = 1) -> list[FrontierPoint]:
    """One bound iteration per budget; ``jobs > 1`` runs budgets in separate processes."""
    budgets = [float(b) for b in budgets]
    if any(b2 < b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError("budgets must be sorted ascending")
    args = [(prob, b, tol_x, max_iter, backend) for b in budgets]
    if jobs > 1 and len(budgets) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(budgets))) as pool:
            return list(pool.map(_frontier_point, *zip(*args)))
    return [_frontier_point(*a) for a in args]


# --------------------------------------------------------------------------- rounding


def round_capacities(x, column_capacity) -> np.ndarray:
    """Round wind capacities to the nearest whole number of turbine columns (halves round up)."""
    x = np.asarray(x, float)
    col = np.asarray(column_capacity, float)
    return np.floor(x / col + 0.5) * col


@dataclass
class RoundingReport:
    capacity: CapacityVector
    fuel_before: float
    fuel_after: float
    relative_delta: float
    extreme_lhs: float
    cap_satisfied: bool
    normal_feasible: bool


def round_solution(prob: SizingProblem, sol: SizingSolution, backend=None) -> RoundingReport:
    """Round the wind part of a solution and re-evaluate it at the bounds it was solved with."""
    case = prob.case
    nw = len(case.wind_sites)
    cols = np.array([s.column_capacity for s in case.wind_sites])
    x = sol.x.copy()
    x[:nw] = np.minimum(round_capacities(x[:nw], cols), [s.capacity_max for s in case.wind_sites])
    ev = evaluate_at(prob, x, sol.wind_normal_bounds, sol.demand_normal_bound, backend)
    before = sol.evaluation.fuel_objective if sol.evaluation else sol.fuel_objective
    delta = (ev.fuel_objective - before) / max(abs(before), 1e-12)
    log.info("rounding changed the fuel objective by %.3g%%", 100 * delta)
    return RoundingReport(case.unpack_x(x), before, ev.fuel_objective, delta, ev.extreme_lhs,
                          ev.extreme_lhs <= prob.g_cap + 1e-5, ev.normal_feasible)
