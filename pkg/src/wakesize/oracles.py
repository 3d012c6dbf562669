"""Brute-force cross-checks for the solvers, shared by the test suite and the ``oracle`` command."""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np

from .grid import EXTREME, GridCase, eval_gE, eval_gN
from .lipschitz import LipschitzBounds, lpcc_domain
from .lp import INFEASIBLE, UNBOUNDED, ComplementarityProblem, LinearProgram, _node_lp, solve_lp
from .uncertainty import AmbiguityConfig, ScenarioSet, scenario_atoms, wasserstein_1_discrete, wind_extreme_cap


# --------------------------------------------------------------------------- LP and LPCC


def lpcc_brute_force(problem: ComplementarityProblem, backend=None):
    """Optimum over every tight/zero pattern; returns ``(status, objective)``."""
    sgn = -1.0 if problem.maximize else 1.0
    base = problem.lp.copy()
    base.c = sgn * base.c
    best = np.inf
    for pattern in itertools.product((0, 1), repeat=len(problem.pairs)):
        tight = frozenset(r for (r, _), p in zip(problem.pairs, pattern) if p == 0)
        zero = frozenset(j for (_, j), p in zip(problem.pairs, pattern) if p == 1)
        sol = solve_lp(_node_lp(base, tight, zero), backend)
        if sol.status == UNBOUNDED:
            return UNBOUNDED, sgn * -np.inf
        if sol.optimal:
            best = min(best, sol.objective)
    if not np.isfinite(best):
        return INFEASIBLE, np.nan
    return "optimal", sgn * best


def lp_vertex_optimum(lp: LinearProgram, tol: float = 1e-8) -> float:
    """Minimum of ``lp`` over its vertices by enumerating active sets.

    Only for tiny, pointed problems: every choice of rows completing the
    equalities to a square system is solved directly.
    """
    n = lp.n_vars
    A_ge = lp.A_ineq.toarray()
    b_ge = lp.b_ineq.copy()
    rows, rhs = [A_ge], [b_ge]
    eye = np.eye(n)
    lo, hi = np.isfinite(lp.lb), np.isfinite(lp.ub)
    rows += [eye[lo], -eye[hi]]
    rhs += [lp.lb[lo], -lp.ub[hi]]
    G = np.vstack(rows)
    g = np.concatenate(rhs)
    E = lp.A_eq.toarray()
    e = lp.b_eq
    k = n - E.shape[0]
    best = np.inf
    for idx in itertools.combinations(range(len(G)), k):
        M = np.vstack([E, G[list(idx)]])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        y = np.linalg.solve(M, np.concatenate([e, g[list(idx)]]))
        if np.all(G @ y >= g - tol * (1 + np.abs(g))) and np.allclose(E @ y, e, atol=tol):
            best = min(best, float(lp.c @ y))
    return best


def one_period_case(case: GridCase) -> GridCase:
    """Same network with a single period, for brute-force checks."""
    return dataclasses.replace(case, periods=1, _models={})


def shedding_vertex_check(case: GridCase, x, zeta) -> tuple[float, float]:
    """(LP solver value, vertex-enumeration value) of the shedding LP of a one-period case."""
    lp = case.model(EXTREME).lp(x, zeta)
    return eval_gE(case, x, zeta).value, lp_vertex_optimum(lp)


# --------------------------------------------------------------------------- Lipschitz probes


def random_extreme_point(case: GridCase, rng):
    """Random capacity and a random point of the extreme support at that capacity."""
    x_lo, x_hi, _, _ = lpcc_domain(case, 0.0)
    x = rng.uniform(x_lo, x_hi)
    nw = len(case.wind_sites)
    x[:nw] = rng.uniform(0.0, case.x_upper()[:nw])
    caps = [wind_extreme_cap(s.facets, x[i]) for i, s in enumerate(case.wind_sites)]
    wind = np.array([rng.uniform(0.0, c, size=case.periods) for c in caps]).reshape(nw, case.periods)
    # skewed towards peak demand so that most probes shed load
    dem = (case.demand_max_vector() * rng.uniform(0.0, 1.0, case.n_zeta - nw * case.periods) ** 0.25)
    return x, case.pack_zeta(wind, dem.reshape(-1, case.periods)), caps


def extreme_probe_ratios(case: GridCase, n_probes: int, rng, backend=None) -> dict:
    """Largest finite-difference slopes of the shedding function, per wind site and for demand.

    Each probe draws two support points that differ only in one block and
    records ``|g(z1) - g(z2)| / ||z1 - z2||_1``.
    """
    nw, T = len(case.wind_sites), case.periods
    out = {"wind": np.zeros(nw), "demand": 0.0}
    for k in range(n_probes):
        x, z1, caps = random_extreme_point(case, rng)
        z2 = z1.copy()
        block = k % (nw + 1)
        if block < nw:
            sl = slice(block * T, (block + 1) * T)
            z2[sl] = rng.uniform(0.0, caps[block], size=T)
        else:
            sl = slice(nw * T, None)
            z2[sl] = case.demand_max_vector() * rng.uniform(0.0, 1.0, z1[sl].size) ** 0.25
        dist = np.abs(z1[sl] - z2[sl]).sum()
        if dist <= 1e-9:
            continue
        ratio = abs(eval_gE(case, x, z1, backend).value - eval_gE(case, x, z2, backend).value) / dist
        if block < nw:
            out["wind"][block] = max(out["wind"][block], ratio)
        else:
            out["demand"] = max(out["demand"], ratio)
    return out


def normal_probe_ratios(case: GridCase, scenarios: ScenarioSet, x, n_probes: int, rng, step: float = 1e-2,
                        use_facets: bool = True, backend=None) -> dict:
    """Finite-difference slopes of the fuel cost next to each normal atom.

    Steps go from an atom a fraction ``step`` of the way towards a random point
    of the scenario hull, within one block.
    """
    atoms = scenario_atoms(case, scenarios, x, use_facets)
    nw, T = len(case.wind_sites), case.periods
    out = {"wind": np.zeros(nw), "demand": 0.0}
    for k in range(n_probes):
        n = k % len(atoms)
        block = (k // len(atoms)) % (nw + 1)
        sl = slice(block * T, (block + 1) * T) if block < nw else slice(nw * T, None)
        w = rng.dirichlet(np.ones(len(atoms)))
        target = w @ atoms
        z2 = atoms[n].copy()
        z2[sl] += step * (target[sl] - atoms[n][sl])
        dist = np.abs(z2[sl] - atoms[n][sl]).sum()
        if dist <= 1e-9:
            continue
        g1 = eval_gN(case, x, atoms[n], backend).value
        g2 = eval_gN(case, x, z2, backend).value
        if not (np.isfinite(g1) and np.isfinite(g2)):
            continue
        ratio = abs(g2 - g1) / dist
        if block < nw:
            out["wind"][block] = max(out["wind"][block], ratio)
        else:
            out["demand"] = max(out["demand"], ratio)
    return out


# --------------------------------------------------------------------------- worst-case expectation


@dataclasses.dataclass
class BallSample:
    """A product-form distribution around the extreme scenarios.

    ``wind[i][n]`` and ``demand[n]`` hold (points, weights) of the per-scenario
    marginals.
    """

    x: np.ndarray
    wind: list
    demand: list
    wind_cost: np.ndarray  # transport cost of each wind block against its atoms
    demand_cost: float


def _shrink_towards(atom, target, budget):
    cost = np.abs(target - atom).sum()
    s = 1.0 if cost <= budget or cost == 0 else budget / cost
    return atom + s * (target - atom)


def sample_ball_distribution(case: GridCase, scenarios: ScenarioSet, x, ambiguity: AmbiguityConfig, rng,
                             n_points: int = 2) -> BallSample:
    """Random member of the extreme ambiguity set at capacity ``x``.

    Each per-scenario marginal gets ``n_points`` support points drawn in the
    support and pulled towards the atom until the coupling cost fits a random
    share of the radius.
    """
    atoms = scenario_atoms(case, scenarios, x)
    S = len(atoms)
    nw, T = len(case.wind_sites), case.periods
    radii = ambiguity.radii(case, 1, S)
    xw = case.unpack_x(x).wind
    dmax = case.demand_max_vector()
    wind, wcost = [], np.zeros(nw)
    for i in range(nw):
        cap = wind_extreme_cap(case.wind_sites[i].facets, xw[i])
        budget = rng.uniform(0, 1) * radii.wind_extreme[i] * xw[i]
        per = []
        for n in range(S):
            a = atoms[n, i * T:(i + 1) * T]
            pts = np.array([_shrink_towards(a, rng.uniform(0, cap, size=T), budget) for _ in range(n_points)])
            wts = rng.dirichlet(np.ones(n_points))
            per.append((pts, wts))
            wcost[i] += wts @ np.abs(pts - a).sum(axis=1) / S
        wind.append(per)
    budget = rng.uniform(0, 1) * radii.demand_extreme
    demand, dcost = [], 0.0
    for n in range(S):
        a = atoms[n, nw * T:]
        pts = np.array([_shrink_towards(a, rng.uniform(0, dmax), budget) for _ in range(n_points)])
        wts = rng.dirichlet(np.ones(n_points))
        demand.append((pts, wts))
        dcost += wts @ np.abs(pts - a).sum(axis=1) / S
    return BallSample(np.asarray(x, float), wind, demand, wcost, dcost)


def ball_expectation(case: GridCase, sample: BallSample, backend=None) -> float:
    """Expected shedding under the mixture of product distributions."""
    nw = len(case.wind_sites)
    S = len(sample.demand)
    total = 0.0
    for n in range(S):
        blocks = [sample.wind[i][n] for i in range(nw)] + [sample.demand[n]]
        for choice in itertools.product(*[range(len(b[1])) for b in blocks]):
            w = np.prod([b[1][c] for b, c in zip(blocks, choice)])
            wind = np.array([blocks[i][0][choice[i]] for i in range(nw)])
            z = case.pack_zeta(wind, blocks[-1][0][choice[-1]].reshape(-1, case.periods))
            total += w * eval_gE(case, sample.x, z, backend).value
    return total / S


def transport_distances(case: GridCase, scenarios: ScenarioSet, sample: BallSample) -> tuple[np.ndarray, float]:
    """Optimal-transport distance of each marginal mixture to the empirical atoms."""
    atoms = scenario_atoms(case, scenarios, sample.x)
    S = len(atoms)
    nw, T = len(case.wind_sites), case.periods

    def mixture(per):
        pts = np.vstack([p for p, _ in per])
        wts = np.concatenate([w for _, w in per]) / S
        return pts, wts

    uniform = np.full(S, 1.0 / S)
    wind = np.array([wasserstein_1_discrete(*mixture(sample.wind[i]), atoms[:, i * T:(i + 1) * T], uniform)
                     for i in range(nw)])
    demand = wasserstein_1_discrete(*mixture(sample.demand), atoms[:, nw * T:], uniform)
    return wind, demand


def expectation_bound(case: GridCase, scenarios: ScenarioSet, x, ambiguity: AmbiguityConfig,
                      bounds: LipschitzBounds, backend=None) -> float:
    """Empirical mean shedding plus the radius-times-bound terms."""
    atoms = scenario_atoms(case, scenarios, x)
    radii = ambiguity.radii(case, 1, len(atoms))
    xw = case.unpack_x(x).wind
    mean = np.mean([eval_gE(case, x, z, backend).value for z in atoms])
    return float(radii.wind_extreme * xw @ np.asarray(bounds.wind_extreme) +
                 radii.demand_extreme * bounds.demand_extreme + mean)


def random_capacity(case: GridCase, rng) -> np.ndarray:
    return rng.uniform(0.0, case.x_upper())
