"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from conftest import BUNDLED, DATA
from helpers import single_bus
from saa_oracle import saa_sizing
from test_lp import random_lpcc
from wakesize.cli import main
from wakesize.geometry import enumerate_vertices, max_envelope_error, select_facets, upper_hull_facets
from wakesize.grid import EXTREME, NORMAL, check_complementarity_free, eval_gE, eval_gN, load_case
from wakesize.lipschitz import normal_bounds
from wakesize.lp import OPTIMAL, LinearProgram, LpSolution, solve_lp, solve_lpcc
from wakesize.oracles import (ball_expectation, expectation_bound, extreme_probe_ratios, lpcc_brute_force,
                              normal_probe_ratios, random_capacity, random_extreme_point, sample_ball_distribution,
                              transport_distances)
from wakesize.sizing import MIN_INVESTMENT, SizingProblem, algorithm2, build_master_lp, solve_master
from wakesize.evaluation import run_baseline, sensitivity_sweep
from wakesize.uncertainty import AmbiguityConfig, scenario_atoms, wind_extreme_cap
from wakesize.wake import sweep

BUDGETS_6BUS = [2e8, 3e8, 4e8]

# (case, x, zeta, LpSolution, mode) of every optimal dispatch met in criteria 3 to 8
DISPATCHES = []


@pytest.fixture(autouse=True)
def no_env_cache(monkeypatch):
    monkeypatch.delenv("WAKESIZE_CACHE", raising=False)


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return report


def problem(b, eps0=0.05, **kw):
    return SizingProblem(b.case, b.scenarios, AmbiguityConfig(eps0), b.bounds, **kw)


def support_point(case, rng, x=None):
    """Random capacity and a random point of the extreme support at it."""
    if x is None:
        x, z, _ = random_extreme_point(case, rng)
        return x, z
    xw = case.unpack_x(x).wind
    caps = [wind_extreme_cap(s.facets, xw[i]) for i, s in enumerate(case.wind_sites)]
    wind = np.array([rng.uniform(0, c, case.periods) for c in caps]).reshape(len(caps), case.periods)
    demand = case.demand_max_vector() * rng.uniform(0, 1, case.demand_max_vector().size)
    return x, case.pack_zeta(wind, demand.reshape(-1, case.periods))


def record(case, x, zeta, res):
    if res.solution.optimal:
        DISPATCHES.append((case, np.asarray(x, float), np.asarray(zeta, float), res.solution, res.mode))
    return res.value


def record_master(prob, sol):
    """Scenario dispatches inside a master LP solution."""
    if not sol.feasible or sol.lp_solution is None:
        return
    case = prob.case
    nwt = len(case.wind_sites) * case.periods
    # block offsets depend only on the scenario counts
    _, layout, _ = build_master_lp(prob, np.zeros(len(case.wind_sites)), 0.0)
    y = sol.lp_solution.y
    x = y[:case.n_x]
    for mode, n, off, n_y, zw, _ in layout.blocks:
        subset = prob.normal if mode == NORMAL else prob.extreme_set
        block = y[off:off + n_y]
        zeta = case.pack_zeta(y[zw:zw + nwt].reshape(-1, case.periods), subset.demand[n])
        part = LpSolution(OPTIMAL, float(case.model(mode).c @ block), block)
        DISPATCHES.append((case, x, zeta, part, mode))


def record_operation(prob, sol):
    """Re-solved scenario dispatches at a sizing solution."""
    if not sol.feasible:
        return
    for subset, fn in ((prob.normal, eval_gN), (prob.extreme_set, eval_gE)):
        for z in scenario_atoms(prob.case, subset, sol.x, prob.use_facets):
            record(prob.case, sol.x, z, fn(prob.case, sol.x, z))


# --------------------------------------------------------------------------- 1


def test_criterion_1_wake_envelope(verdict):
    elapsed = 0.0
    problems = []
    for name in BUNDLED:
        for site in load_case(DATA / f"{name}.json").wind_sites:
            t0 = time.perf_counter()
            samples = sweep(site.turbine, site.layout)
            full = upper_hull_facets(samples)
            tol = 0.01 * samples.p_max
            chosen = select_facets(full, tol)
            elapsed += time.perf_counter() - t0
            x, xi, p = samples.points.T
            sel_env = chosen.envelope(x, xi)
            if np.any(sel_env < p - 1e-9):
                problems.append(f"{name}/bus{site.bus}: sample above the selected envelope")
            if np.max(sel_env - full.envelope(x, xi)) > tol + 1e-9:
                problems.append(f"{name}/bus{site.bus}: selected envelope exceeds hull by more than tol")
            err, _ = max_envelope_error(full, chosen.indices, enumerate_vertices(chosen.polyhedron()))
            if err > tol + 1e-9:
                problems.append(f"{name}/bus{site.bus}: recomputed error {err:.4g} > {tol:.4g}")
            decreasing = False
            for level in np.unique(xi[(xi >= 0.85) & (xi <= 1.0)]):
                q = samples.points[xi == level]
                f = q[np.argsort(q[:, 0]), 2]
                decreasing |= bool(np.any(np.diff(f) < -1e-9))
            if not decreasing:
                problems.append(f"{name}/bus{site.bus}: no falling output near rated speed")
    if elapsed >= 5.0:
        problems.append(f"runtime {elapsed:.2f} s")
    verdict(1, not problems, "; ".join(problems) or f"all sites within tolerance, {elapsed:.2f} s")


# --------------------------------------------------------------------------- 2


def random_lp(rng):
    n = int(rng.integers(2, 8))
    m1, m2 = int(rng.integers(1, 7)), int(rng.integers(0, min(n, 3)))
    y0 = rng.uniform(-1, 1, n)
    A1, A2 = rng.normal(size=(m1, n)), rng.normal(size=(m2, n))
    return LinearProgram.build(rng.normal(size=n), A1, A1 @ y0 - rng.uniform(0, 1, m1), A2, A2 @ y0,
                               lb=np.full(n, -3.0), ub=np.full(n, 3.0))


def test_criterion_2_lp_engine(verdict):
    rng = np.random.default_rng(2024)
    worst_gap = 0.0
    failures = 0
    for _ in range(200):
        lp = random_lp(rng)
        for backend in ("highs", "simplex"):
            sol = solve_lp(lp, backend)
            if not sol.optimal:
                failures += 1
                continue
            gap = abs(sol.objective - sol.dual_objective(lp)) / (1 + abs(sol.objective))
            worst_gap = max(worst_gap, gap)
    mismatches = 0
    count = 0
    for n_pairs in (0, 1, 2, 3):
        for maximize in (False, True):
            for _ in range(25):
                prob = random_lpcc(rng, n_pairs, maximize)
                status, value = lpcc_brute_force(prob)
                res = solve_lpcc(prob)
                count += 1
                if res.status != status or (status == OPTIMAL and abs(res.objective - value) > 1e-7 * (1 + abs(value))):
                    mismatches += 1
    ok = failures == 0 and worst_gap <= 1e-6 and mismatches == 0
    verdict(2, ok, f"worst relative duality gap {worst_gap:.2e} over 400 solves, "
                   f"{mismatches}/{count} LPCC mismatches, {failures} non-optimal LPs")


# --------------------------------------------------------------------------- 3


def test_criterion_3_operation_models(bundled, verdict):
    rng = np.random.default_rng(3)
    bad = []
    for name in BUNDLED:
        case = bundled(name).case
        for _ in range(100):
            x, z1 = support_point(case, rng)
            _, z2 = support_point(case, rng, x)
            a = rng.uniform()
            zm = a * z1 + (1 - a) * z2
            g1, g2, gm = (record(case, x, z, eval_gE(case, x, z)) for z in (z1, z2, zm))
            if gm > a * g1 + (1 - a) * g2 + 1e-6:
                bad.append(f"{name}: convexity")
        for _ in range(100):
            x, z = support_point(case, rng)
            base = eval_gE(case, x, z).value
            step = rng.uniform(0, 20)
            jw = case.wind_index(int(rng.integers(len(case.wind_sites))), int(rng.integers(case.periods)))
            jd = case.demand_index(int(rng.integers(len(case.load_buses))), int(rng.integers(case.periods)))
            zw, zd = z.copy(), z.copy()
            zw[jw] += step
            zd[jd] += step
            if record(case, x, zw, eval_gE(case, x, zw)) > base + 1e-6:
                bad.append(f"{name}: wind monotonicity")
            if record(case, x, zd, eval_gE(case, x, zd)) < base - 1e-6:
                bad.append(f"{name}: demand monotonicity")
    fuel_case = single_bus(demand=50.0, p_max=100.0, slope=10.0)
    z = fuel_case.pack_zeta(demand=[[50.0]])
    fuel = record(fuel_case, fuel_case.pack_x(), z, eval_gN(fuel_case, fuel_case.pack_x(), z))
    shed_case = single_bus(demand=50.0, p_max=30.0)
    z = shed_case.pack_zeta(demand=[[50.0]])
    shed = record(shed_case, shed_case.pack_x(), z, eval_gE(shed_case, shed_case.pack_x(), z))
    if abs(fuel - 500.0) > 1e-6 or abs(shed - 20.0) > 1e-6:
        bad.append(f"hand values {fuel} CNY, {shed} MWh")
    verdict(3, not bad, "; ".join(sorted(set(bad))) or "convexity and monotonicity on 100 probes per case; "
                                                       f"fuel {fuel:.6f} CNY, shedding {shed:.6f} MWh")


# --------------------------------------------------------------------------- 4


def test_criterion_4_expectation_bound(bundled, verdict):
    t0 = time.perf_counter()
    b = bundled("bus3")
    case, extreme = b.case, b.scenarios.extreme()
    amb = AmbiguityConfig(0.05)
    rng = np.random.default_rng(4)
    radii = amb.radii(case, 1, len(extreme))
    violations, outside, worst = 0, 0, -np.inf
    for _ in range(50):
        x = random_capacity(case, rng)
        sample = sample_ball_distribution(case, extreme, x, amb, rng)
        wind_d, demand_d = transport_distances(case, extreme, sample)
        xw = case.unpack_x(x).wind
        if np.any(wind_d > radii.wind_extreme * xw + 1e-7) or demand_d > radii.demand_extreme + 1e-7:
            outside += 1
            continue
        gap = ball_expectation(case, sample) - expectation_bound(case, extreme, x, amb, b.bounds)
        worst = max(worst, gap)
        violations += gap > 1e-6
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and outside == 0 and elapsed < 120
    verdict(4, ok, f"{violations} violations, {outside} samples outside the ball, largest gap {worst:.3g} MWh, "
                   f"{elapsed:.1f} s")


# --------------------------------------------------------------------------- shared solves


@pytest.fixture(scope="module")
def dro_solutions(bundled):
    out = {}
    for name in BUNDLED:
        prob = problem(bundled(name), budget=3e8)
        out[name] = (prob, algorithm2(prob))
    return out


# --------------------------------------------------------------------------- 5


def test_criterion_5_lipschitz_domination(bundled, dro_solutions, verdict):
    rng = np.random.default_rng(5)
    bad = []
    for name in BUNDLED:
        b = bundled(name)
        nw = len(b.case.wind_sites)
        ratios = extreme_probe_ratios(b.case, 100 * (nw + 1), rng)
        if np.any(ratios["wind"] > b.bounds.wind_extreme + 1e-6) or ratios["demand"] > b.bounds.demand_extreme + 1e-6:
            bad.append(f"{name} extreme")
        prob, sol = dro_solutions[name]
        wind, demand, _ = normal_bounds(b.case, prob.normal, sol.x)
        n_atoms = len(prob.normal)
        probes = normal_probe_ratios(b.case, prob.normal, sol.x, 100 * n_atoms * (nw + 1), rng, step=1e-3)
        if np.any(probes["wind"] > wind + 1e-6) or probes["demand"] > demand + 1e-6:
            bad.append(f"{name} normal")
    verdict(5, not bad, ", ".join(bad) or "extreme and normal bounds dominate every probe on all cases")


# --------------------------------------------------------------------------- 6


def test_criterion_6_saa_collapse(bundled, verdict):
    worst = 0.0
    bad = []
    for name in BUNDLED:
        b = bundled(name)
        for budget in (None, 3e8):
            prob = problem(b, eps0=0.0, budget=budget)
            sol = algorithm2(prob)
            record_master(prob, sol)
            expected = saa_sizing(b.case, b.scenarios, prob.g_cap, budget)
            rel = abs(sol.fuel_objective - expected) / abs(expected)
            worst = max(worst, rel)
            if rel > 1e-6:
                bad.append(f"{name} budget {budget}: {sol.fuel_objective} vs {expected}")
    verdict(6, not bad, "; ".join(bad) or f"largest relative difference {worst:.2e}")


# --------------------------------------------------------------------------- 7


def test_criterion_7_bound_iteration(dro_solutions, verdict):
    bad, notes = [], []
    for name, (prob, sol) in dro_solutions.items():
        record_master(prob, sol)
        record_operation(prob, sol)
        if sol.status != "optimal" or sol.iterations > 50:
            bad.append(f"{name}: {sol.status} after {sol.iterations}")
            continue
        wind, demand, _ = normal_bounds(prob.case, prob.normal, sol.x)
        again = solve_master(prob, wind, demand, evaluate=False)
        step = float(np.max(np.abs(again.x - sol.x)))
        if step > 0.1:
            bad.append(f"{name}: fixed-point step {step:.3g} MW")
        notes.append(f"{name} {sol.iterations} it")
    verdict(7, not bad, "; ".join(bad) or ", ".join(notes))


# --------------------------------------------------------------------------- 8


def test_criterion_8_method_ordering(bundled, verdict):
    b = bundled("bus6")
    rows, bad = [], []
    for budget in BUDGETS_6BUS:
        prob = problem(b, budget=budget)
        sols = {k: run_baseline(k, prob) for k in ("SP1", "SP2", "DRO", "RO")}
        for s in sols.values():
            record_master(prob, s)
        f = {k: s.fuel_objective if s.feasible else np.nan for k, s in sols.items()}
        rows.append((budget, f))
        order = [k for k in ("SP1", "SP2", "DRO", "RO") if np.isfinite(f[k])]
        for lo, hi in zip(order, order[1:]):
            if f[lo] > f[hi] * (1 + 1e-9):
                bad.append(f"budget {budget:g}: {lo} {f[lo]:.6g} > {hi} {f[hi]:.6g}")
    common = [r for r in rows if all(np.isfinite(v) for v in r[1].values())]
    if not common:
        bad.append("no budget where all four methods are feasible")
    table = "; ".join(f"{bud:.0e}: " + "/".join("inf" if not np.isfinite(v) else f"{v:.0f}" for v in f.values())
                      for bud, f in rows)
    verdict(8, not bad, ("; ".join(bad) + " | " if bad else "") + f"SP1/SP2/DRO/RO {table}")


# --------------------------------------------------------------------------- 9


SWEEPS = {"bus1": (10.0, (5.0, 10.0)), "bus3": (20.0, (10.0, 20.0)), "bus6": (80.0, (60.0, 100.0))}


def test_criterion_9_sensitivities(bundled, verdict):
    bad, notes = [], []
    for name, (cap, caps) in SWEEPS.items():
        prob = problem(bundled(name), objective=MIN_INVESTMENT, g_cap=cap)
        eps_rows = sensitivity_sweep(prob, "eps0", [0.0, 0.2])
        cap_rows = sensitivity_sweep(prob, "g_cap", list(caps))
        inv = lambda rows: [r["investment_cny"] for r in rows]  # noqa: E731
        e, g = inv(eps_rows), inv(cap_rows)
        if None in e or None in g:
            bad.append(f"{name}: infeasible cell")
            continue
        if e[0] > e[1] * (1 + 1e-9):
            bad.append(f"{name}: investment fell with eps0")
        if g[1] > g[0] * (1 + 1e-9):
            bad.append(f"{name}: investment rose with g_cap")
        notes.append(f"{name} eps0 {e[0]:.3g}->{e[1]:.3g}, g_cap {g[0]:.3g}->{g[1]:.3g}")
    verdict(9, not bad, "; ".join(bad) or "; ".join(notes))


# --------------------------------------------------------------------------- 10


def test_criterion_10_complementarity(verdict):
    failed = sum(not check_complementarity_free(case, x, z, sol, mode) for case, x, z, sol, mode in DISPATCHES)
    by_mode = {m: sum(d[4] == m for d in DISPATCHES) for m in (NORMAL, EXTREME)}
    ok = failed == 0 and len(DISPATCHES) > 0
    verdict(10, ok, f"{failed} failures over {len(DISPATCHES)} dispatches "
                    f"({by_mode[NORMAL]} normal, {by_mode[EXTREME]} extreme)")


# --------------------------------------------------------------------------- 11


def test_criterion_11_end_to_end(tmp_path, verdict):
    budgets = ",".join(f"{b:g}" for b in BUDGETS_6BUS)
    times = []
    for run in ("first", "second"):
        t0 = time.perf_counter()
        code = main(["size", "--case", "bus6", "--budgets", budgets, "--seed", "0", "--out", str(tmp_path / run)])
        times.append(time.perf_counter() - t0)
        assert code == 0
    same = all((tmp_path / "first" / f).read_bytes() == (tmp_path / "second" / f).read_bytes()
               for f in ("report.json", "frontier.csv"))
    ok = same and max(times) < 600
    verdict(11, ok, f"runs took {times[0]:.1f} s and {times[1]:.1f} s, outputs "
                    f"{'byte-identical' if same else 'differ'}")
