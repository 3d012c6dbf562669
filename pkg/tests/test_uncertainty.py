import numpy as np
import pytest
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

from conftest import DATA
from helpers import single_bus
from wakesize.constants import OPT_TOL
from wakesize.geometry import FacetSet
from wakesize.grid import load_case
from wakesize.uncertainty import (AmbiguityConfig, ScenarioError, ScenarioSet, available_wind, empirical_distribution,
                                  in_convex_hull, load_scenarios, scenario_atoms, support_membership,
                                  wasserstein_1_discrete, wind_extreme_cap)


@pytest.fixture(scope="module")
def bus3():
    case = load_case(DATA / "bus3.json")
    return case, load_scenarios(DATA / "bus3_scenarios.csv", case)


# --------------------------------------------------------------------------- available wind


def test_no_capacity_no_wind(bus3):
    case, _ = bus3
    facets = case.wind_sites[0].facets
    assert available_wind(0.0, 0.7, facets) == pytest.approx(0.0, abs=1e-9)


def test_single_facet_reference_value():
    facets = FacetSet(np.array([[0.9, 50.0, 0.0]]), 200.0, 1.5, 150.0)
    # min(xi * x, 0.9 x + 50 xi) = min(50, 115)
    assert available_wind(100.0, 0.5, facets) == pytest.approx(50.0)
    assert available_wind(100.0, 0.5, None) == pytest.approx(50.0)
    assert available_wind(100.0, 1.5, facets) == pytest.approx(150.0)


@given(st.floats(0, 100), st.floats(0, 1.2), st.floats(0, 1.2), st.floats(0, 1))
def test_available_wind_concave_nondecreasing_in_speed(x_w, xi1, xi2, alpha):
    facets = load_case(DATA / "bus1.json").wind_sites[0].facets
    lo, hi = sorted((xi1, xi2))
    f = lambda xi: float(available_wind(x_w, xi, facets))  # noqa: E731
    assert f(lo) <= f(hi) + 1e-9
    assert f(alpha * lo + (1 - alpha) * hi) >= alpha * f(lo) + (1 - alpha) * f(hi) - 1e-9
    assert 0.0 <= f(hi) <= hi * x_w + 1e-9


def test_extreme_cap_is_envelope_at_top_speed():
    facets = load_case(DATA / "bus1.json").wind_sites[0].facets
    assert wind_extreme_cap(facets, 0.0) == 0.0
    assert wind_extreme_cap(None, 30.0) == 30.0
    assert wind_extreme_cap(facets, 30.0) <= 30.0 + 1e-9


# --------------------------------------------------------------------------- empirical distribution


def test_empirical_weights_sum_to_one(bus3):
    case, scen = bus3
    atoms, w = empirical_distribution(case, scen, case.pack_x(wind=[50.0]))
    assert len(atoms) == len(scen) and w.sum() == pytest.approx(1.0)


def test_atoms_move_with_capacity(bus3):
    case, scen = bus3
    a = scenario_atoms(case, scen, case.pack_x(wind=[20.0]))
    b = scenario_atoms(case, scen, case.pack_x(wind=[60.0]))
    nw = case.periods
    assert np.all(b[:, :nw] >= a[:, :nw] - 1e-9) and np.any(b[:, :nw] > a[:, :nw] + 1e-6)
    assert np.array_equal(a[:, nw:], b[:, nw:])


def test_empty_scenario_set_rejected(bus3):
    case, scen = bus3
    with pytest.raises(ScenarioError):
        empirical_distribution(case, scen.subset("nothing"), case.pack_x())


def test_normal_and_extreme_split(bus3):
    _, scen = bus3
    assert len(scen.normal()) + len(scen.extreme()) == len(scen)
    assert set(scen.normal().labels) == {"normal"}


# --------------------------------------------------------------------------- supports


def test_demand_above_maximum_is_outside(bus3):
    case, _ = bus3
    d = case.demand_max_vector()
    assert support_membership(d, "demand_extreme", case)
    bumped = d.copy()
    bumped[0] += 1.0
    assert not support_membership(bumped, "demand_extreme", case)


def test_midpoint_of_two_scenarios_is_normal(bus3):
    case, scen = bus3
    normal = scen.normal()
    x = case.pack_x(wind=[40.0])
    atoms = scenario_atoms(case, normal, x)
    T = case.periods
    mid = 0.5 * (atoms[0] + atoms[1])
    assert support_membership(mid[T:], "demand_normal", case, x, normal)
    assert support_membership(mid[:T], "wind_normal", case, x, normal, site=0)
    far = atoms[:, T:].max(axis=0) + 5.0
    assert not support_membership(far, "demand_normal", case, x, normal)


def test_wind_extreme_support(bus3):
    case, _ = bus3
    x = case.pack_x(wind=[40.0])
    cap = wind_extreme_cap(case.wind_sites[0].facets, 40.0)
    assert support_membership(np.full(case.periods, cap), "wind_extreme", case, x, site=0)
    assert not support_membership(np.full(case.periods, cap + 1.0), "wind_extreme", case, x, site=0)


def test_unknown_support_rejected(bus3):
    case, _ = bus3
    with pytest.raises(ValueError):
        support_membership(np.zeros(4), "somewhere", case)


def test_convex_hull_membership():
    square = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float)
    assert in_convex_hull([0.5, 0.5], square)
    assert not in_convex_hull([1.1, 0.5], square)
    assert not in_convex_hull([0.0, 0.0], np.zeros((0, 2)))


# --------------------------------------------------------------------------- transport


def test_two_atoms_against_one():
    assert wasserstein_1_discrete([[0.0], [2.0]], [0.5, 0.5], [[1.0]], [1.0]) == pytest.approx(1.0)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=5))
def test_distance_to_itself_is_zero(values):
    atoms = np.array(values)[:, None]
    w = np.full(len(values), 1 / len(values))
    # pairs closer than the solver's reduced-cost tolerance may keep some mass
    span = np.ptp(atoms) + 1.0
    assert wasserstein_1_discrete(atoms, w, atoms, w) == pytest.approx(0.0, abs=OPT_TOL * span)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_point_masses_give_one_norm(a, b):
    assert wasserstein_1_discrete([a], [1.0], [b], [1.0]) == pytest.approx(np.abs(np.subtract(a, b)).sum(), abs=1e-8)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.lists(st.floats(-5, 5), min_size=1, max_size=6))
def test_one_dimensional_distance_matches_scipy(u, v):
    wu = np.full(len(u), 1 / len(u))
    wv = np.full(len(v), 1 / len(v))
    ours = wasserstein_1_discrete(np.array(u)[:, None], wu, np.array(v)[:, None], wv)
    assert ours == pytest.approx(scipy.stats.wasserstein_distance(u, v), abs=OPT_TOL * (np.ptp(u + v) + 1.0))


def test_mismatched_weights_rejected():
    with pytest.raises(ValueError):
        wasserstein_1_discrete([[0.0]], [1.0], [[1.0]], [0.5])
    with pytest.raises(ValueError):
        wasserstein_1_discrete([[0.0], [1.0]], [1.0], [[1.0]], [1.0])


# --------------------------------------------------------------------------- radii


def test_zero_base_radius_gives_zero_radii(bus3):
    case, _ = bus3
    r = AmbiguityConfig(0.0).radii(case, 4, 2)
    assert np.all(r.wind_extreme == 0) and r.demand_normal == 0


def test_radius_formulas():
    cfg = AmbiguityConfig(0.1)
    assert cfg.wind_radius(16, 4) == pytest.approx(0.05)
    assert cfg.demand_radius(16, 2, 2) == pytest.approx(2 * 0.1 / 2)
    assert cfg.demand_radius(16, 2, 0) == 0.0


@given(st.floats(0, 1), st.floats(0.1, 10), st.integers(1, 50), st.integers(1, 24))
def test_radii_scale_linearly(eps0, k, n, T):
    a, b = AmbiguityConfig(eps0), AmbiguityConfig(k * eps0)
    assert b.wind_radius(n, T) == pytest.approx(k * a.wind_radius(n, T))
    assert b.demand_radius(n, T, 3) == pytest.approx(k * a.demand_radius(n, T, 3))


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        AmbiguityConfig(-0.1)


# --------------------------------------------------------------------------- scenario files


def test_scenario_csv_round_trip(tmp_path, bus3):
    case, scen = bus3
    scen.write_csv(tmp_path / "s.csv", case)
    back = load_scenarios(tmp_path / "s.csv", case)
    assert back.ids == scen.ids and back.labels == scen.labels
    assert np.array_equal(back.speeds, scen.speeds) and np.array_equal(back.demand, scen.demand)


def write_rows(path, rows):
    path.write_text("scenario_id,label,period,entity_id,kind,value\n" + "".join(r + "\n" for r in rows))


@pytest.mark.parametrize("rows", [
    ["a,normal,1,1,wind_speed,8", "a,normal,1,1,demand,10", "a,normal,1,1,demand,10"],
    ["a,normal,1,1,wind_speed,8"],
    ["a,normal,2,1,wind_speed,8", "a,normal,2,1,demand,10"],
    ["a,normal,1,1,wind_speed,8", "a,normal,1,1,demand,99"],
    ["a,odd,1,1,wind_speed,8", "a,odd,1,1,demand,10"],
    ["a,normal,1,1,wind_speed,8", "a,normal,1,1,pressure,10"],
    ["a,normal,1,1,wind_speed,8", "a,extreme,1,1,demand,10"],
    ["a,normal,1,7,wind_speed,8", "a,normal,1,1,demand,10"],
])
def test_bad_scenario_files_rejected(tmp_path, rows):
    case = single_bus(demand=50.0, wind=True)
    write_rows(tmp_path / "s.csv", rows)
    with pytest.raises(ScenarioError):
        load_scenarios(tmp_path / "s.csv", case)


def test_missing_scenario_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenarios(tmp_path / "none.csv", single_bus())


def test_scenarios_from_arrays_compute_speed_ratio():
    case = single_bus(demand=50.0, wind=True)
    scen = ScenarioSet.from_arrays(case, [[[12.0]], [[3.0]]], [[[10.0]], [[0.0]]], ["normal", "extreme"])
    assert scen.xi[:, 0, 0] == pytest.approx([1.0, 0.0])
