"""Small hand-built cases shared by the unit tests."""

from __future__ import annotations

import itertools

import numpy as np

from wakesize.grid import case_from_dict
from wakesize.sizing import SizingProblem
from wakesize.uncertainty import AmbiguityConfig

TURBINE = {
    "cut_in_mps": 3.0, "rated_mps": 12.0, "cut_out_mps": 25.0, "rated_power_mw": 2.0,
    "thrust_coefficient": 0.8, "rotor_diameter_m": 80.0, "hub_height_m": 80.0, "roughness_m": 0.1,
}
LAYOUT = {"rows": 1, "row_length_m": 400.0, "max_per_row": 25, "max_speed_mps": 25.0, "speed_points": 10}


def generator(p_max, slope=10.0, offset=0.0, p_min=0.0, ramp=None):
    g = {"p_min_mw": p_min, "p_max_mw": p_max, "fuel": [{"slope_cny_per_mwh": slope, "offset_cny": offset}]}
    if ramp is not None:
        g.update(ramp_down_mw_per_h=ramp, ramp_up_mw_per_h=ramp)
    return g


def wind_site(bus, cost=5.5e6):
    return {"bus": bus, "cost_cny_per_mw": cost, "turbine": dict(TURBINE), "layout": dict(LAYOUT)}


def single_bus(demand=50.0, p_max=100.0, slope=10.0, periods=1, hours=1.0, wind=False, ess=False, **extra):
    """One bus with a generator, optionally a wind site and a storage site."""
    bus = {"id": 1, "demand_max_mw": demand}
    if p_max is not None:
        bus["generator"] = generator(p_max, slope)
    data = {"name": "one", "periods": periods, "period_hours": hours, "buses": [bus], "lines": [],
            "wind_sites": [wind_site(1)] if wind else [],
            "ess_sites": [{"bus": 1, "power_max_mw": 20.0, "energy_max_mwh": 40.0}] if ess else []}
    data.update(extra)
    return case_from_dict(data)


def two_bus(line_capacity=50.0, demand=100.0, p_max=1000.0, periods=1, hours=1.0, wind_bus=None):
    """Generator at bus 1 feeding a load at bus 2 over one line."""
    line = {"from": 1, "to": 2, "reactance_pu": 0.1}
    if line_capacity is not None:
        line["capacity_mw"] = line_capacity
    data = {"name": "two", "periods": periods, "period_hours": hours,
            "buses": [{"id": 1, "generator": generator(p_max)}, {"id": 2, "demand_max_mw": demand}],
            "lines": [line], "wind_sites": [wind_site(wind_bus)] if wind_bus else [], "ess_sites": []}
    return case_from_dict(data)


def supporting_upper_planes(points, tol=1e-9):
    """Upper hull facets by checking every point triple; returns sorted (a1, a2, a3) rows."""
    P = np.asarray(points, float)
    found = []
    for i, j, k in itertools.combinations(range(len(P)), 3):
        n = np.cross(P[j] - P[i], P[k] - P[i])
        if abs(n[2]) <= tol:
            continue
        if n[2] < 0:
            n = -n
        side = (P - P[i]) @ n
        if np.all(side <= tol):
            a = np.array([-n[0] / n[2], -n[1] / n[2], 0.0])
            a[2] = P[i, 2] - a[0] * P[i, 0] - a[1] * P[i, 1]
            if not any(np.allclose(a, b, atol=1e-9) for b in found):
                found.append(a)
    return np.array(sorted(map(tuple, found)))


def problem(bundled, name, eps0=0.05, **kw):
    b = bundled(name)
    return SizingProblem(b.case, b.scenarios, AmbiguityConfig(eps0), b.bounds, **kw)


def pick(scenarios, normal, extreme):
    """Subset keeping the first ``normal`` normal and ``extreme`` extreme scenarios."""
    keep, counts = [], {"normal": 0, "extreme": 0}
    for k, lab in enumerate(scenarios.labels):
        if counts[lab] < {"normal": normal, "extreme": extreme}[lab]:
            keep.append(k)
            counts[lab] += 1
    return type(scenarios)([scenarios.ids[k] for k in keep], [scenarios.labels[k] for k in keep],
                           scenarios.speeds[keep], scenarios.xi[keep], scenarios.demand[keep])
