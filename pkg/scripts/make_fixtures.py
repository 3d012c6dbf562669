"""Regenerate the bundled synthetic cases under src/wakesize/data/.

Run from the repository root:  python3 scripts/make_fixtures.py
"""

import json
from pathlib import Path

import numpy as np

from wakesize.geometry import select_facets, upper_hull_facets
from wakesize.grid import load_case
from wakesize.uncertainty import ScenarioSet
from wakesize.wake import sweep

DATA = Path(__file__).resolve().parents[1] / "src" / "wakesize" / "data"

TURBINE = {
    "cut_in_mps": 3.0, "rated_mps": 12.0, "cut_out_mps": 25.0, "rated_power_mw": 2.0,
    "thrust_coefficient": 0.8, "rotor_diameter_m": 80.0, "hub_height_m": 80.0, "roughness_m": 0.1,
}


def layout(rows):
    return {"rows": rows, "row_length_m": 3000.0, "max_per_row": 15, "max_speed_mps": 25.0, "speed_points": 60}


def gen(p_min, p_max, ramp, pieces):
    out = {"p_min_mw": p_min, "p_max_mw": p_max,
           "fuel": [{"slope_cny_per_mwh": s, "offset_cny": o} for s, o in pieces]}
    if ramp is not None:
        out.update(ramp_down_mw_per_h=ramp, ramp_up_mw_per_h=ramp)
    return out


def ess(bus, p, e):
    return {"bus": bus, "power_max_mw": p, "energy_max_mwh": e,
            "power_cost_cny_per_mw": 1.0e6, "energy_cost_cny_per_mwh": 1.2e6}


def wind(bus, rows, name):
    return {"bus": bus, "cost_cny_per_mw": 5.5e6, "turbine": TURBINE, "layout": layout(rows),
            "facets_csv": f"{name}_facets_bus{bus}.csv"}


COMMON = {"periods": 4, "period_hours": 1.0, "eta_charge": 0.95, "eta_discharge": 0.95,
          "soc_min": 0.10, "soc_max": 0.90}

CASES = {
    "bus1": {
        **COMMON, "name": "bus1",
        "buses": [{"id": 1, "demand_max_mw": 120.0, "generator": gen(0.0, 100.0, 60.0, [(300.0, 0.0)])}],
        "lines": [],
        "wind_sites": [wind(1, 4, "bus1")],
        "ess_sites": [ess(1, 50.0, 200.0)],
    },
    "bus3": {
        **COMMON, "name": "bus3",
        "buses": [
            {"id": 1, "generator": gen(0.0, 110.0, 80.0, [(250.0, 0.0), (320.0, -7000.0)])},
            {"id": 2, "demand_max_mw": 100.0, "generator": gen(0.0, 70.0, 50.0, [(400.0, 0.0)])},
            {"id": 3, "demand_max_mw": 120.0},
        ],
        "lines": [
            {"from": 1, "to": 2, "reactance_pu": 0.1, "capacity_mw": 100.0},
            {"from": 1, "to": 3, "reactance_pu": 0.1, "capacity_mw": 80.0},
            {"from": 2, "to": 3, "reactance_pu": 0.1, "capacity_mw": 60.0},
        ],
        "wind_sites": [wind(3, 5, "bus3")],
        "ess_sites": [ess(3, 80.0, 300.0)],
    },
    "bus6": {
        **COMMON, "name": "bus6",
        "buses": [
            {"id": 1, "generator": gen(0.0, 250.0, None, [(200.0, 0.0), (300.0, -15000.0)])},
            {"id": 2, "demand_max_mw": 80.0, "generator": gen(20.0, 200.0, None, [(350.0, 1000.0), (450.0, -14000.0)])},
            {"id": 3, "demand_max_mw": 200.0},
            {"id": 4, "demand_max_mw": 150.0},
            {"id": 5, "demand_max_mw": 100.0, "generator": gen(0.0, 120.0, None, [(500.0, 0.0)])},
            {"id": 6, "demand_max_mw": 150.0},
        ],
        # radial feeder: keeps the shedding-sensitivity search small
        "lines": [
            {"from": 1, "to": 2, "reactance_pu": 0.10, "capacity_mw": 250.0},
            {"from": 1, "to": 3, "reactance_pu": 0.20, "capacity_mw": 250.0},
            {"from": 2, "to": 4, "reactance_pu": 0.20, "capacity_mw": 200.0},
            {"from": 4, "to": 5, "reactance_pu": 0.15, "capacity_mw": 120.0},
            {"from": 3, "to": 6, "reactance_pu": 0.25, "capacity_mw": 120.0},
        ],
        "wind_sites": [wind(4, 10, "bus6"), wind(6, 8, "bus6")],
        "ess_sites": [ess(4, 150.0, 600.0), ess(6, 150.0, 600.0)],
    },
}

# (normal, extreme) counts for training and held-out sets
COUNTS = {"bus1": ((3, 2), (6, 4)), "bus3": ((4, 2), (8, 4)), "bus6": ((8, 4), (12, 6))}

PROFILE = np.array([0.85, 1.0, 0.9, 0.7])  # within-day demand shape


def draw(case, n_normal, n_extreme, rng):
    T = case.periods
    nw, nd = len(case.wind_sites), len(case.load_buses)
    dmax = np.array([b.demand_max for b in case.load_buses])
    speeds, demand, labels = [], [], []
    for label, count in (("normal", n_normal), ("extreme", n_extreme)):
        for _ in range(count):
            if label == "normal":
                v = rng.uniform(6.0, 14.0, size=(nw, 1)) + rng.normal(0, 1.5, size=(nw, T))
                level = rng.uniform(0.45, 0.7, size=(nd, 1))
            else:
                v = rng.uniform(3.0, 8.0, size=(nw, 1)) + rng.normal(0, 1.0, size=(nw, T))
                level = rng.uniform(0.85, 1.0, size=(nd, 1))
            d = np.clip(level * PROFILE[None, :T] / PROFILE.max() + rng.normal(0, 0.03, size=(nd, T)), 0, 1)
            speeds.append(np.clip(v, 0.0, 24.0))
            demand.append(np.round(d * dmax[:, None], 3))
            labels.append(label)
    return np.array(speeds), np.array(demand), labels


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    for seed, (name, spec) in enumerate(CASES.items()):
        for site in spec["wind_sites"]:
            from wakesize.grid import case_from_dict

            tmp = case_from_dict({**spec, "wind_sites": [{k: v for k, v in site.items() if k != "facets_csv"}]})
            w = tmp.wind_sites[0]
            facets = select_facets(upper_hull_facets(sweep(w.turbine, w.layout)))
            facets.write_csv(DATA / site["facets_csv"])
        with open(DATA / f"{name}.json", "w") as fh:
            json.dump(spec, fh, indent=2)
            fh.write("\n")
        case = load_case(DATA / f"{name}.json")
        rng = np.random.default_rng(1000 + seed)
        (tn, te), (hn, he) = COUNTS[name]
        for suffix, (n_n, n_e) in (("scenarios", (tn, te)), ("heldout", (hn, he))):
            s, d, lab = draw(case, n_n, n_e, rng)
            ids = [f"{'n' if lbl == 'normal' else 'e'}{k}" for k, lbl in enumerate(lab)]
            ScenarioSet.from_arrays(case, s, d, lab, ids).write_csv(DATA / f"{name}_{suffix}.csv", case)
        print("wrote", name)


if __name__ == "__main__":
    main()
