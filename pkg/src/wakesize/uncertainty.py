"""Scenarios, decision-dependent available wind, supports and ambiguity radii."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import FacetSet
from .grid import GridCase
from .lp import LinearProgram, solve_lp
from .wake import xi_transform

NORMAL = "normal"
EXTREME = "extreme"
SCENARIO_COLUMNS = ["scenario_id", "label", "period", "entity_id", "kind", "value"]


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioSet:
    """Per-scenario wind speeds (turned into xi) and demands.

    ``speeds`` and ``xi`` have shape (n_scenarios, n_wind_sites, T); ``demand``
    has shape (n_scenarios, n_load_buses, T).
    """

    ids: list[str]
    labels: list[str]
    speeds: np.ndarray
    xi: np.ndarray
    demand: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, label: str) -> "ScenarioSet":
        keep = [k for k, lab in enumerate(self.labels) if lab == label]
        return ScenarioSet([self.ids[k] for k in keep], [self.labels[k] for k in keep],
                           self.speeds[keep], self.xi[keep], self.demand[keep])

    def normal(self) -> "ScenarioSet":
        return self.subset(NORMAL)

    def extreme(self) -> "ScenarioSet":
        return self.subset(EXTREME)

    @classmethod
    def from_arrays(cls, case: GridCase, speeds, demand, labels, ids=None) -> "ScenarioSet":
        speeds = np.asarray(speeds, float)
        demand = np.asarray(demand, float)
        n = len(labels)
        T = case.periods
        speeds = speeds.reshape(n, len(case.wind_sites), T)
        demand = demand.reshape(n, len(case.load_buses), T)
        xi = np.zeros_like(speeds)
        for i, site in enumerate(case.wind_sites):
            xi[:, i, :] = np.vectorize(lambda v, s=site.turbine: xi_transform(v, s))(speeds[:, i, :])
        ids = [str(k) for k in range(n)] if ids is None else [str(v) for v in ids]
        out = cls(ids, list(labels), speeds, xi, demand)
        out.validate(case)
        return out

    def validate(self, case: GridCase) -> None:
        if np.any(self.speeds < 0):
            raise ScenarioError("wind speeds must be nonnegative")
        dmax = np.array([b.demand_max for b in case.load_buses])[None, :, None]
        if np.any(self.demand < 0) or np.any(self.demand > dmax + 1e-9):
            raise ScenarioError("demand outside [0, demand_max]")
        bad = set(self.labels) - {NORMAL, EXTREME}
        if bad:
            raise ScenarioError(f"unknown scenario labels {sorted(bad)}")

    def write_csv(self, path, case: GridCase) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SCENARIO_COLUMNS)
            for n, (sid, lab) in enumerate(zip(self.ids, self.labels)):
                for t in range(case.periods):
                    for i, site in enumerate(case.wind_sites):
                        w.writerow([sid, lab, t + 1, site.bus, "wind_speed", repr(float(self.speeds[n, i, t]))])
                    for j, bus in enumerate(case.load_buses):
                        w.writerow([sid, lab, t + 1, bus.id, "demand", repr(float(self.demand[n, j, t]))])


def load_scenarios(path, case: GridCase) -> ScenarioSet:
    """Read a long-format scenario CSV.

    Wind rows are keyed by the bus of the wind site, demand rows by the load bus;
    periods are numbered from 1.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    site_of = {}
    for i, s in enumerate(case.wind_sites):
        if s.bus in site_of:
            raise ScenarioError("scenario files need at most one wind site per bus")
        site_of[s.bus] = i
    load_of = {b.id: j for j, b in enumerate(case.load_buses)}
    T = case.periods
    order: list[str] = []
    labels: dict[str, str] = {}
    speeds: dict[str, np.ndarray] = {}
    demand: dict[str, np.ndarray] = {}
    seen: dict[str, set] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != SCENARIO_COLUMNS:
            raise ScenarioError(f"{path}: expected columns {SCENARIO_COLUMNS}")
        for line, row in enumerate(reader, start=2):
            sid = row["scenario_id"]
            if sid not in labels:
                order.append(sid)
                labels[sid] = row["label"]
                speeds[sid] = np.full((len(case.wind_sites), T), np.nan)
                demand[sid] = np.full((len(case.load_buses), T), np.nan)
                seen[sid] = set()
            elif labels[sid] != row["label"]:
                raise ScenarioError(f"{path}:{line}: scenario {sid} has two labels")
            t = int(row["period"]) - 1
            ent = int(row["entity_id"])
            if not 0 <= t < T:
                raise ScenarioError(f"{path}:{line}: period {t + 1} outside 1..{T}")
            key = (row["kind"], ent, t)
            if key in seen[sid]:
                raise ScenarioError(f"{path}:{line}: duplicate entry")
            seen[sid].add(key)
            if row["kind"] == "wind_speed":
                if ent not in site_of:
                    raise ScenarioError(f"{path}:{line}: no wind site at bus {ent}")
                speeds[sid][site_of[ent], t] = float(row["value"])
            elif row["kind"] == "demand":
                if ent not in load_of:
                    raise ScenarioError(f"{path}:{line}: bus {ent} is not a load bus")
                demand[sid][load_of[ent], t] = float(row["value"])
            else:
                raise ScenarioError(f"{path}:{line}: unknown kind {row['kind']!r}")
    for sid in order:
        if np.isnan(speeds[sid]).any() or np.isnan(demand[sid]).any():
            raise ScenarioError(f"{path}: scenario {sid} is missing entries")
    return ScenarioSet.from_arrays(
        case, np.array([speeds[s] for s in order]), np.array([demand[s] for s in order]),
        [labels[s] for s in order], order,
    )


# --------------------------------------------------------------------------- wind map


def available_wind(x, xi, facets: FacetSet | None):
    """Wake-limited available wind power; ``facets=None`` drops the wake envelope."""
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    cap = xi * x
    if facets is not None and len(facets):
        cap = np.minimum(cap, facets.envelope(x, xi))
    return np.maximum(cap, 0.0)


def scenario_atoms(case: GridCase, scenarios: ScenarioSet, x, use_facets: bool = True) -> np.ndarray:
    """zeta vector of every scenario at capacity ``x``; shape (n_scenarios, n_zeta)."""
    xw = case.unpack_x(x).wind
    atoms = np.zeros((len(scenarios), case.n_zeta))
    for n in range(len(scenarios)):
        wind = np.array([
            available_wind(xw[i], scenarios.xi[n, i], site.facets if use_facets else None)
            for i, site in enumerate(case.wind_sites)
        ]).reshape(len(case.wind_sites), case.periods)
        atoms[n] = case.pack_zeta(wind, scenarios.demand[n])
    return atoms


def empirical_distribution(case: GridCase, scenarios: ScenarioSet, x, use_facets: bool = True):
    """Atoms and uniform weights of the empirical distribution at ``x``."""
    atoms = scenario_atoms(case, scenarios, x, use_facets)
    if len(atoms) == 0:
        raise ScenarioError("empty scenario set")
    return atoms, np.full(len(atoms), 1.0 / len(atoms))


# --------------------------------------------------------------------------- supports


def wind_extreme_cap(site_facets: FacetSet | None, x_w: float) -> float:
    """Largest extreme-condition wind power at capacity ``x_w``."""
    cap = x_w
    if site_facets is not None and len(site_facets):
        cap = min(cap, float(site_facets.envelope(x_w, site_facets.xi_max)))
    return max(cap, 0.0)


def in_convex_hull(point, points, tol: float = 1e-7) -> bool:
    """Feasibility of point = sum_n lam_n points_n with lam on the simplex."""
    P = np.asarray(points, float)
    z = np.asarray(point, float)
    n = len(P)
    if n == 0:
        return False
    # minimise the 1-norm residual with split slacks
    d = P.shape[1]
    A_eq = sp.hstack([sp.csr_matrix(P.T), sp.eye(d), -sp.eye(d)])
    A_eq = sp.vstack([A_eq, sp.hstack([sp.csr_matrix(np.ones((1, n))), sp.csr_matrix((1, 2 * d))])])
    b_eq = np.append(z, 1.0)
    c = np.concatenate([np.zeros(n), np.ones(2 * d)])
    lp = LinearProgram.build(c, A_eq=A_eq, b_eq=b_eq, lb=np.zeros(n + 2 * d))
    sol = solve_lp(lp)
    return sol.optimal and sol.objective <= tol * (1.0 + float(np.abs(z).max(initial=0.0)))


def support_membership(point, support: str, case: GridCase, x=None, scenarios: ScenarioSet | None = None,
                       site: int | None = None, tol: float = 1e-7) -> bool:
    """Membership of ``point`` in one of the supports.

    ``support`` is one of ``wind_extreme`` and ``wind_normal`` (``point`` is the
    T-vector of wind site ``site``), or ``demand_extreme`` and ``demand_normal``
    (``point`` is the flattened demand block).
    """
    p = np.asarray(point, float).ravel()
    T = case.periods
    if support == "wind_extreme":
        xw = case.unpack_x(x).wind[site]
        cap = wind_extreme_cap(case.wind_sites[site].facets, xw)
        return p.size == T and bool(np.all(p >= -tol) and np.all(p <= cap + tol))
    if support == "demand_extreme":
        dmax = case.demand_max_vector()
        return p.size == dmax.size and bool(np.all(p >= -tol) and np.all(p <= dmax + tol))
    if support in ("wind_normal", "demand_normal"):
        if scenarios is None:
            raise ValueError("normal supports need the scenario set")
        atoms = scenario_atoms(case, scenarios, x if x is not None else np.zeros(case.n_x))
        nw = len(case.wind_sites) * T
        if support == "wind_normal":
            block = atoms[:, site * T:(site + 1) * T]
        else:
            block = atoms[:, nw:]
        return p.size == block.shape[1] and in_convex_hull(p, block, tol)
    raise ValueError(f"unknown support {support!r}")


# --------------------------------------------------------------------------- radii


@dataclass(frozen=True)
class AmbiguityConfig:
    eps0: float = 0.05

    def __post_init__(self):
        if self.eps0 < 0:
            raise ValueError("eps0 must be nonnegative")

    def wind_radius(self, n_scenarios: int, periods: int) -> float:
        return self.eps0 / n_scenarios ** (1.0 / periods)

    def demand_radius(self, n_scenarios: int, periods: int, n_load: int) -> float:
        if n_load == 0:
            return 0.0
        return n_load * self.eps0 / n_scenarios ** (1.0 / (n_load * periods))

    def radii(self, case: GridCase, n_normal: int, n_extreme: int) -> "Radii":
        T, nd, nw = case.periods, len(case.load_buses), len(case.wind_sites)
        return Radii(
            wind_extreme=np.full(nw, self.wind_radius(n_extreme, T)),
            demand_extreme=self.demand_radius(n_extreme, T, nd),
            wind_normal=np.full(nw, self.wind_radius(n_normal, T)),
            demand_normal=self.demand_radius(n_normal, T, nd),
        )


@dataclass(frozen=True)
class Radii:
    wind_extreme: np.ndarray
    demand_extreme: float
    wind_normal: np.ndarray
    demand_normal: float

    @classmethod
    def zero(cls, n_wind: int) -> "Radii":
        return cls(np.zeros(n_wind), 0.0, np.zeros(n_wind), 0.0)


# --------------------------------------------------------------------------- transport


def wasserstein_1_discrete(p_atoms, p_weights, q_atoms, q_weights, tol: float = 1e-9) -> float:
    """Optimal-transport distance between two discrete distributions, 1-norm ground cost."""
    P = np.atleast_2d(np.asarray(p_atoms, float))
    Q = np.atleast_2d(np.asarray(q_atoms, float))
    a = np.asarray(p_weights, float).ravel()
    b = np.asarray(q_weights, float).ravel()
    if len(P) != a.size or len(Q) != b.size:
        raise ValueError("atoms and weights disagree in length")
    if abs(a.sum() - b.sum()) > tol * max(1.0, a.sum()):
        raise ValueError(f"weight sums differ: {a.sum()} vs {b.sum()}")
    m, n = a.size, b.size
    cost = np.abs(P[:, None, :] - Q[None, :, :]).sum(axis=2).ravel()
    rows = sp.kron(sp.eye(m), np.ones((1, n)))
    cols = sp.kron(np.ones((1, m)), sp.eye(n))
    lp = LinearProgram.build(cost, A_eq=sp.vstack([rows, cols]), b_eq=np.concatenate([a, b]),
                             lb=np.zeros(m * n))
    sol = solve_lp(lp)
    if not sol.optimal:
        raise RuntimeError(f"transport LP {sol.status}")
    return max(sol.objective, 0.0)
