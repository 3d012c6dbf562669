"""Transmission-grid operation models for normal and extreme conditions.

Each model is stored in compact affine form::

    min  c @ y
    s.t. A1 @ y >= B1 @ x + B2 @ zeta + B3
         A2 @ y == B4 @ x + B5 @ zeta + B6

with ``y`` free.  Every bound, including simple variable bounds, is an explicit
row so that the multipliers of all constraints are available to the Lipschitz
computations.

Layouts
-------
x    : [wind capacity per wind site, ESS power per ESS site, ESS energy per ESS site]
zeta : [wind power (site-major, then period), demand (load-bus-major, then period)]
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .constants import FEAS_TOL
from .geometry import FacetSet
from .lp import INFEASIBLE, LinearProgram, LpSolution, solve_lp
from .wake import FarmLayout, TurbineSpec

NORMAL = "normal"
EXTREME = "extreme"


class CaseError(ValueError):
    """Invalid grid-case data."""


@dataclass(frozen=True)
class FuelPiece:
    slope: float  # CNY/MWh
    offset: float  # CNY


@dataclass(frozen=True)
class Generator:
    p_min: float
    p_max: float
    ramp_down: float  # MW/h, magnitude of the allowed decrease
    ramp_up: float  # MW/h
    fuel: tuple[FuelPiece, ...]


@dataclass(frozen=True)
class Bus:
    id: int
    demand_max: float = 0.0
    generator: Generator | None = None


@dataclass(frozen=True)
class Line:
    start: int
    end: int
    reactance: float
    capacity: float  # MW, inf for unlimited


@dataclass
class WindSite:
    bus: int
    cost: float  # CNY/MW
    turbine: TurbineSpec
    layout: FarmLayout
    facets: FacetSet | None = None

    @property
    def capacity_max(self) -> float:
        return self.turbine.rated_power * self.layout.rows * self.layout.max_per_row

    @property
    def column_capacity(self) -> float:
        """Capacity of one turbine in every row."""
        return self.turbine.rated_power * self.layout.rows


@dataclass(frozen=True)
class EssSite:
    bus: int
    power_max: float  # MW
    energy_max: float  # MWh
    power_cost: float  # CNY/MW
    energy_cost: float  # CNY/MWh


@dataclass
class CapacityVector:
    wind: np.ndarray
    power: np.ndarray
    energy: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.wind, self.power, self.energy]).astype(float)


@dataclass
class GridCase:
    name: str
    periods: int
    period_hours: float
    buses: list[Bus]
    lines: list[Line]
    wind_sites: list[WindSite]
    ess_sites: list[EssSite]
    eta_charge: float = 0.95
    eta_discharge: float = 0.95
    soc_min: float = 0.10
    soc_max: float = 0.90
    allow_islands: bool = False
    _models: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------ checks
    def validate(self) -> None:
        if self.periods < 1:
            raise CaseError("periods must be >= 1")
        if self.period_hours <= 0:
            raise CaseError("period_hours must be positive")
        for eta in (self.eta_charge, self.eta_discharge):
            if not (0 < eta <= 1):
                raise CaseError("efficiencies must lie in (0, 1]")
        if not (0 <= self.soc_min < self.soc_max <= 1):
            raise CaseError("need 0 <= soc_min < soc_max <= 1")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids) or not ids:
            raise CaseError("bus ids must be unique and non-empty")
        known = set(ids)
        for ln in self.lines:
            if ln.start not in known or ln.end not in known or ln.start == ln.end:
                raise CaseError(f"line {ln.start}-{ln.end} references unknown buses")
            if ln.reactance <= 0 or ln.capacity < 0:
                raise CaseError(f"line {ln.start}-{ln.end}: need reactance > 0, capacity >= 0")
        for b in self.buses:
            if b.demand_max < 0:
                raise CaseError(f"bus {b.id}: negative demand_max")
            g = b.generator
            if g is not None:
                if g.p_min > g.p_max or g.ramp_down < 0 or g.ramp_up < 0 or not g.fuel:
                    raise CaseError(f"bus {b.id}: bad generator data")
        for s in self.wind_sites:
            if s.bus not in known:
                raise CaseError(f"wind site at unknown bus {s.bus}")
        for s in self.ess_sites:
            if s.bus not in known:
                raise CaseError(f"ESS site at unknown bus {s.bus}")
        if not self.allow_islands and not self.is_connected():
            raise CaseError("network is not connected")

    def is_connected(self) -> bool:
        adj = defaultdict(set)
        for ln in self.lines:
            adj[ln.start].add(ln.end)
            adj[ln.end].add(ln.start)
        start = self.buses[0].id
        seen = {start}
        stack = [start]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(self.buses)

    # ------------------------------------------------------------------ layout
    @property
    def reference_bus(self) -> int:
        return min(b.id for b in self.buses)

    @property
    def load_buses(self) -> list[Bus]:
        return [b for b in self.buses if b.demand_max > 0]

    @property
    def n_x(self) -> int:
        return len(self.wind_sites) + 2 * len(self.ess_sites)

    @property
    def n_zeta(self) -> int:
        return (len(self.wind_sites) + len(self.load_buses)) * self.periods

    def x_upper(self) -> np.ndarray:
        return np.concatenate([
            [s.capacity_max for s in self.wind_sites],
            [s.power_max for s in self.ess_sites],
            [s.energy_max for s in self.ess_sites],
        ]).astype(float)

    def investment_costs(self, ess_scale: float = 1.0) -> np.ndarray:
        return np.concatenate([
            [s.cost for s in self.wind_sites],
            [ess_scale * s.power_cost for s in self.ess_sites],
            [ess_scale * s.energy_cost for s in self.ess_sites],
        ]).astype(float)

    def pack_x(self, wind=None, power=None, energy=None) -> np.ndarray:
        nw, ne = len(self.wind_sites), len(self.ess_sites)
        parts = [
            np.zeros(nw) if wind is None else np.asarray(wind, float).ravel(),
            np.zeros(ne) if power is None else np.asarray(power, float).ravel(),
            np.zeros(ne) if energy is None else np.asarray(energy, float).ravel(),
        ]
        if parts[0].size != nw or parts[1].size != ne or parts[2].size != ne:
            raise ValueError("capacity vector has the wrong size")
        return np.concatenate(parts)

    def unpack_x(self, x) -> CapacityVector:
        x = np.asarray(x, float)
        nw, ne = len(self.wind_sites), len(self.ess_sites)
        return CapacityVector(x[:nw], x[nw:nw + ne], x[nw + ne:nw + 2 * ne])

    def pack_zeta(self, wind=None, demand=None) -> np.ndarray:
        T = self.periods
        w = np.zeros((len(self.wind_sites), T)) if wind is None else np.asarray(wind, float)
        d = np.zeros((len(self.load_buses), T)) if demand is None else np.asarray(demand, float)
        if w.shape != (len(self.wind_sites), T) or d.shape != (len(self.load_buses), T):
            raise ValueError(f"zeta blocks have shapes {w.shape}, {d.shape}")
        return np.concatenate([w.ravel(), d.ravel()])

    def unpack_zeta(self, zeta):
        zeta = np.asarray(zeta, float)
        T = self.periods
        nw = len(self.wind_sites) * T
        return zeta[:nw].reshape(-1, T), zeta[nw:].reshape(-1, T)

    def wind_index(self, site: int, t: int) -> int:
        return site * self.periods + t

    def demand_index(self, load: int, t: int) -> int:
        return len(self.wind_sites) * self.periods + load * self.periods + t

    def demand_max_vector(self) -> np.ndarray:
        return np.repeat([b.demand_max for b in self.load_buses], self.periods).astype(float)

    def model(self, mode: str) -> "OperationModel":
        if mode not in self._models:
            self._models[mode] = build_operation_model(self, mode)
        return self._models[mode]


# --------------------------------------------------------------------------- JSON


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise CaseError(f"{where}: missing field {key!r}")
    return d[key]


def case_from_dict(data: dict, base_dir: Path | None = None) -> GridCase:
    buses = []
    for b in _req(data, "buses", "case"):
        gen = None
        if b.get("generator"):
            g = b["generator"]
            fuel = tuple(
                FuelPiece(float(_req(p, "slope_cny_per_mwh", "fuel")), float(p.get("offset_cny", 0.0)))
                for p in _req(g, "fuel", "generator")
            )
            gen = Generator(
                float(g.get("p_min_mw", 0.0)), float(_req(g, "p_max_mw", "generator")),
                float(g.get("ramp_down_mw_per_h", np.inf)), float(g.get("ramp_up_mw_per_h", np.inf)),
                fuel,
            )
        buses.append(Bus(int(_req(b, "id", "bus")), float(b.get("demand_max_mw", 0.0)), gen))
    lines = [
        Line(int(_req(ln, "from", "line")), int(_req(ln, "to", "line")),
             float(_req(ln, "reactance_pu", "line")), float(ln.get("capacity_mw", np.inf)))
        for ln in data.get("lines", [])
    ]
    wind = []
    for s in data.get("wind_sites", []):
        t = _req(s, "turbine", "wind site")
        lay = _req(s, "layout", "wind site")
        turbine = TurbineSpec(
            float(t["cut_in_mps"]), float(t["rated_mps"]), float(t["cut_out_mps"]),
            float(t["rated_power_mw"]), float(t["thrust_coefficient"]), float(t["rotor_diameter_m"]),
            float(t["hub_height_m"]), float(t["roughness_m"]),
        )
        layout = FarmLayout(
            int(lay["rows"]), float(lay["row_length_m"]), int(lay["max_per_row"]),
            float(lay["max_speed_mps"]), int(lay.get("speed_points", 60)),
        )
        facets = None
        if s.get("facets_csv"):
            path = Path(s["facets_csv"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            facets = FacetSet.read_csv(path)
        wind.append(WindSite(int(_req(s, "bus", "wind site")), float(s.get("cost_cny_per_mw", 5.5e6)),
                             turbine, layout, facets))
    ess = [
        EssSite(int(_req(s, "bus", "ESS site")), float(_req(s, "power_max_mw", "ESS site")),
                float(_req(s, "energy_max_mwh", "ESS site")), float(s.get("power_cost_cny_per_mw", 1.0e6)),
                float(s.get("energy_cost_cny_per_mwh", 1.2e6)))
        for s in data.get("ess_sites", [])
    ]
    case = GridCase(
        name=str(data.get("name", "case")),
        periods=int(data.get("periods", 24)),
        period_hours=float(data.get("period_hours", 1.0)),
        buses=buses, lines=lines, wind_sites=wind, ess_sites=ess,
        eta_charge=float(data.get("eta_charge", 0.95)),
        eta_discharge=float(data.get("eta_discharge", 0.95)),
        soc_min=float(data.get("soc_min", 0.10)),
        soc_max=float(data.get("soc_max", 0.90)),
        allow_islands=bool(data.get("allow_islands", False)),
    )
    return case


def load_case(path) -> GridCase:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"grid case not found: {path}")
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CaseError(f"{path}: invalid JSON ({exc})") from None
    return case_from_dict(data, path.parent)


# --------------------------------------------------------------------------- model


@dataclass
class OperationModel:
    mode: str
    c: np.ndarray
    A1: sp.csr_matrix
    B1: sp.csr_matrix
    B2: sp.csr_matrix
    B3: np.ndarray
    A2: sp.csr_matrix
    B4: sp.csr_matrix
    B5: sp.csr_matrix
    B6: np.ndarray
    var_index: dict
    ineq_rows: list
    eq_rows: list

    @property
    def n_vars(self) -> int:
        return self.c.size

    def rhs(self, x, zeta):
        x = np.asarray(x, float)
        zeta = np.asarray(zeta, float)
        return self.B1 @ x + self.B2 @ zeta + self.B3, self.B4 @ x + self.B5 @ zeta + self.B6

    def lp(self, x, zeta) -> LinearProgram:
        b1, b2 = self.rhs(x, zeta)
        n = self.n_vars
        return LinearProgram(self.c.copy(), self.A1, b1, self.A2, b2, np.full(n, -np.inf), np.full(n, np.inf))

    def gamma(self, lam, mu) -> np.ndarray:
        """Sensitivity B2^T lam + B5^T mu of the optimal value to zeta."""
        return self.B2.T @ lam + self.B5.T @ mu

    def row(self, key) -> int:
        return self._row_lookup[key]

    def __post_init__(self):
        self._row_lookup = {}
        for k, key in enumerate(self.ineq_rows):
            self._row_lookup[("ineq",) + key] = k
        for k, key in enumerate(self.eq_rows):
            self._row_lookup[("eq",) + key] = k


class _Rows:
    """Accumulates sparse rows with affine right-hand sides."""

    def __init__(self):
        self.A, self.Bx, self.Bz = [], [], []
        self.const = []
        self.keys = []

    def add(self, key, coeffs: dict, const=0.0, x_terms: dict | None = None, z_terms: dict | None = None):
        r = len(self.const)
        self.keys.append(key)
        self.const.append(const)
        for j, v in coeffs.items():
            if v != 0:
                self.A.append((r, j, v))
        for j, v in (x_terms or {}).items():
            self.Bx.append((r, j, v))
        for j, v in (z_terms or {}).items():
            self.Bz.append((r, j, v))

    def mats(self, n_y, n_x, n_z):
        m = len(self.const)

        def mk(trips, ncols):
            if not trips:
                return sp.csr_matrix((m, ncols))
            r, c, v = zip(*trips)
            return sp.csr_matrix((v, (r, c)), shape=(m, ncols))

        return mk(self.A, n_y), mk(self.Bx, n_x), mk(self.Bz, n_z), np.asarray(self.const, float)


def build_operation_model(case: GridCase, mode: str) -> OperationModel:
    if mode not in (NORMAL, EXTREME):
        raise ValueError(f"mode must be {NORMAL!r} or {EXTREME!r}")
    T, dt = case.periods, case.period_hours
    idx: dict = {}

    def var(key):
        idx[key] = len(idx)
        return idx[key]

    bus_ids = [b.id for b in case.buses]
    load_pos = {b.id: k for k, b in enumerate(case.load_buses)}
    for b in case.buses:
        if b.generator is not None:
            for t in range(T):
                var(("pG", b.id, t))
                if mode == NORMAL:
                    var(("fG", b.id, t))
    for s in range(len(case.ess_sites)):
        for t in range(T):
            var(("pSC", s, t))
            var(("pSD", s, t))
            var(("e", s, t))
    for ln in range(len(case.lines)):
        for t in range(T):
            var(("pL", ln, t))
    for i in bus_ids:
        for t in range(T):
            var(("theta", i, t))
            var(("pC", i, t))
            if mode == EXTREME and i in load_pos:
                var(("pD", i, t))

    nw, ne = len(case.wind_sites), len(case.ess_sites)
    x_sp = lambda s: nw + s  # noqa: E731
    x_se = lambda s: nw + ne + s  # noqa: E731

    ge, eq = _Rows(), _Rows()
    for b in case.buses:
        g = b.generator
        if g is None:
            continue
        for t in range(T):
            p = idx[("pG", b.id, t)]
            if mode == NORMAL:
                f = idx[("fG", b.id, t)]
                for k, piece in enumerate(g.fuel):
                    ge.add(("fuel", b.id, t, k), {f: 1.0, p: -piece.slope * dt}, piece.offset)
            ge.add(("pG_lo", b.id, t), {p: 1.0}, g.p_min)
            ge.add(("pG_hi", b.id, t), {p: -1.0}, -g.p_max)
        if T >= 2:
            for t in range(T):
                prev = (t - 1) % T
                cur, old = idx[("pG", b.id, t)], idx[("pG", b.id, prev)]
                if np.isfinite(g.ramp_down):
                    ge.add(("ramp_dn", b.id, t), {cur: 1.0, old: -1.0}, -g.ramp_down * dt)
                if np.isfinite(g.ramp_up):
                    ge.add(("ramp_up", b.id, t), {cur: -1.0, old: 1.0}, -g.ramp_up * dt)

    for s, site in enumerate(case.ess_sites):
        for t in range(T):
            c, d, e = idx[("pSC", s, t)], idx[("pSD", s, t)], idx[("e", s, t)]
            ge.add(("pSC_lo", s, t), {c: 1.0})
            ge.add(("pSC_hi", s, t), {c: -1.0}, x_terms={x_sp(s): -1.0})
            ge.add(("pSD_lo", s, t), {d: 1.0})
            ge.add(("pSD_hi", s, t), {d: -1.0}, x_terms={x_sp(s): -1.0})
            ge.add(("e_lo", s, t), {e: 1.0}, x_terms={x_se(s): case.soc_min})
            ge.add(("e_hi", s, t), {e: -1.0}, x_terms={x_se(s): -case.soc_max})
            e_prev = idx[("e", s, (t - 1) % T)]
            coeffs = {e: 1.0, c: -case.eta_charge * dt, d: dt / case.eta_discharge}
            if e_prev != e:
                coeffs[e_prev] = coeffs.get(e_prev, 0.0) - 1.0
            else:
                coeffs[e] = 0.0  # a single period: the cycle leaves energy unchanged
            eq.add(("energy", s, t), coeffs)

    for k, ln in enumerate(case.lines):
        for t in range(T):
            pl = idx[("pL", k, t)]
            eq.add(("flow", k, t), {pl: 1.0, idx[("theta", ln.start, t)]: -1.0 / ln.reactance,
                                    idx[("theta", ln.end, t)]: 1.0 / ln.reactance})
            if np.isfinite(ln.capacity):
                ge.add(("pL_lo", k, t), {pl: 1.0}, -ln.capacity)
                ge.add(("pL_hi", k, t), {pl: -1.0}, -ln.capacity)
    for t in range(T):
        eq.add(("ref", case.reference_bus, t), {idx[("theta", case.reference_bus, t)]: 1.0})

    wind_at = defaultdict(list)
    for s, site in enumerate(case.wind_sites):
        wind_at[site.bus].append(s)
    ess_at = defaultdict(list)
    for s, site in enumerate(case.ess_sites):
        ess_at[site.bus].append(s)
    gen_at = {b.id for b in case.buses if b.generator is not None}

    for i in bus_ids:
        for t in range(T):
            pc = idx[("pC", i, t)]
            ge.add(("pC_lo", i, t), {pc: 1.0})
            if mode == EXTREME and i in load_pos:
                pd = idx[("pD", i, t)]
                ge.add(("pD_lo", i, t), {pd: 1.0})
                ge.add(("pD_hi", i, t), {pd: -1.0}, z_terms={case.demand_index(load_pos[i], t): -1.0})
            # injections minus withdrawals = demand - wind
            coeffs: dict = defaultdict(float)
            for k, ln in enumerate(case.lines):
                if ln.end == i:
                    coeffs[idx[("pL", k, t)]] += 1.0
                if ln.start == i:
                    coeffs[idx[("pL", k, t)]] -= 1.0
            if i in gen_at:
                coeffs[idx[("pG", i, t)]] += 1.0
            for s in ess_at[i]:
                coeffs[idx[("pSD", s, t)]] += 1.0
                coeffs[idx[("pSC", s, t)]] -= 1.0
            coeffs[pc] -= 1.0
            if mode == EXTREME and i in load_pos:
                coeffs[idx[("pD", i, t)]] += 1.0
            z = {case.wind_index(s, t): -1.0 for s in wind_at[i]}
            if i in load_pos:
                z[case.demand_index(load_pos[i], t)] = 1.0
            eq.add(("balance", i, t), dict(coeffs), z_terms=z)

    n_y = len(idx)
    c = np.zeros(n_y)
    for key, j in idx.items():
        if mode == EXTREME and key[0] == "pD":
            c[j] = dt
        if mode == NORMAL and key[0] == "fG":
            c[j] = 1.0
    A1, B1, B2, B3 = ge.mats(n_y, case.n_x, case.n_zeta)
    A2, B4, B5, B6 = eq.mats(n_y, case.n_x, case.n_zeta)
    return OperationModel(mode, c, A1, B1, B2, B3, A2, B4, B5, B6, idx, ge.keys, eq.keys)


def compact_form(case: GridCase, which: str) -> OperationModel:
    return case.model(which)


def build_constraints(case: GridCase, x, zeta, mode: str = EXTREME) -> LinearProgram:
    x = np.asarray(x, float)
    zeta = np.asarray(zeta, float)
    if x.size != case.n_x or zeta.size != case.n_zeta:
        raise ValueError(f"expected x of size {case.n_x} and zeta of size {case.n_zeta}")
    return case.model(mode).lp(x, zeta)


@dataclass
class OperationResult:
    value: float  # +inf when infeasible
    solution: LpSolution
    mode: str

    @property
    def feasible(self) -> bool:
        return self.solution.optimal


def _evaluate(case, x, zeta, mode, backend) -> OperationResult:
    lp = build_constraints(case, x, zeta, mode)
    sol = solve_lp(lp, backend)
    if sol.status == INFEASIBLE:
        return OperationResult(np.inf, sol, mode)
    if not sol.optimal:
        raise RuntimeError(f"{mode} operation LP is {sol.status}; the model is malformed")
    return OperationResult(sol.objective, sol, mode)


def eval_gN(case: GridCase, x, zeta, backend: str | None = None) -> OperationResult:
    """Minimum fuel cost with no load shedding; value is inf if infeasible."""
    return _evaluate(case, x, zeta, NORMAL, backend)


def eval_gE(case: GridCase, x, zeta, backend: str | None = None) -> OperationResult:
    """Minimum load-shedding energy in MWh."""
    res = _evaluate(case, x, zeta, EXTREME, backend)
    if not res.feasible:
        raise RuntimeError("extreme operation LP infeasible; shedding everything should always be feasible")
    return res


def check_complementarity_free(case: GridCase, x, zeta, sol: LpSolution, mode: str, tol: float = 1e-6) -> bool:
    """True if an equal-cost solution without simultaneous charge and discharge exists.

    Both flows are reduced together so that stored energy is unchanged; the
    surplus injection left by the round-trip loss is absorbed as curtailment.
    The modified point is then re-checked against every row and the objective.
    """
    model = case.model(mode)
    y = sol.y.copy()
    eta = case.eta_charge * case.eta_discharge
    for s, site in enumerate(case.ess_sites):
        for t in range(case.periods):
            c, d = model.var_index[("pSC", s, t)], model.var_index[("pSD", s, t)]
            dc = min(y[c], y[d] / eta)
            if dc <= 0:
                continue
            y[c] -= dc
            y[d] -= eta * dc
            y[model.var_index[("pC", site.bus, t)]] += dc * (1.0 - eta)
    lp = model.lp(x, zeta)
    scale = 1.0 + float(np.max(np.abs(lp.b_ineq), initial=0.0)) + float(np.max(np.abs(lp.b_eq), initial=0.0))
    if lp.max_violation(y) > max(tol, FEAS_TOL) * scale:
        return False
    if abs(lp.c @ y - sol.objective) > tol * (1.0 + abs(sol.objective)):
        return False
    for s in range(len(case.ess_sites)):
        for t in range(case.periods):
            c, d = model.var_index[("pSC", s, t)], model.var_index[("pSD", s, t)]
            if min(y[c], y[d]) > tol:
                return False
    return True
