"""Jensen-wake simulation of row-structured wind farms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TurbineSpec:
    cut_in: float  # m/s
    rated: float  # m/s
    cut_out: float  # m/s
    rated_power: float  # MW
    thrust: float  # thrust coefficient, dimensionless
    rotor_diameter: float  # m
    hub_height: float  # m
    roughness: float  # m

    def __post_init__(self):
        if not (0 < self.cut_in < self.rated < self.cut_out):
            raise ValueError("need 0 < cut_in < rated < cut_out")
        if self.rated_power <= 0:
            raise ValueError("rated_power must be positive")
        if not (0 <= self.thrust <= 1):
            raise ValueError(f"thrust coefficient {self.thrust} outside [0, 1]")
        if not (self.hub_height > self.roughness > 0):
            raise ValueError("need hub_height > roughness > 0")
        if self.rotor_diameter <= 0:
            raise ValueError("rotor_diameter must be positive")

    @property
    def decay(self) -> float:
        """Wake decay constant from hub height and surface roughness."""
        return 0.5 / math.log(self.hub_height / self.roughness)


@dataclass(frozen=True)
class FarmLayout:
    rows: int
    row_length: float  # m
    max_per_row: int
    max_speed: float  # m/s
    speed_points: int = 60

    def __post_init__(self):
        if self.rows < 1:
            raise ValueError("rows must be >= 1")
        if self.max_per_row < 2:
            raise ValueError("max_per_row must be >= 2")
        if self.row_length <= 0:
            raise ValueError("row_length must be positive")
        if self.speed_points < 1:
            raise ValueError("speed_points must be >= 1")
        if self.max_speed <= 0:
            raise ValueError("max_speed must be positive")


@dataclass
class WakeSamples:
    """Simulated (capacity, xi, farm power) tuples with their bounding box."""

    points: np.ndarray  # shape (n, 3): x MW, xi, f MW
    x_max: float
    xi_max: float
    p_max: float

    def __len__(self) -> int:
        return len(self.points)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_mw", "xi", "f_mw"])
            for x, xi, f in self.points:
                w.writerow([repr(float(x)), repr(float(xi)), repr(float(f))])

    @classmethod
    def read_csv(cls, path, x_max: float, xi_max: float) -> "WakeSamples":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        pts = np.array([[float(r["x_mw"]), float(r["xi"]), float(r["f_mw"])] for r in rows])
        return cls(pts, x_max, xi_max, float(pts[:, 2].max()))


def _check_spec(spec: TurbineSpec) -> None:
    # frozen dataclasses can still be built with object.__new__; re-check the physics domain
    if spec.thrust > 1 or spec.thrust < 0:
        raise ValueError(f"thrust coefficient {spec.thrust} outside [0, 1]")
    if spec.hub_height <= spec.roughness:
        raise ValueError("hub height must exceed roughness length")


def wake_factor(spec: TurbineSpec, d: float) -> float:
    """Ratio of downstream to upstream speed at distance ``d`` behind one turbine."""
    _check_spec(spec)
    if d <= 0:
        raise ValueError("distance must be positive")
    spread = spec.rotor_diameter / (spec.rotor_diameter + 2.0 * spec.decay * d)
    return 1.0 - (1.0 - math.sqrt(1.0 - spec.thrust)) * spread**2


def downstream_speed(v1: float, spec: TurbineSpec, d: float) -> float:
    if v1 < 0:
        raise ValueError("inflow speed must be nonnegative")
    return v1 * wake_factor(spec, d)


def turbine_power(v: float, spec: TurbineSpec) -> float:
    """Single-turbine power curve in MW."""
    if v <= spec.cut_in or v > spec.cut_out:
        return 0.0
    if v <= spec.rated:
        return spec.rated_power * xi_transform(v, spec)
    return spec.rated_power


def xi_transform(v: float, spec: TurbineSpec) -> float:
    """Quadratic speed transform; not capped above rated speed."""
    if v <= spec.cut_in:
        return 0.0
    return (v * v - spec.cut_in**2) / (spec.rated**2 - spec.cut_in**2)


def farm_available_power(n_per_row: int, v_initial: float, spec: TurbineSpec, layout: FarmLayout) -> float:
    if not (1 <= n_per_row <= layout.max_per_row):
        raise ValueError(f"n_per_row={n_per_row} outside [1, {layout.max_per_row}]")
    if n_per_row == 1:
        return layout.rows * turbine_power(v_initial, spec)
    q = wake_factor(spec, layout.row_length / (n_per_row - 1))
    row = sum(turbine_power(v_initial * q**i, spec) for i in range(n_per_row))
    return layout.rows * row


def sweep(spec: TurbineSpec, layout: FarmLayout) -> WakeSamples:
    """Tabulate farm power over turbines-per-row and inflow speed.

    Rows are ordered by turbine count, then by speed.  Power is zero whenever the
    farm inflow exceeds the cut-out speed.
    """
    speeds = [layout.max_speed * k / layout.speed_points for k in range(layout.speed_points + 1)]
    unit = spec.rated_power * layout.rows
    pts = []
    for n in range(1, layout.max_per_row + 1):
        for v in speeds:
            f = 0.0 if v > spec.cut_out else farm_available_power(n, v, spec, layout)
            pts.append((unit * n, xi_transform(v, spec), f))
    pts = np.array(pts, dtype=float)
    return WakeSamples(
        pts,
        x_max=unit * layout.max_per_row,
        xi_max=xi_transform(layout.max_speed, spec),
        p_max=float(pts[:, 2].max()),
    )
