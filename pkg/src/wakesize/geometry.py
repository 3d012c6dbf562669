"""Upper-envelope facets of the simulated wind region and greedy facet selection.

Points live in (x, xi, p) space: capacity in MW, the dimensionless speed
transform, and farm power in MW.  A facet ``(a1, a2, a3)`` stands for the cut
``p <= a1*x + a2*xi + a3``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .constants import HULL_EPS, VERTEX_DEDUP
from .wake import WakeSamples


class DegenerateHullError(ValueError):
    pass


class UnboundedPolyhedronError(ValueError):
    pass


@dataclass
class FacetSet:
    coeffs: np.ndarray  # shape (K, 3): a1, a2, a3
    x_max: float
    xi_max: float
    p_max: float
    indices: list[int] = field(default_factory=list)  # positions in the parent set, if selected

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1, 3)
        if not self.indices:
            self.indices = list(range(len(self.coeffs)))

    def __len__(self) -> int:
        return len(self.coeffs)

    def envelope(self, x, xi):
        """Pointwise minimum over facets; +inf for an empty set."""
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if len(self.coeffs) == 0:
            return np.full(np.broadcast(x, xi).shape, np.inf)
        vals = self.coeffs[:, 0] * x[..., None] + self.coeffs[:, 1] * xi[..., None] + self.coeffs[:, 2]
        return vals.min(axis=-1)

    def subset(self, idx) -> "FacetSet":
        idx = list(idx)
        return FacetSet(self.coeffs[idx], self.x_max, self.xi_max, self.p_max,
                        [self.indices[i] for i in idx])

    def polyhedron(self) -> "Polyhedron3":
        poly = Polyhedron3.box((0.0, 0.0, 0.0), (self.x_max, self.xi_max, self.p_max))
        for a1, a2, a3 in self.coeffs:
            poly = poly.with_row((-a1, -a2, 1.0), a3)
        return poly

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "a1", "a2", "a3"])
            w.writerow(["bounds", repr(self.x_max), repr(self.xi_max), repr(self.p_max)])
            for k, (a1, a2, a3) in zip(self.indices, self.coeffs):
                w.writerow([k, repr(float(a1)), repr(float(a2)), repr(float(a3))])

    @classmethod
    def read_csv(cls, path) -> "FacetSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["k", "a1", "a2", "a3"] or rows[1][0] != "bounds":
            raise ValueError(f"{path}: not a facet CSV")
        x_max, xi_max, p_max = (float(v) for v in rows[1][1:])
        idx = [int(r[0]) for r in rows[2:]]
        coeffs = np.array([[float(v) for v in r[1:]] for r in rows[2:]]).reshape(-1, 3)
        return cls(coeffs, x_max, xi_max, p_max, idx)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FacetSet):
            return NotImplemented
        return (
            self.coeffs.shape == other.coeffs.shape
            and bool(np.array_equal(self.coeffs, other.coeffs))
            and (self.x_max, self.xi_max, self.p_max) == (other.x_max, other.xi_max, other.p_max)
            and self.indices == other.indices
        )


@dataclass
class Polyhedron3:
    """{z in R^3 : A @ z <= b}."""

    A: np.ndarray
    b: np.ndarray

    @classmethod
    def box(cls, lo, hi) -> "Polyhedron3":
        A = np.vstack([-np.eye(3), np.eye(3)])
        b = np.concatenate([-np.asarray(lo, float), np.asarray(hi, float)])
        return cls(A, b)

    def with_row(self, a, beta) -> "Polyhedron3":
        return Polyhedron3(np.vstack([self.A, np.asarray(a, float)]), np.append(self.b, float(beta)))

    def contains(self, z, tol: float = 1e-9) -> bool:
        return bool(np.all(self.A @ np.asarray(z, float) <= self.b + tol))


# --------------------------------------------------------------------------- hull


def _initial_simplex(P: np.ndarray, eps: float):
    i0 = int(np.argmin(P[:, 0]))
    d = np.linalg.norm(P - P[i0], axis=1)
    i1 = int(np.argmax(d))
    if d[i1] <= eps:
        return None
    u = (P[i1] - P[i0]) / d[i1]
    rel = P - P[i0]
    perp = rel - np.outer(rel @ u, u)
    dl = np.linalg.norm(perp, axis=1)
    i2 = int(np.argmax(dl))
    if dl[i2] <= eps:
        return None
    n = np.cross(P[i1] - P[i0], P[i2] - P[i0])
    n /= np.linalg.norm(n)
    dp = rel @ n
    i3 = int(np.argmax(np.abs(dp)))
    if abs(dp[i3]) <= eps:
        return (i0, i1, i2, None, n)
    return (i0, i1, i2, i3, n)


def convex_hull_3d(points: np.ndarray, eps: float = HULL_EPS):
    """Incremental 3-D convex hull.

    Returns ``(normals, offsets, triangles)`` with outward unit normals, so every
    input point satisfies ``normals @ z <= offsets + eps``.  Coplanar input raises
    ``DegenerateHullError`` carrying the plane as ``err.plane``.
    """
    P = np.asarray(points, dtype=float)
    init = _initial_simplex(P, eps)
    if init is None:
        raise DegenerateHullError("points are collinear")
    i0, i1, i2, i3, n = init
    if i3 is None:
        err = DegenerateHullError("points are coplanar")
        err.plane = (n, float(n @ P[i0]))
        raise err

    faces: dict[int, tuple[int, int, int]] = {}
    planes: dict[int, tuple[np.ndarray, float]] = {}
    edge_owner: dict[tuple[int, int], int] = {}
    next_id = [0]
    centroid = P[[i0, i1, i2, i3]].mean(axis=0)

    def add_face(a, b, c):
        nrm = np.cross(P[b] - P[a], P[c] - P[a])
        length = np.linalg.norm(nrm)
        nrm = nrm / length if length > 0 else nrm
        if nrm @ (centroid - P[a]) > 0:
            a, b = b, a
            nrm = -nrm
        fid = next_id[0]
        next_id[0] += 1
        faces[fid] = (a, b, c)
        planes[fid] = (nrm, float(nrm @ P[a]))
        for e in ((a, b), (b, c), (c, a)):
            edge_owner[e] = fid

    def drop_face(fid):
        a, b, c = faces.pop(fid)
        planes.pop(fid)
        for e in ((a, b), (b, c), (c, a)):
            if edge_owner.get(e) == fid:
                del edge_owner[e]

    for tri in ((i0, i1, i2), (i0, i1, i3), (i0, i2, i3), (i1, i2, i3)):
        add_face(*tri)

    skip = {i0, i1, i2, i3}
    for p in range(len(P)):
        if p in skip:
            continue
        fids = list(faces)
        N = np.array([planes[f][0] for f in fids])
        off = np.array([planes[f][1] for f in fids])
        dist = N @ P[p] - off
        visible = {fids[k] for k in np.flatnonzero(dist > eps)}
        if not visible:
            continue
        horizon = []
        for fid in visible:
            a, b, c = faces[fid]
            for e in ((a, b), (b, c), (c, a)):
                if edge_owner.get((e[1], e[0])) not in visible:
                    horizon.append(e)
        for fid in visible:
            drop_face(fid)
        for a, b in horizon:
            # keep orientation consistent with the removed visible face
            nrm = np.cross(P[b] - P[a], P[p] - P[a])
            length = np.linalg.norm(nrm)
            if length <= eps * eps:
                continue
            fid = next_id[0]
            next_id[0] += 1
            nrm = nrm / length
            faces[fid] = (a, b, p)
            planes[fid] = (nrm, float(nrm @ P[a]))
            for e in ((a, b), (b, p), (p, a)):
                edge_owner[e] = fid

    fids = sorted(faces)
    normals = np.array([planes[f][0] for f in fids])
    offsets = np.array([planes[f][1] for f in fids])
    tris = np.array([faces[f] for f in fids])
    return normals, offsets, tris


def _dedupe_facets(coeffs: np.ndarray, scale: np.ndarray) -> np.ndarray:
    if len(coeffs) == 0:
        return coeffs
    # compare facets by their values at the scaled box corners
    corners = np.array([[x, xi, 1.0] for x in (0.0, scale[0]) for xi in (0.0, scale[1])])
    vals = coeffs @ corners.T
    tol = 1e-7 * max(scale[2], 1.0)
    order = np.lexsort(coeffs.T[::-1])
    kept = []
    for k in order:
        if all(np.max(np.abs(vals[k] - vals[j])) > tol for j in kept):
            kept.append(k)
    out = coeffs[kept]
    return out[np.lexsort(out.T[::-1])]


def upper_hull_facets(samples: WakeSamples, eps: float = HULL_EPS) -> FacetSet:
    """Upper facets of the hull of the samples together with their floor projections.

    Zero-power points at zero capacity are added for every sampled speed, so the
    envelope stays non-negative all the way down to ``x = 0`` even though the
    sweep starts at one turbine column.
    """
    pts = samples.points
    xis = np.unique(pts[:, 1])
    anchors = np.column_stack([np.zeros(len(xis)), xis, np.zeros(len(xis))])
    cloud = np.vstack([pts, np.column_stack([pts[:, 0], pts[:, 1], np.zeros(len(pts))]), anchors])
    cloud = np.unique(cloud, axis=0)
    lo = cloud.min(axis=0)
    span = cloud.max(axis=0) - lo
    span[span == 0] = 1.0
    scaled = (cloud - lo) / span
    try:
        normals, offsets, _ = convex_hull_3d(scaled, eps)
    except DegenerateHullError as err:
        if not hasattr(err, "plane"):
            raise
        n, c = err.plane
        if abs(n[2]) <= 1e-9:
            raise DegenerateHullError("coplanar samples on a vertical plane; no upper facet") from None
        normals, offsets = n[None, :] * np.sign(n[2]), np.array([c * np.sign(n[2])])
    upper = normals[:, 2] > 1e-7
    n = normals[upper]
    c = offsets[upper]
    # back to original coordinates: n . (z - lo)/span <= c
    ns = n / span
    cs = c + ns @ lo
    coeffs = np.column_stack([-ns[:, 0] / ns[:, 2], -ns[:, 1] / ns[:, 2], cs / ns[:, 2]])
    coeffs = _dedupe_facets(coeffs, np.array([samples.x_max, samples.xi_max, samples.p_max]))
    if len(coeffs) == 0:
        raise DegenerateHullError("hull has no upper facet")
    return FacetSet(coeffs, samples.x_max, samples.xi_max, samples.p_max)


# --------------------------------------------------------------------------- vertices


def enumerate_vertices(poly: Polyhedron3, eps: float = 1e-9) -> np.ndarray:
    """All vertices of a bounded polyhedron by the double description method.

    The polyhedron is homogenised to the cone {(z, t): A z - b t <= 0, t >= 0};
    extreme rays with t > 0 are the vertices.  Rows are processed one at a time
    and adjacent ray pairs straddling the new row are combined.
    """
    A = np.asarray(poly.A, float)
    b = np.asarray(poly.b, float)
    H = np.vstack([np.column_stack([A, -b]), [0.0, 0.0, 0.0, -1.0]])
    norms = np.linalg.norm(H, axis=1)
    keep = norms > 0
    if np.any(~keep & (np.append(b, 0.0) < -eps)):
        return np.zeros((0, 3))  # a row 0 <= negative
    H = H[keep] / norms[keep, None]
    m = len(H)
    if np.linalg.matrix_rank(H, tol=1e-10) < 4:
        raise UnboundedPolyhedronError("polyhedron contains a line")

    # four independent rows, taking the t >= 0 row first
    order = [m - 1] + list(range(m - 1))
    basis_rows = []
    for r in order:
        trial = basis_rows + [r]
        if np.linalg.matrix_rank(H[trial], tol=1e-10) == len(trial):
            basis_rows = trial
        if len(basis_rows) == 4:
            break
    rays = -np.linalg.inv(H[basis_rows])  # columns are the extreme rays
    rays = (rays / np.linalg.norm(rays, axis=0)).T
    processed = list(basis_rows)

    def active_mask(R, rows):
        vals = R @ H[rows].T
        masks = []
        for v in vals:
            m_ = 0
            for k, r in enumerate(rows):
                if abs(v[k]) <= eps:
                    m_ |= 1 << r
            masks.append(m_)
        return masks

    masks = active_mask(rays, processed)
    for r in order:
        if r in processed:
            continue
        vals = rays @ H[r]
        pos = np.flatnonzero(vals > eps)
        neg = np.flatnonzero(vals < -eps)
        zero = np.flatnonzero(np.abs(vals) <= eps)
        new_rays = [rays[k] for k in neg] + [rays[k] for k in zero]
        new_masks = [masks[k] for k in neg] + [masks[k] | (1 << r) for k in zero]
        for i in pos:
            for j in neg:
                common = masks[i] & masks[j]
                if bin(common).count("1") < 2:
                    continue
                adjacent = True
                for k in range(len(rays)):
                    if k != i and k != j and (masks[k] & common) == common:
                        adjacent = False
                        break
                if not adjacent:
                    continue
                w = vals[i] * rays[j] - vals[j] * rays[i]
                w /= np.linalg.norm(w)
                new_rays.append(w)
                new_masks.append(common | (1 << r))
        processed.append(r)
        if not new_rays:
            return np.zeros((0, 3))
        rays = np.array(new_rays)
        # recompute masks from geometry to absorb rounding in the combinations
        masks = active_mask(rays, processed)

    t = rays[:, 3]
    if np.any(t <= eps):
        if np.any(t > eps):
            raise UnboundedPolyhedronError("polyhedron is unbounded")
        return np.zeros((0, 3))
    verts = rays[:, :3] / t[:, None]
    verts = verts[np.all(A @ verts.T <= b[:, None] + 1e-7 * (1 + np.abs(b[:, None])), axis=0)]
    return _dedupe_points(verts)


def _dedupe_points(V: np.ndarray, tol: float = VERTEX_DEDUP) -> np.ndarray:
    V = V[np.lexsort(V.T[::-1])]
    out = []
    for v in V:
        if not any(np.max(np.abs(v - u)) <= tol * (1 + np.max(np.abs(u))) for u in out):
            out.append(v)
    return np.array(out).reshape(-1, 3)


def vertices_brute_force(poly: Polyhedron3, tol: float = 1e-9) -> np.ndarray:
    """Reference enumeration over all triples of rows."""
    from itertools import combinations

    A, b = poly.A, poly.b
    out = []
    for tri in combinations(range(len(b)), 3):
        M = A[list(tri)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        z = np.linalg.solve(M, b[list(tri)])
        if np.all(A @ z <= b + tol * (1 + np.abs(b))):
            out.append(z)
    if not out:
        return np.zeros((0, 3))
    return _dedupe_points(np.array(out))


# --------------------------------------------------------------------------- selection


@dataclass
class SelectionTrace:
    chosen: list[int]
    errors: list[float]  # max violation before each addition, then the final one


def max_envelope_error(full: FacetSet, chosen: list[int], vertices: np.ndarray):
    """Worst violation of the unchosen facets at the given vertices, with its facet index."""
    rest = [k for k in range(len(full)) if k not in set(chosen)]
    if not rest or len(vertices) == 0:
        return 0.0, None
    C = full.coeffs[rest]
    viol = vertices[:, 2][:, None] - (vertices[:, :1] * C[:, 0] + vertices[:, 1:2] * C[:, 1] + C[:, 2])
    per_facet = viol.max(axis=0)
    best = float(per_facet.max())
    k = rest[int(np.flatnonzero(per_facet >= best)[0])]
    return best, k


def select_facets(full: FacetSet, tol: float | None = None, trace: SelectionTrace | None = None) -> FacetSet:
    """Greedy selection of a representative facet subset.

    Starts from the bounding box and repeatedly adds the unchosen facet with the
    largest violation at the current polyhedron's vertices; ties go to the lowest
    index.  Stops once that violation is at most ``tol`` (default 1% of p_max).
    """
    if tol is None:
        tol = 0.01 * full.p_max
    if tol <= 0:
        raise ValueError("tol must be positive")
    chosen: list[int] = []
    poly = Polyhedron3.box((0.0, 0.0, 0.0), (full.x_max, full.xi_max, full.p_max))
    while True:
        verts = enumerate_vertices(poly)
        err, k = max_envelope_error(full, chosen, verts)
        if trace is not None:
            trace.errors.append(err)
        if k is None or err <= tol:
            break
        chosen.append(k)
        a1, a2, a3 = full.coeffs[k]
        poly = poly.with_row((-a1, -a2, 1.0), a3)
    if trace is not None:
        trace.chosen = list(chosen)
    return full.subset(chosen)
