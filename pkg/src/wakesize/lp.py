"""Linear programs with primal/dual solutions and an LPCC branch-and-bound.

Every LP is held in the form::

    min  c @ y
    s.t. A_ineq @ y >= b_ineq      (multipliers lam >= 0)
         A_eq   @ y == b_eq        (multipliers mu, free)
         lb <= y <= ub             (multipliers z_lower, z_upper >= 0)

Two interchangeable backends solve it: ``"simplex"`` is a dense revised simplex
written here (two-phase, Dantzig pricing with a Bland fallback), ``"highs"``
delegates to the HiGHS solver shipped with SciPy.  Both report the same
``LpSolution`` so callers never see which one ran.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .constants import DEFAULT_LP_BACKEND, DUALITY_RTOL, FEAS_TOL, LPCC_BOX, OPT_TOL

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SolverError(RuntimeError):
    """The backend stopped without a trustworthy status."""


def _as_csr(A, ncols: int) -> sp.csr_matrix:
    if A is None:
        return sp.csr_matrix((0, ncols))
    if sp.issparse(A):
        return sp.csr_matrix(A, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return sp.csr_matrix((0, ncols))
    return sp.csr_matrix(A)


@dataclass
class LinearProgram:
    """min c@y s.t. A_ineq@y >= b_ineq, A_eq@y == b_eq, lb <= y <= ub."""

    c: np.ndarray
    A_ineq: sp.csr_matrix
    b_ineq: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @classmethod
    def build(cls, c, A_ineq=None, b_ineq=None, A_eq=None, b_eq=None, lb=None, ub=None):
        """Assemble an LP; omitted bounds mean free variables."""
        c = np.asarray(c, dtype=float).ravel()
        n = c.size
        A1 = _as_csr(A_ineq, n)
        A2 = _as_csr(A_eq, n)
        b1 = np.zeros(0) if b_ineq is None else np.asarray(b_ineq, dtype=float).ravel()
        b2 = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
        lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float).ravel().copy()
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).ravel().copy()
        return cls(c, A1, b1, A2, b2, lb, ub)

    def __post_init__(self):
        n = self.c.size
        if self.A_ineq.shape != (self.b_ineq.size, n):
            raise ValueError(f"inequality block {self.A_ineq.shape} vs rhs {self.b_ineq.size}, n={n}")
        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError(f"equality block {self.A_eq.shape} vs rhs {self.b_eq.size}, n={n}")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound vectors must match the variable count")
        if np.any(self.lb > self.ub):
            raise ValueError("lb > ub for some variable")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_ineq(self) -> int:
        return self.b_ineq.size

    @property
    def n_eq(self) -> int:
        return self.b_eq.size

    def copy(self) -> "LinearProgram":
        return LinearProgram(
            self.c.copy(), self.A_ineq.copy(), self.b_ineq.copy(),
            self.A_eq.copy(), self.b_eq.copy(), self.lb.copy(), self.ub.copy(),
        )

    def slacks(self, y: np.ndarray) -> np.ndarray:
        return self.A_ineq @ y - self.b_ineq

    def max_violation(self, y: np.ndarray) -> float:
        """Largest violation of any row or bound at ``y``."""
        parts = [0.0]
        if self.n_ineq:
            parts.append(float(np.max(-self.slacks(y))))
        if self.n_eq:
            parts.append(float(np.max(np.abs(self.A_eq @ y - self.b_eq))))
        parts.append(float(np.max(self.lb - y, initial=0.0)))
        parts.append(float(np.max(y - self.ub, initial=0.0)))
        return max(parts)


@dataclass
class LpSolution:
    status: str
    objective: float = np.nan
    y: np.ndarray | None = None
    lam: np.ndarray | None = None
    mu: np.ndarray | None = None
    z_lower: np.ndarray | None = None
    z_upper: np.ndarray | None = None
    backend: str = ""
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def dual_objective(self, lp: LinearProgram) -> float:
        val = float(lp.b_ineq @ self.lam) + float(lp.b_eq @ self.mu)
        lo = np.isfinite(lp.lb)
        hi = np.isfinite(lp.ub)
        val += float(lp.lb[lo] @ self.z_lower[lo]) - float(lp.ub[hi] @ self.z_upper[hi])
        return val

    def duality_gap(self, lp: LinearProgram) -> float:
        return abs(self.objective - self.dual_objective(lp))


# --------------------------------------------------------------------------- HiGHS


def _solve_highs(lp: LinearProgram) -> LpSolution:
    bounds = np.column_stack([lp.lb, lp.ub])
    kwargs = dict(bounds=bounds, method="highs")
    if lp.n_ineq:
        kwargs.update(A_ub=-lp.A_ineq, b_ub=-lp.b_ineq)
    if lp.n_eq:
        kwargs.update(A_eq=lp.A_eq, b_eq=lp.b_eq)
    res = linprog(lp.c, **kwargs)
    if res.status == 0:
        lam = np.maximum(-res.ineqlin.marginals, 0.0) if lp.n_ineq else np.zeros(0)
        mu = res.eqlin.marginals.copy() if lp.n_eq else np.zeros(0)
        return LpSolution(
            OPTIMAL, float(res.fun), np.asarray(res.x, dtype=float), lam, mu,
            np.maximum(res.lower.marginals, 0.0), np.maximum(-res.upper.marginals, 0.0),
            "highs", int(getattr(res, "nit", 0)),
        )
    if res.status in (2, 3):
        # presolve may only know "infeasible or unbounded"; settle it with a zero objective
        probe = linprog(np.zeros(lp.n_vars), **kwargs)
        if probe.status == 0:
            return LpSolution(UNBOUNDED, -np.inf, backend="highs")
        if probe.status == 2:
            return LpSolution(INFEASIBLE, np.inf, backend="highs")
    raise SolverError(f"HiGHS returned status {res.status}: {res.message}")


# --------------------------------------------------------------------------- simplex


def _revised_simplex(M, r, cost, basis, allowed, max_iter, tol=OPT_TOL):
    """Primal revised simplex on min cost@u, M@u = r, u >= 0 from a feasible basis.

    Returns (status, basis, xB, Binv, iterations).  Pricing is Dantzig until a run
    of degenerate pivots suggests cycling, after which Bland's rule is used for
    the remainder of the solve.
    """
    m = M.shape[0]
    basis = list(basis)
    Binv = np.linalg.inv(M[:, basis])
    bland = False
    degenerate_run = 0
    for it in range(max_iter):
        if it and it % 64 == 0:
            Binv = np.linalg.inv(M[:, basis])
        xB = Binv @ r
        w = cost[basis] @ Binv
        d = cost - w @ M
        d[basis] = 0.0
        d[~allowed] = 0.0
        candidates = np.flatnonzero(d < -tol)
        if candidates.size == 0:
            return OPTIMAL, basis, np.maximum(xB, 0.0), Binv, it
        j = int(candidates[0]) if bland else int(candidates[np.argmin(d[candidates])])
        col = Binv @ M[:, j]
        pos = np.flatnonzero(col > 1e-9)
        if pos.size == 0:
            return UNBOUNDED, basis, xB, Binv, it
        ratios = np.maximum(xB[pos], 0.0) / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12]
        i = int(min(ties, key=lambda k: basis[k]))
        if best <= 1e-12:
            degenerate_run += 1
            if degenerate_run > 40:
                bland = True
        else:
            degenerate_run = 0
        piv = col[i]
        Binv[i, :] /= piv
        others = np.arange(m) != i
        Binv[others, :] -= np.outer(col[others], Binv[i, :])
        basis[i] = j
    raise SolverError(f"simplex iteration limit {max_iter} reached")


def _solve_simplex(lp: LinearProgram) -> LpSolution:
    n = lp.n_vars
    A1 = lp.A_ineq.toarray()
    A2 = lp.A_eq.toarray()
    # y = y0 + P u with u >= 0
    y0 = np.zeros(n)
    P_cols = []
    ub_rows = []  # (u index, width) for variables boxed on both sides
    var_cols = []  # per original variable: list of (u index, sign)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo):
            y0[j] = lo
            k = len(P_cols)
            P_cols.append((j, 1.0))
            var_cols.append([(k, 1.0)])
            if np.isfinite(hi):
                ub_rows.append((k, hi - lo))
        elif np.isfinite(hi):
            y0[j] = hi
            k = len(P_cols)
            P_cols.append((j, -1.0))
            var_cols.append([(k, -1.0)])
        else:
            k = len(P_cols)
            P_cols.extend([(j, 1.0), (j, -1.0)])
            var_cols.append([(k, 1.0), (k + 1, -1.0)])
    nu = len(P_cols)
    P = np.zeros((n, nu))
    for k, (j, s) in enumerate(P_cols):
        P[j, k] = s
    m1, m2, m3 = lp.n_ineq, lp.n_eq, len(ub_rows)
    m = m1 + m2 + m3
    ncol = nu + m1 + m3
    M = np.zeros((m, ncol))
    r = np.zeros(m)
    if m1:
        M[:m1, :nu] = A1 @ P
        M[:m1, nu:nu + m1] = -np.eye(m1)
        r[:m1] = lp.b_ineq - A1 @ y0
    if m2:
        M[m1:m1 + m2, :nu] = A2 @ P
        r[m1:m1 + m2] = lp.b_eq - A2 @ y0
    for q, (k, width) in enumerate(ub_rows):
        M[m1 + m2 + q, k] = 1.0
        M[m1 + m2 + q, nu + m1 + q] = 1.0
        r[m1 + m2 + q] = width
    cost = np.concatenate([P.T @ lp.c, np.zeros(m1 + m3)])
    offset = float(lp.c @ y0)

    if m == 0:
        if np.any(cost < -OPT_TOL):
            return LpSolution(UNBOUNDED, -np.inf, backend="simplex")
        y = y0.copy()
        return LpSolution(OPTIMAL, offset, y, np.zeros(0), np.zeros(0),
                          np.maximum(lp.c, 0) * np.isfinite(lp.lb),
                          np.maximum(-lp.c, 0) * np.isfinite(lp.ub), "simplex", 0)

    sign = np.where(r < 0, -1.0, 1.0)
    Ms = M * sign[:, None]
    rs = r * sign
    # phase I with one artificial per row
    Mfull = np.hstack([Ms, np.eye(m)])
    art = np.arange(ncol, ncol + m)
    allowed = np.ones(ncol + m, dtype=bool)
    c1 = np.concatenate([np.zeros(ncol), np.ones(m)])
    max_iter = 50 * (m + ncol) + 1000
    status, basis, xB, Binv, it1 = _revised_simplex(Mfull, rs, c1, list(art), allowed, max_iter)
    phase1 = float(c1[basis] @ xB)
    if phase1 > FEAS_TOL * max(1.0, float(np.abs(rs).max(initial=0.0))):
        return LpSolution(INFEASIBLE, np.inf, backend="simplex", iterations=it1)
    # pivot zero-level artificials out where a structural column can replace them
    for i in range(m):
        if basis[i] < ncol:
            continue
        row = Binv[i, :] @ Ms
        row[[b for b in basis if b < ncol]] = 0.0
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        if cand.size:
            j = int(cand[0])
            col = Binv @ Mfull[:, j]
            piv = col[i]
            Binv[i, :] /= piv
            others = np.arange(m) != i
            Binv[others, :] -= np.outer(col[others], Binv[i, :])
            basis[i] = j
    allowed[art] = False
    c2 = np.concatenate([cost, np.zeros(m)])
    status, basis, xB, Binv, it2 = _revised_simplex(Mfull, rs, c2, basis, allowed, max_iter)
    iters = it1 + it2
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, -np.inf, backend="simplex", iterations=iters)
    u_full = np.zeros(ncol + m)
    u_full[basis] = xB
    u = u_full[:nu]
    y = y0 + P @ u
    w = (c2[basis] @ Binv) * sign
    lam = np.maximum(w[:m1], 0.0)
    mu = w[m1:m1 + m2]
    w_ub = w[m1 + m2:]
    d_u = P.T @ lp.c - (M[:, :nu].T @ w)
    zl = np.zeros(n)
    zu = np.zeros(n)
    ub_of = {k: q for q, (k, _) in enumerate(ub_rows)}
    for j, cols in enumerate(var_cols):
        if len(cols) == 2:
            continue
        k, s = cols[0]
        if s > 0:
            zl[j] = max(d_u[k] + (w_ub[ub_of[k]] if k in ub_of else 0.0), 0.0)
            if k in ub_of:
                zu[j] = max(-w_ub[ub_of[k]], 0.0)
        else:
            zu[j] = max(d_u[k], 0.0)
    return LpSolution(OPTIMAL, float(lp.c @ y), y, lam, mu, zl, zu, "simplex", iters)


_BACKENDS: dict[str, Callable[[LinearProgram], LpSolution]] = {
    "highs": _solve_highs,
    "simplex": _solve_simplex,
}


def register_backend(name: str, fn: Callable[[LinearProgram], LpSolution]) -> None:
    _BACKENDS[name] = fn


def solve_lp(lp: LinearProgram, backend: str | None = None) -> LpSolution:
    """Solve ``lp``; the result carries primal values and all multipliers."""
    name = backend or DEFAULT_LP_BACKEND
    try:
        fn = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown LP backend {name!r}; have {sorted(_BACKENDS)}") from None
    return fn(lp)


def check_strong_duality(lp: LinearProgram, sol: LpSolution, rtol: float = DUALITY_RTOL) -> bool:
    return sol.duality_gap(lp) <= rtol * (1.0 + abs(sol.objective))


# --------------------------------------------------------------------------- dump


def write_lp_dump(lp: LinearProgram, path) -> None:
    """Write ``lp`` as fixed-format MPS so it can be cross-checked elsewhere."""
    def num(v):
        return f"{v:12.6g}"

    lines = ["NAME          WAKESIZE", "ROWS", " N  OBJ"]
    rows = [(f"G{i}", "G") for i in range(lp.n_ineq)] + [(f"E{i}", "E") for i in range(lp.n_eq)]
    for name, kind in rows:
        lines.append(f" {kind}  {name}")
    lines.append("COLUMNS")
    A1 = lp.A_ineq.tocsc()
    A2 = lp.A_eq.tocsc()
    for j in range(lp.n_vars):
        col = f"Y{j}"
        if lp.c[j] != 0:
            lines.append(f"    {col:<8}  {'OBJ':<8}  {num(lp.c[j])}")
        for k in range(A1.indptr[j], A1.indptr[j + 1]):
            lines.append(f"    {col:<8}  {'G' + str(A1.indices[k]):<8}  {num(A1.data[k])}")
        for k in range(A2.indptr[j], A2.indptr[j + 1]):
            lines.append(f"    {col:<8}  {'E' + str(A2.indices[k]):<8}  {num(A2.data[k])}")
    lines.append("RHS")
    for i, v in enumerate(lp.b_ineq):
        if v != 0:
            lines.append(f"    {'RHS':<8}  {'G' + str(i):<8}  {num(v)}")
    for i, v in enumerate(lp.b_eq):
        if v != 0:
            lines.append(f"    {'RHS':<8}  {'E' + str(i):<8}  {num(v)}")
    lines.append("BOUNDS")
    for j in range(lp.n_vars):
        lo, hi = lp.lb[j], lp.ub[j]
        col = f"Y{j}"
        if not np.isfinite(lo) and not np.isfinite(hi):
            lines.append(f" FR {'BND':<8}  {col:<8}")
            continue
        if np.isfinite(lo) and np.isfinite(hi) and lo == hi:
            lines.append(f" FX {'BND':<8}  {col:<8}  {num(lo)}")
            continue
        lines.append(f" {'LO' if np.isfinite(lo) else 'MI'} {'BND':<8}  {col:<8}"
                     + (f"  {num(lo)}" if np.isfinite(lo) else ""))
        if np.isfinite(hi):
            lines.append(f" UP {'BND':<8}  {col:<8}  {num(hi)}")
    lines.append("ENDATA")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------- LPCC


@dataclass
class ComplementarityProblem:
    """An LP plus pairs (row r, variable j) requiring slack_r * y_j == 0.

    Each paired variable must carry ``lb == 0``.
    """

    lp: LinearProgram
    pairs: list[tuple[int, int]]
    maximize: bool = False

    def __post_init__(self):
        for r, j in self.pairs:
            if not (0 <= r < self.lp.n_ineq and 0 <= j < self.lp.n_vars):
                raise ValueError(f"pair ({r}, {j}) out of range")
            if self.lp.lb[j] != 0.0:
                raise ValueError(f"paired variable {j} must have lower bound 0")


@dataclass
class LpccResult:
    status: str  # optimal | node_limit | infeasible | unbounded
    objective: float
    y: np.ndarray | None
    bound: float
    nodes: int
    trace: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.status == OPTIMAL


def _node_lp(base: LinearProgram, tight: frozenset, zero: frozenset, box: float | None = None):
    lp = base.copy()
    if tight:
        rows = sorted(tight)
        lp.A_eq = sp.vstack([lp.A_eq, base.A_ineq[rows]], format="csr")
        lp.b_eq = np.concatenate([lp.b_eq, base.b_ineq[rows]])
    if zero:
        lp.ub[sorted(zero)] = 0.0
    if box is not None:
        lp.lb = np.maximum(lp.lb, -box)
        lp.ub = np.minimum(lp.ub, box)
    return lp


def _polish(base, node, sol, open_pairs, comp_tol, backend, rounds=3):
    """Move within the node's optimal face towards complementarity.

    Minimises the linearised violation sum(slack_r * y_j) around the current
    point: rows whose partner is positive are pushed tight, and partners of
    slack rows are pushed to zero.  Returns the best point found.
    """
    y = sol.y
    if not open_pairs:
        return y
    lp = node.copy()
    lp.A_ineq = sp.vstack([lp.A_ineq, sp.csr_matrix(-base.c[None, :])], format="csr")
    lp.b_ineq = np.concatenate([lp.b_ineq, [-(sol.objective + 1e-9 * (1.0 + abs(sol.objective)))]])
    rows = np.array([r for r, _ in open_pairs])
    cols = np.array([j for _, j in open_pairs])

    def violation(v):
        return float(np.sum(np.maximum(base.slacks(v)[rows], 0.0) * np.maximum(v[cols], 0.0)))

    best = violation(y)
    for _ in range(rounds):
        if best <= comp_tol:
            break
        slack = base.slacks(y)
        w_row = (y[cols] > comp_tol).astype(float)
        w_col = (slack[rows] > comp_tol).astype(float)
        lp.c = base.A_ineq[rows].T @ w_row
        np.add.at(lp.c, cols, w_col)
        pol = solve_lp(lp, backend)
        if not pol.optimal:
            break
        v = violation(pol.y)
        if v >= best - comp_tol:
            break
        y, best = pol.y, v
    return y


def _never_tight(base: LinearProgram, pairs, tol, backend):
    """Partners of rows whose slack stays positive over the whole relaxed feasible set."""
    probe = base.copy()
    zero = set()
    for r, j in pairs:
        probe.c = base.A_ineq[r].toarray().ravel()
        sol = solve_lp(probe, backend)
        if sol.status == INFEASIBLE:
            return frozenset(), False
        if sol.optimal and sol.objective - base.b_ineq[r] > tol:
            zero.add(j)
    return frozenset(zero), True


def solve_lpcc(
    problem: ComplementarityProblem,
    node_limit: int = 5000,
    backend: str | None = None,
    incumbent: float | None = None,
    comp_tol: float = 1e-6,
    presolve: bool = True,
) -> LpccResult:
    """Branch-and-bound over complementarity pairs.

    Each node relaxes the unresolved pairs; a branch forces either the row to be
    tight or the paired variable to zero.  Nodes are explored best-bound first.
    Within a node the relaxed point is first moved towards complementarity along
    the optimal face; if that succeeds the node is solved outright.  The support
    pattern of the point is also fixed completely and re-solved, which gives
    cheap feasible points.  ``incumbent`` is an optional known attainable
    objective value used only for pruning.  With ``presolve`` every row that can
    never be tight on the relaxed feasible set has its partner fixed to zero at
    the root.
    """
    sgn = -1.0 if problem.maximize else 1.0  # internal minimisation
    base = problem.lp.copy()
    base.c = sgn * base.c
    pairs = problem.pairs
    best_val = np.inf if incumbent is None else sgn * incumbent
    best_y = None
    counter = itertools.count()
    root_zero = frozenset()
    if presolve:
        root_zero, feasible = _never_tight(base, pairs, comp_tol, backend)
        if not feasible:
            return LpccResult(INFEASIBLE, np.nan, None, np.nan, 0, [])
    heap = [(-np.inf, next(counter), frozenset(), root_zero)]
    nodes = 0
    trace = []

    def gap_tol(v):
        return 1e-7 * (1.0 + abs(v)) if np.isfinite(v) else 0.0

    def leaf(tight, zero, y):
        t = set(tight)
        z = set(zero)
        for r, j in pairs:
            if r in t or j in z:
                continue
            (t if y[j] > comp_tol else z).add(r if y[j] > comp_tol else j)
        sol = solve_lp(_node_lp(base, frozenset(t), frozenset(z)), backend)
        return sol

    while heap:
        bound, _, tight, zero = heapq.heappop(heap)
        if bound >= best_val - gap_tol(best_val):
            continue
        if nodes >= node_limit:
            heapq.heappush(heap, (bound, next(counter), tight, zero))
            break
        nodes += 1
        sol = solve_lp(_node_lp(base, tight, zero), backend)
        if sol.status == INFEASIBLE:
            continue
        boxed = sol.status == UNBOUNDED
        if boxed:
            sol = solve_lp(_node_lp(base, tight, zero, LPCC_BOX), backend)
            if not sol.optimal:
                continue
            node_bound = -np.inf
        else:
            node_bound = sol.objective
        if node_bound >= best_val - gap_tol(best_val):
            continue
        open_pairs = [(k, r, j) for k, (r, j) in enumerate(pairs) if r not in tight and j not in zero]
        y = _polish(base, _node_lp(base, tight, zero, LPCC_BOX if boxed else None), sol,
                    [(r, j) for _, r, j in open_pairs], comp_tol, backend)
        slack = base.slacks(y)
        viol = [(max(slack[r], 0.0) * max(y[j], 0.0), k, r, j) for k, r, j in open_pairs
                if min(slack[r], y[j]) > comp_tol]
        if not viol:
            if not boxed:
                best_val, best_y = node_bound, y
                trace.append((nodes, sgn * best_val))
                continue
            if not open_pairs:
                return LpccResult(UNBOUNDED, sgn * -np.inf, None, sgn * -np.inf, nodes, trace)
        else:
            rep = leaf(tight, zero, y)
            if rep.status == UNBOUNDED:
                return LpccResult(UNBOUNDED, sgn * -np.inf, None, sgn * -np.inf, nodes, trace)
            if rep.optimal and rep.objective < best_val - gap_tol(best_val):
                best_val, best_y = rep.objective, rep.y
                trace.append((nodes, sgn * best_val))
                if rep.objective <= node_bound + gap_tol(node_bound):
                    continue
        if viol:
            _, k, r, j = max(viol)
        else:
            # complementary but box-limited: split the pair with the largest component
            _, k, r, j = max((max(slack[r], y[j]), k, r, j) for k, r, j in open_pairs)
        heapq.heappush(heap, (node_bound, next(counter), tight | {r}, zero))
        heapq.heappush(heap, (node_bound, next(counter), tight, zero | {j}))

    if heap:
        open_bound = min(b for b, *_ in heap)
        proven = min(open_bound, best_val)
        return LpccResult("node_limit", sgn * best_val, best_y, sgn * proven, nodes, trace)
    if not np.isfinite(best_val):
        return LpccResult(INFEASIBLE, np.nan, None, np.nan, nodes, trace)
    return LpccResult(OPTIMAL, sgn * best_val, best_y, sgn * best_val, nodes, trace)
