"""Weight-space geometry and the two small LP kernels.

Weights live on the standard simplex, so every d-dimensional weight vector
is handled in the projected space of its first d-1 components; the last
component is implied.  Scores become affine functions of the projected
point, and in two dimensions each candidate turns into a dual line.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass

import numpy as np

from .core import LpStallError, WeightVector, weight_components

FEAS_TOL = 1e-9
OPT_TOL = 1e-8
_ZERO = 1e-12

SEIDEL_MAX_DIMS = 8
SIMPLEX_ABOVE_VARS = 6


# ----------------------------------------------------------------------
# projection between the simplex and its first d-1 coordinates
# ----------------------------------------------------------------------

def project_weight(w):
    """Drop the last component."""
    comps = weight_components(w)
    return np.asarray(comps[:-1], dtype=float)


def lift_weight(y):
    """Recover the full vector; the last component closes the simplex sum.

    Components within FEAS_TOL below zero are solver noise and get clipped,
    then the vector is rescaled so the clip cannot break the simplex sum.
    """
    y = np.asarray(y, dtype=float)
    last = 1.0 - float(y.sum())
    comps = np.append(y, last)
    low = comps.min()
    if low < -FEAS_TOL:
        raise ValueError(f"point lies {-low:.3e} outside the weight simplex")
    if low < 0.0:
        comps = np.clip(comps, 0.0, None)
        comps /= comps.sum()
    return WeightVector(tuple(comps))


def project_point(point):
    """Affine score form: score(w) = coeffs . y + offset for projected y."""
    p = np.asarray(point, dtype=float)
    return p[:-1] - p[-1], float(p[-1])


def project_halfspace(coeffs, offset):
    """Rewrite coeffs . w + offset >= 0 over projected coordinates."""
    a = np.asarray(coeffs, dtype=float)
    return a[:-1] - a[-1], float(a[-1] + offset)


def simplex_rows_projected(d):
    """Projected nonnegativity rows: y_i >= 0 and 1 - sum(y) >= 0."""
    rows = []
    for i in range(d - 1):
        e = np.zeros(d - 1)
        e[i] = 1.0
        rows.append((e, 0.0))
    rows.append((-np.ones(d - 1), 1.0))
    return rows


def projected_region_rows(region):
    """All projected rows of a WeightRegion, simplex included."""
    rows = simplex_rows_projected(region.d)
    for coeffs, offset in region.halfspaces:
        rows.append(project_halfspace(coeffs, offset))
    return rows


@dataclass(frozen=True)
class DualLine:
    """Score of a 2-d candidate as a line over x = w_1: y = slope*x + intercept."""

    owner: int
    slope: float
    intercept: float

    def value(self, x):
        return self.slope * x + self.intercept


def dual_line(cid, point):
    px, py = (float(v) for v in point)
    return DualLine(cid, px - py, py)


# ----------------------------------------------------------------------
# LP problems
# ----------------------------------------------------------------------

@dataclass
class LpProblem:
    """min or max of c . x over rows a . x {<=, >=, =} b; variables free."""

    c: np.ndarray
    rows: list
    direction: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.direction not in ("min", "max"):
            raise ValueError(f"bad direction {self.direction!r}")
        norm = []
        for a, rel, b in self.rows:
            a = np.asarray(a, dtype=float)
            if a.shape != self.c.shape:
                raise ValueError("row length does not match variable count")
            if rel not in ("<=", ">=", "="):
                raise ValueError(f"bad relation {rel!r}")
            norm.append((a, rel, float(b)))
        self.rows = norm

    @property
    def nvars(self):
        return len(self.c)


@dataclass
class LpOutcome:
    status: str            # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray = None
    value: float = None


def solve_lp(problem, seed=0, simplex_above=SIMPLEX_ABOVE_VARS):
    """Route to the Seidel kernel for few variables, else to simplex."""
    if problem.nvars > simplex_above:
        return simplex_lp(problem)
    return seidel_lp(problem, seed=seed)


# ----------------------------------------------------------------------
# Seidel's randomized incremental LP (few variables, many rows)
# ----------------------------------------------------------------------

def seidel_lp(problem, seed=0, box=1e7):
    """Randomized incremental LP for up to SEIDEL_MAX_DIMS variables.

    Rows are processed in a seed-deterministic shuffled order; a violated
    row sends the search to that row's boundary in one fewer dimension.
    The implicit bounding box at +-box detects unbounded problems.
    """
    d = problem.nvars
    if d > SEIDEL_MAX_DIMS:
        raise ValueError(f"seidel_lp handles at most {SEIDEL_MAX_DIMS} variables, got {d}")
    sign = 1.0 if problem.direction == "max" else -1.0
    c = sign * problem.c
    rows = []
    for a, rel, b in problem.rows:
        if rel in ("<=", "="):
            rows.append((a.copy(), b))
        if rel in (">=", "="):
            rows.append((-a, -b))
    rng = random.Random(seed)
    rng.shuffle(rows)
    lo = np.full(d, -box)
    hi = np.full(d, box)
    x = _seidel_rec(rows, c, lo, hi)
    if x is None:
        return LpOutcome("infeasible")
    x = np.asarray(x)
    if np.any(np.abs(x) >= box * (1.0 - 1e-6)):
        return LpOutcome("unbounded")
    return LpOutcome("optimal", x, float(problem.c @ x))


def _corner(c, lo, hi):
    x = np.where(c > 0, hi, np.where(c < 0, lo, np.clip(0.0, lo, hi)))
    return x.astype(float)


def _seidel_rec(rows, c, lo, hi):
    d = len(c)
    if d == 1:
        l, h = lo[0], hi[0]
        for a, b in rows:
            av = float(a[0])
            if abs(av) <= _ZERO:
                if b < -FEAS_TOL:
                    return None
                continue
            t = b / av
            if av > 0:
                h = min(h, t)
            else:
                l = max(l, t)
        if l > h + FEAS_TOL:
            return None
        h = max(h, l)
        x = h if c[0] > 0 else (l if c[0] < 0 else min(max(0.0, l), h))
        return np.array([x])

    x = _corner(c, lo, hi)
    seen = []
    for a, b in rows:
        if float(a @ x) <= b + FEAS_TOL * max(1.0, abs(b)):
            seen.append((a, b))
            continue
        j = int(np.argmax(np.abs(a)))
        aj = float(a[j])
        if abs(aj) <= _ZERO:
            if b < -FEAS_TOL:
                return None
            seen.append((a, b))
            continue
        keep = [i for i in range(d) if i != j]
        arat = a[keep] / aj
        sub_rows = []
        for g, h_rhs in seen:
            gj = float(g[j])
            sub_rows.append((g[keep] - gj * arat, h_rhs - gj * b / aj))
        # the eliminated variable keeps its box bounds as general rows
        sub_rows.append((arat.copy(), b / aj - lo[j]))      # x_j >= lo_j
        sub_rows.append((-arat, hi[j] - b / aj))            # x_j <= hi_j
        c2 = c[keep] - c[j] * arat
        y = _seidel_rec(sub_rows, c2, lo[keep], hi[keep])
        if y is None:
            return None
        x = np.empty(d)
        x[keep] = y
        x[j] = (b - float(a[keep] @ y)) / aj
        seen.append((a, b))
    return x


# ----------------------------------------------------------------------
# dense two-phase simplex with an anti-cycling fallback
# ----------------------------------------------------------------------

def simplex_lp(problem, pivot_budget=20000):
    """Two-phase tableau simplex over split free variables.

    Entering columns follow the most-negative reduced cost until a run of
    degenerate pivots, after which Bland's least-index rule takes over so
    the method cannot cycle.  Exceeding the pivot budget raises
    LpStallError rather than returning a wrong answer.
    """
    sign = 1.0 if problem.direction == "min" else -1.0
    n = problem.nvars
    m = len(problem.rows)
    if m == 0:
        # unconstrained: bounded only if the objective is identically zero
        if np.any(np.abs(problem.c) > _ZERO):
            return LpOutcome("unbounded")
        return LpOutcome("optimal", np.zeros(n), 0.0)

    # columns: x+ (n), x- (n), slack/surplus (one per inequality), artificials
    slack_rows = [i for i, (_, rel, _) in enumerate(problem.rows) if rel != "="]
    n_slack = len(slack_rows)
    slack_col = {r: 2 * n + j for j, r in enumerate(slack_rows)}
    n_cols = 2 * n + n_slack
    A = np.zeros((m, n_cols + m))
    b = np.zeros(m)
    for i, (a, rel, rhs) in enumerate(problem.rows):
        row = np.concatenate([a, -a, np.zeros(n_slack + m)])
        if rel == "<=":
            row[slack_col[i]] = 1.0
        elif rel == ">=":
            row[slack_col[i]] = -1.0
        if rhs < 0:
            row = -row
            rhs = -rhs
        row[n_cols + i] = 1.0
        A[i] = row
        b[i] = rhs

    basis = [n_cols + i for i in range(m)]
    # phase 1: drive the artificial total to zero
    cost1 = np.zeros(n_cols + m)
    cost1[n_cols:] = 1.0
    tab, used = _simplex_iterate(A, b, basis, cost1, pivot_budget, phase=1)
    A, b = tab
    if float(cost1[basis] @ b) > 1e-7:
        return LpOutcome("infeasible")
    # pivot artificials out of the basis where possible, drop dead rows
    rows_keep = []
    for i in range(m):
        if basis[i] >= n_cols:
            piv = None
            for j in range(n_cols):
                if abs(A[i, j]) > 1e-9:
                    piv = j
                    break
            if piv is None:
                continue  # redundant row
            _pivot(A, b, i, piv)
            basis[i] = piv
        rows_keep.append(i)
    A = A[rows_keep][:, :n_cols]
    b = b[rows_keep]
    basis = [basis[i] for i in rows_keep]

    cost2 = np.concatenate([sign * problem.c, -sign * problem.c, np.zeros(n_slack)])
    try:
        (A, b), _ = _simplex_iterate(A, b, basis, cost2, pivot_budget - used, phase=2)
    except _Unbounded:
        return LpOutcome("unbounded")
    x_split = np.zeros(n_cols)
    for i, col in enumerate(basis):
        x_split[col] = b[i]
    x = x_split[:n] - x_split[n:2 * n]
    return LpOutcome("optimal", x, float(problem.c @ x))


class _Unbounded(Exception):
    pass


def _pivot(A, b, row, col):
    piv = A[row, col]
    A[row] /= piv
    b[row] /= piv
    for i in range(len(b)):
        if i != row and abs(A[i, col]) > _ZERO:
            f = A[i, col]
            A[i] -= f * A[row]
            b[i] -= f * b[row]
            if b[i] < 0 and b[i] > -1e-11:
                b[i] = 0.0


def _simplex_iterate(A, b, basis, cost, budget, phase):
    m = len(b)
    degenerate_run = 0
    bland = False
    last_obj = math.inf
    for it in range(max(budget, 1)):
        cb = cost[basis]
        reduced = cost - cb @ A
        reduced[basis] = 0.0
        if bland:
            neg = np.nonzero(reduced < -1e-10)[0]
            if len(neg) == 0:
                return (A, b), it
            col = int(neg[0])
        else:
            col = int(np.argmin(reduced))
            if reduced[col] >= -1e-10:
                return (A, b), it
        pos = A[:, col] > 1e-11
        if not np.any(pos):
            if phase == 2:
                raise _Unbounded
            # phase-1 cost is bounded below by zero; treat as converged guard
            return (A, b), it
        ratios = np.full(m, np.inf)
        ratios[pos] = b[pos] / A[pos, col]
        rmin = float(ratios.min())
        # break ratio ties toward the least basis index (Bland's exit rule);
        # without it the entering-side rule alone still admits cycles
        tied = np.nonzero(ratios <= rmin + 1e-9 * (1.0 + abs(rmin)))[0]
        row = int(min(tied, key=lambda i: basis[i]))
        _pivot(A, b, row, col)
        basis[row] = col
        obj = float(cost[basis] @ b)
        if obj >= last_obj - 1e-12:
            degenerate_run += 1
            if degenerate_run >= 12:
                bland = True
        else:
            degenerate_run = 0
        last_obj = obj
    raise LpStallError(f"simplex exceeded {budget} pivots in phase {phase}")


# ----------------------------------------------------------------------
# region vertices and hyperplane side tests (projected space)
# ----------------------------------------------------------------------

def region_extreme_points(region, tol=FEAS_TOL):
    """Vertices of the projected region polytope, sorted lexicographically.

    Brute-force vertex enumeration: every (d-1)-subset of rows is solved as
    a linear system and kept when it satisfies all rows.  Intended for the
    handful of rows a weight region carries, not for large polytopes.
    An empty list means the region is empty.
    """
    rows = projected_region_rows(region)
    dim = region.d - 1
    A = np.array([r[0] for r in rows])
    off = np.array([r[1] for r in rows])
    verts = []
    for comb in itertools.combinations(range(len(rows)), dim):
        M = A[list(comb)]
        rhs = -off[list(comb)]
        try:
            v = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(v)):
            continue
        if np.min(A @ v + off) < -tol:
            continue
        if not any(np.max(np.abs(v - u)) <= 1e-9 for u in verts):
            verts.append(v)
    verts.sort(key=tuple)
    return verts


def region_interval(region):
    """Projected 1-d region (d = 2) as a closed interval, or None if empty."""
    if region.d != 2:
        raise ValueError("region_interval needs a 2-d region")
    verts = region_extreme_points(region)
    if not verts:
        return None
    xs = [float(v[0]) for v in verts]
    return min(xs), max(xs)


def hyperplane_side(coeffs, offset, points, tol=FEAS_TOL):
    """+1 or -1 when all points are strictly on one side, else 0."""
    if len(points) == 0:
        return 0
    vals = np.asarray(points) @ np.asarray(coeffs, dtype=float) + offset
    if np.all(vals > tol):
        return 1
    if np.all(vals < -tol):
        return -1
    return 0


def hyperplane_misses_region(coeffs, offset, vertices, tol=FEAS_TOL):
    """True when the hyperplane coeffs . y + offset = 0 misses the hull."""
    return hyperplane_side(coeffs, offset, vertices, tol) != 0
