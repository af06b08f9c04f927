"""Multi-dimensional engine: walk top-k cells of the weight region.

The arrangement of score-equality hyperplanes partitions the region into
cells, each with a fixed top-k subset.  Starting from witness points the
traversal expands cells breadth-first through single-candidate swaps; a
swap is feasible when an LP finds interior room for the new subset inside
the region.  Fairness of every visited cell is delegated to the verify
module at the cell witness, so duplicate-point ties stay handled exactly.

A cutoff band keeps the LPs small: candidates provably inside every top-k
over the region are fixed in, candidates provably outside are fixed out,
and two cutoff rows keep the reduced model equivalent to the full one.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass

import numpy as np

from .core import (
    TIE_EPS,
    BudgetExceededError,
    FairResult,
    UTILITY_LOSS,
    W_DIFFERENCE,
    WeightVector,
    utility_loss,
)
from .geometry import (
    LpProblem,
    hyperplane_side,
    lift_weight,
    project_halfspace,
    region_extreme_points,
    simplex_lp,
    simplex_rows_projected,
    solve_lp,
)
from .verify import (
    decompose_topk,
    fair_topk_witness,
    max_fair_utility,
    reference_topk_utility,
    verify_fair,
)

CELL_TOL = 1e-9
DEFAULT_SWAP_BUDGET = 5_000_000


@dataclass(frozen=True)
class CellNode:
    """One arrangement cell: its canonical subset and an interior witness."""

    subset: tuple
    witness: tuple
    depth: int = 0


@dataclass
class TraversalLedger:
    """Work accounting for budget enforcement and the soundness tests."""

    cells_visited: int = 0
    swap_tests: int = 0
    pruned_by_region: int = 0
    fair_cells: int = 0


class _Workspace:
    """Per-run geometry shared by every LP of a traversal."""

    def __init__(self, dataset, k, region):
        self.dataset = dataset
        self.k = k
        self.region = region
        self.d = dataset.d
        verts = region_extreme_points(region)
        self.verts = np.array(verts) if verts else np.empty((0, self.d - 1))
        pts = dataset.points
        self.Q = pts[:, :-1] - pts[:, -1:]
        self.r = pts[:, -1].copy()
        self.ids = np.asarray(dataset.ids)
        self.pos = {cid: i for i, cid in enumerate(dataset.ids)}
        if len(self.verts):
            sv = self.Q @ self.verts.T + self.r[:, None]
            self.smin = sv.min(axis=1)
            self.smax = sv.max(axis=1)
        else:
            self.smin = self.smax = np.zeros(len(dataset))
        n = len(dataset)
        if n > k:
            u = np.partition(self.smax, n - k - 1)[n - k - 1]  # (k+1)-th largest max
            v = np.partition(self.smin, n - k)[n - k]          # k-th largest min
            self.sure_in = self.smin > u + TIE_EPS
            self.sure_out = self.smax < v - TIE_EPS
        else:
            self.sure_in = np.ones(n, dtype=bool)
            self.sure_out = np.zeros(n, dtype=bool)
        self.band = ~(self.sure_in | self.sure_out)
        self.lambda_hi = float(self.smin[self.sure_in].min()) if self.sure_in.any() else None
        self.lambda_lo = float(self.smax[self.sure_out].max()) if self.sure_out.any() else None
        self.region_rows = [project_halfspace(c, o) for c, o in region.halfspaces]
        # duplicate-point classes for canonical subset keys
        classes = {}
        for c in dataset.candidates:
            classes.setdefault(c.point, []).append(c.cid)
        self.dup_class = {}
        for members in classes.values():
            members.sort()
            for cid in members:
                self.dup_class[cid] = tuple(members)

    def canonical(self, ids):
        """Replace duplicate-point picks by the lowest ids of their class."""
        picked = {}
        for cid in ids:
            cls = self.dup_class[cid]
            picked[cls] = picked.get(cls, 0) + 1
        out = []
        for cls, m in picked.items():
            out.extend(cls[:m])
        return tuple(sorted(out))

    def swap_problem(self, new_subset):
        """max xi so the band part of new_subset separates strictly in V.

        Separation works on duplicate-point classes: a fully taken class
        must clear the threshold from above, an untouched one from below,
        and a split class rides exactly on it (its members tie at the
        pivot).  Two split classes of distinct points never share an open
        cell, and a split or missed sure-in class (or the reverse for
        sure-out) is impossible anywhere in the region; both yield None.
        """
        d = self.d
        nv = d + 1  # variables: y (d-1), lambda, xi
        rows = []
        member = set(new_subset)
        seen = set()
        split = 0
        for i in range(len(self.ids)):
            cid = int(self.ids[i])
            cls = self.dup_class[cid]
            if cls in seen:
                continue
            seen.add(cls)
            taken = sum(1 for c in cls if c in member)
            if not self.band[i]:
                impossible = (self.sure_in[i] and taken < len(cls)) or (
                    self.sure_out[i] and taken > 0
                )
                if impossible:
                    return None
                continue
            a = np.zeros(nv)
            a[: d - 1] = self.Q[i]
            a[d - 1] = -1.0
            if taken == len(cls):
                a[d] = -1.0
                rows.append((a, ">=", -self.r[i]))
            elif taken == 0:
                a[d] = 1.0
                rows.append((a, "<=", -self.r[i]))
            else:
                split += 1
                if split > 1:
                    return None
                rows.append((a, "=", -self.r[i]))
        if self.lambda_hi is not None:
            a = np.zeros(nv)
            a[d - 1] = 1.0
            a[d] = 1.0
            rows.append((a, "<=", self.lambda_hi))
        if self.lambda_lo is not None:
            a = np.zeros(nv)
            a[d - 1] = 1.0
            a[d] = -1.0
            rows.append((a, ">=", self.lambda_lo))
        for h, off in self.region_rows + simplex_rows_projected(d):
            a = np.zeros(nv)
            a[: d - 1] = h
            rows.append((a, ">=", -off))
        a = np.zeros(nv)
        a[d] = 1.0
        rows.append((a, "<=", 1.0))
        c = np.zeros(nv)
        c[d] = 1.0
        return LpProblem(c, rows, "max")


def initial_cell(dataset, k, region, witness=None):
    """Cell containing a witness (default: the region vertex centroid)."""
    ws = _Workspace(dataset, k, region)
    return _initial_cell(ws, witness)


def _initial_cell(ws, witness=None):
    if witness is None:
        if not len(ws.verts):
            return None
        witness = ws.verts.mean(axis=0)
    w = lift_weight(witness)
    decomp = decompose_topk(ws.dataset, ws.k, w)
    subset = ws.canonical(decomp.order[: ws.k])
    return CellNode(subset=subset, witness=tuple(float(v) for v in witness))


def swap_feasible(dataset, k, subset, c_out, c_in, region):
    """Interior witness of the cell of subset - c_out + c_in, or None."""
    ws = _Workspace(dataset, k, region)
    return _swap_feasible(ws, subset, c_out, c_in)


def _swap_feasible(ws, subset, c_out, c_in):
    new_subset = tuple(sorted(set(subset) - {c_out} | {c_in}))
    problem = ws.swap_problem(new_subset)
    if problem is None:
        return None
    out = solve_lp(problem, seed=0)
    if out.status != "optimal" or out.value <= CELL_TOL:
        return None
    return tuple(float(v) for v in out.x[: ws.d - 1])


def cell_min_wdiff(dataset, k, subset, region):
    """Closest region point (L1, to the reference) keeping subset on top."""
    ws = _Workspace(dataset, k, region)
    return _cell_min_wdiff(ws, subset)


def _cell_min_wdiff(ws, subset):
    d = ws.d
    wo = ws.region.reference
    nv = 2 * d + 1  # w (d), lambda, phi (d)
    rows = []
    member = set(subset)
    pts = ws.dataset.points
    for i in np.nonzero(ws.band)[0]:
        a = np.zeros(nv)
        a[:d] = pts[i]
        a[d] = -1.0
        rows.append((a, ">=" if int(ws.ids[i]) in member else "<=", 0.0))
    if ws.lambda_hi is not None:
        a = np.zeros(nv)
        a[d] = 1.0
        rows.append((a, "<=", ws.lambda_hi))
    if ws.lambda_lo is not None:
        a = np.zeros(nv)
        a[d] = 1.0
        rows.append((a, ">=", ws.lambda_lo))
    for i in range(d):
        a = np.zeros(nv)
        a[d + 1 + i] = 1.0
        a[i] = -1.0
        rows.append((a, ">=", -wo[i]))
        a = np.zeros(nv)
        a[d + 1 + i] = 1.0
        a[i] = 1.0
        rows.append((a, ">=", wo[i]))
    a = np.zeros(nv)
    a[:d] = 1.0
    rows.append((a, "=", 1.0))
    for i in range(d):
        a = np.zeros(nv)
        a[i] = 1.0
        rows.append((a, ">=", 0.0))
    a = np.zeros(nv)
    a[d] = 1.0
    rows.append((a, ">=", 0.0))
    rows.append((a.copy(), "<=", 1.0))
    for coeffs, off in ws.region.halfspaces:
        a = np.zeros(nv)
        a[:d] = coeffs
        rows.append((a, ">=", -off))
    c = np.zeros(nv)
    c[d + 1:] = 1.0
    out = simplex_lp(LpProblem(c, rows, "min"))
    if out.status != "optimal":
        return None
    w = np.clip(out.x[:d], 0.0, None)
    w = w / w.sum()
    return tuple(float(v) for v in w), float(out.value)


def traverse(dataset, k, spec, region, workers=1, swap_budget=DEFAULT_SWAP_BUDGET,
             ledger=None):
    """Best fair weight by breadth-first search over reachable cells.

    Expands every reachable cell whose interior meets the region, seeded
    from the region centroid, its extreme points and the reference weight.
    Under w-difference each fair cell contributes its closest point to the
    reference; under utility loss its witness utility.  Exceeding the swap
    budget raises BudgetExceededError with the best solution so far
    attached as partial.
    """
    spec.validate(k)
    if ledger is None:
        ledger = TraversalLedger()
    ws = _Workspace(dataset, k, region)
    if not len(ws.verts):
        return None
    objective = region.objective
    wo = region.reference

    seeds = [ws.verts.mean(axis=0)]
    seeds.extend(ws.verts)
    wo_proj = np.asarray(wo.weights[:-1])
    if region.contains(wo):
        seeds.append(wo_proj)

    visited = set()
    sols = []
    lock = threading.Lock()
    budget_hit = threading.Event()
    work = queue.Queue()

    for s in seeds:
        node = _initial_cell(ws, s)
        if node is not None and node.subset not in visited:
            visited.add(node.subset)
            work.put(node)

    band_ids = [int(i) for i in ws.ids[ws.band]]
    band_set = set(band_ids)
    point_of = {c.cid: c.point for c in dataset.candidates}

    def evaluate(node):
        with lock:
            ledger.cells_visited += 1
        w_node = lift_weight(node.witness)
        if objective == UTILITY_LOSS:
            hit = max_fair_utility(dataset, k, spec, w_node, wo)
            if hit is not None:
                with lock:
                    ledger.fair_cells += 1
                    sols.append((-hit[1], node.subset, node.witness))
        else:
            if verify_fair(dataset, k, spec, w_node):
                cell = _cell_min_wdiff(ws, node.subset)
                if cell is not None:
                    with lock:
                        ledger.fair_cells += 1
                        sols.append((cell[1], node.subset, cell[0]))

    def expand(node):
        outs = [c for c in node.subset if c in band_set]
        ins = [c for c in band_ids if c not in set(node.subset)]
        for c_out in outs:
            for c_in in ins:
                if point_of[c_out] == point_of[c_in]:
                    continue  # same cell under any weight
                i_out, i_in = ws.pos[c_out], ws.pos[c_in]
                diff = ws.Q[i_in] - ws.Q[i_out]
                off = ws.r[i_in] - ws.r[i_out]
                if len(ws.verts) and hyperplane_side(diff, off, ws.verts) != 0:
                    ledger.pruned_by_region += 1
                    continue
                with lock:
                    ledger.swap_tests += 1
                    if ledger.swap_tests > swap_budget:
                        budget_hit.set()
                if budget_hit.is_set():
                    return
                witness = _swap_feasible(ws, node.subset, c_out, c_in)
                if witness is None:
                    continue
                new_subset = ws.canonical(
                    tuple(sorted(set(node.subset) - {c_out} | {c_in}))
                )
                with lock:
                    if new_subset in visited:
                        continue
                    visited.add(new_subset)
                work.put(CellNode(new_subset, witness, node.depth + 1))

    errors = []
    sentinel = object()

    def run():
        while True:
            node = work.get()
            if node is sentinel:
                work.task_done()
                return
            try:
                if not budget_hit.is_set() and not errors:
                    evaluate(node)
                    expand(node)
            except BaseException as exc:  # propagate to the caller
                errors.append(exc)
            finally:
                work.task_done()

    n_workers = max(1, int(workers))
    threads = [threading.Thread(target=run, daemon=True) for _ in range(n_workers)]
    for t in threads:
        t.start()
    work.join()
    for _ in threads:
        work.put(sentinel)
    work.join()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]

    result = _reduce(dataset, k, spec, ws, sols, objective, wo)
    if budget_hit.is_set():
        raise BudgetExceededError(
            f"swap budget {swap_budget} exceeded after {ledger.cells_visited} cells",
            partial=result,
        )
    return result


def _reduce(dataset, k, spec, ws, sols, objective, wo):
    """Deterministic serial reduction over fair-cell solutions."""
    if not sols:
        return None
    sols.sort(key=lambda s: (s[0], s[1], s[2]))
    key, subset, point = sols[0]
    if objective == W_DIFFERENCE:
        weight = WeightVector(point)
        value = key
        witness = fair_topk_witness(dataset, k, spec, weight, objective, wo=wo)
        if witness is None:
            witness = subset
        util = None
    else:
        cell = _cell_min_wdiff(ws, subset)
        if cell is not None:
            weight = WeightVector(cell[0])
        else:
            weight = lift_weight(np.asarray(point))
        hit = max_fair_utility(dataset, k, spec, weight, wo)
        if hit is None:
            weight = lift_weight(np.asarray(point))
            hit = max_fair_utility(dataset, k, spec, weight, wo)
            if hit is None:
                return None
        witness, util = hit
        uref = reference_topk_utility(dataset, k, wo)
        value = utility_loss(util, uref)
    return FairResult(
        weight=weight,
        objective=objective,
        value=value,
        subset=tuple(sorted(witness)),
        engine="klevel",
        utility=util,
    )
