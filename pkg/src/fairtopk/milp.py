"""Mixed-integer formulation of fair weight synthesis, with its own solver.

One binary per candidate marks top-k membership; a score threshold variable
ties the binaries to the linear scores through unit big-M rows, which is
valid because attributes are required to lie in [0,1] so every score and
the threshold live in [0,1] too.  Group count rows encode fairness, the
region rows restrict the weights, and the objective is either the L1
distance to the reference weights or the selected reference utility.

The solver is a best-first branch and bound over the dense-simplex
relaxation.  Integral relaxation points are re-solved with the binaries
fixed before they may become incumbents, so numerically sloppy roundings
can never leak into results; subsets whose fixed LP is infeasible are
excluded by a no-good cut and the search continues.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    TIE_EPS,
    BudgetExceededError,
    FairResult,
    W_DIFFERENCE,
    WeightVector,
    utility_loss,
)
from .geometry import LpProblem, region_extreme_points, simplex_lp
from .verify import reference_topk_utility

INT_TOL = 1e-6
CUT_TOL = 1e-12
DEFAULT_NODE_BUDGET = 200_000


@dataclass
class MilpModel:
    """Full model: variables w, threshold, one binary per candidate, and
    L1 envelope variables when the objective is the weight difference."""

    dataset: object
    k: int
    spec: object
    region: object
    objective: str
    c: np.ndarray
    direction: str
    rows: list            # (coeffs, relation, rhs) in build order
    bounds: list          # (lo, hi) per variable, None for free
    binaries: list        # variable indices of the membership binaries
    names: list
    so_scores: np.ndarray  # reference score per candidate

    @property
    def nvars(self):
        return len(self.c)


def build_milp(dataset, k, spec, region):
    """Assemble the model rows in a fixed, documented order."""
    spec.validate(k)
    if region.d != dataset.d:
        raise ValueError("region dimension does not match the dataset")
    pts = dataset.points
    if pts.min() < -TIE_EPS or pts.max() > 1.0 + TIE_EPS:
        raise ValueError("attributes must lie in [0,1] for the milp engine")
    d, n = dataset.d, len(dataset)
    wo = region.reference
    wdiff = region.objective == W_DIFFERENCE
    nv = d + 1 + n + (d if wdiff else 0)
    names = [f"w{i}" for i in range(d)] + ["lam"]
    names += [f"d{cid}" for cid in dataset.ids]
    if wdiff:
        names += [f"p{i}" for i in range(d)]

    rows = []
    # score rows: member -> score >= lam, non-member -> score <= lam
    for i in range(n):
        a = np.zeros(nv)
        a[:d] = pts[i]
        a[d] = -1.0
        a[d + 1 + i] = -1.0
        rows.append((a, "<=", 0.0))
        rows.append((a.copy(), ">=", -1.0))
    a = np.zeros(nv)
    a[d + 1: d + 1 + n] = 1.0
    rows.append((a, "=", float(k)))
    for j in range(spec.n_protected):
        mask = dataset.group_member_mask(j)
        a = np.zeros(nv)
        a[d + 1: d + 1 + n][mask] = 1.0
        rows.append((a.copy(), ">=", float(spec.lower[j])))
        rows.append((a, "<=", float(spec.upper[j])))
    a = np.zeros(nv)
    a[:d] = 1.0
    rows.append((a, "=", 1.0))
    for coeffs, off in region.halfspaces:
        a = np.zeros(nv)
        a[:d] = coeffs
        rows.append((a, ">=", -off))
    if wdiff:
        for i in range(d):
            a = np.zeros(nv)
            a[d + 1 + n + i] = 1.0
            a[i] = -1.0
            rows.append((a, ">=", -wo[i]))
            a = np.zeros(nv)
            a[d + 1 + n + i] = 1.0
            a[i] = 1.0
            rows.append((a, ">=", wo[i]))

    bounds = [(0.0, 1.0)] * d + [(0.0, 1.0)]
    bounds += [(0.0, 1.0)] * n
    if wdiff:
        bounds += [(0.0, None)] * d

    wo_arr = wo.as_array()
    so = pts @ wo_arr
    if wdiff:
        c = np.zeros(nv)
        c[d + 1 + n:] = 1.0
        direction = "min"
    else:
        c = np.zeros(nv)
        c[d + 1: d + 1 + n] = so
        direction = "max"
    return MilpModel(
        dataset=dataset, k=k, spec=spec, region=region,
        objective=region.objective, c=c, direction=direction, rows=rows,
        bounds=bounds, binaries=list(range(d + 1, d + 1 + n)), names=names,
        so_scores=so,
    )


def export_lp(model):
    """LP-format text: objective, constraints in build order, bounds,
    binary section, End."""
    out = ["\\ fair top-k selection model"]
    out.append("Minimize" if model.direction == "min" else "Maximize")
    out.append(" obj: " + _lincomb(model.c, model.names))
    out.append("Subject To")
    rel = {"<=": "<=", ">=": ">=", "=": "="}
    for i, (a, r, b) in enumerate(model.rows):
        out.append(f" r{i}: " + _lincomb(a, model.names) + f" {rel[r]} {_num(b)}")
    out.append("Bounds")
    for i, (lo, hi) in enumerate(model.bounds):
        lo_s = "-inf" if lo is None else _num(lo)
        hi_s = "+inf" if hi is None else _num(hi)
        out.append(f" {lo_s} <= {model.names[i]} <= {hi_s}")
    out.append("Binaries")
    out.append(" " + " ".join(model.names[i] for i in model.binaries))
    out.append("End")
    return "\n".join(out) + "\n"


def _lincomb(coeffs, names):
    terms = []
    for v, name in zip(coeffs, names):
        if v == 0.0:
            continue
        sign = "-" if v < 0 else ("+" if terms else "")
        terms.append(f"{sign} {_num(abs(v))} {name}".strip())
    return " ".join(terms) if terms else "0 " + names[0]


def _num(v):
    return f"{v:.12g}"


@dataclass(order=True)
class _Node:
    bound: float
    depth: int
    serial: int
    fixings: dict = field(compare=False)


def _band_split(model):
    """Candidates forced in or out of every top-k across the region."""
    verts = region_extreme_points(model.region)
    n = len(model.dataset)
    k = model.k
    if not verts or n <= k:
        return np.zeros(n, dtype=bool), np.zeros(n, dtype=bool), None, None
    V = np.array(verts)
    pts = model.dataset.points
    sv = pts[:, :-1] @ V.T + np.outer(pts[:, -1], 1.0 - V.sum(axis=1))
    smin, smax = sv.min(axis=1), sv.max(axis=1)
    u = np.partition(smax, n - k - 1)[n - k - 1]
    v = np.partition(smin, n - k)[n - k]
    sure_in = smin > u + TIE_EPS
    sure_out = smax < v - TIE_EPS
    lam_hi = float(smin[sure_in].min()) if sure_in.any() else None
    lam_lo = float(smax[sure_out].max()) if sure_out.any() else None
    return sure_in, sure_out, lam_hi, lam_lo


def _relaxation_rows(model, reduce_band):
    """Row set actually solved per node; reduced rows are equivalent."""
    d, n = model.dataset.d, len(model.dataset)
    rows = []
    base_fix = {}
    if reduce_band:
        sure_in, sure_out, lam_hi, lam_lo = _band_split(model)
        for i in np.nonzero(sure_in)[0]:
            base_fix[d + 1 + int(i)] = 1.0
        for i in np.nonzero(sure_out)[0]:
            base_fix[d + 1 + int(i)] = 0.0
        band = ~(sure_in | sure_out)
        for i in np.nonzero(band)[0]:
            rows.append(model.rows[2 * int(i)])
            rows.append(model.rows[2 * int(i) + 1])
        if lam_hi is not None:
            a = np.zeros(model.nvars)
            a[d] = 1.0
            rows.append((a, "<=", lam_hi))
        if lam_lo is not None:
            a = np.zeros(model.nvars)
            a[d] = 1.0
            rows.append((a, ">=", lam_lo))
    else:
        rows.extend(model.rows[: 2 * n])
    rows.extend(model.rows[2 * n:])
    return rows, base_fix


def solve_milp(model, node_budget=DEFAULT_NODE_BUDGET, reduce_band=True):
    """Optimal fair weights by best-first branch and bound, or None.

    Branches on the most fractional binary (ties: smallest candidate id),
    explores nodes in (bound, depth, serial) order and accepts incumbents
    only after a re-solve with the rounded binaries pinned.
    """
    d, n = model.dataset.d, len(model.dataset)
    base_rows, base_fix = _relaxation_rows(model, reduce_band)
    cuts = []
    sense = 1.0 if model.direction == "min" else -1.0

    def relax(fixings):
        rows = list(base_rows) + list(cuts)
        for idx, val in fixings.items():
            a = np.zeros(model.nvars)
            a[idx] = 1.0
            rows.append((a, "=", val))
        for i, (lo, hi) in enumerate(model.bounds):
            a = np.zeros(model.nvars)
            a[i] = 1.0
            if lo is not None:
                rows.append((a, ">=", lo))
            if hi is not None:
                rows.append((a.copy(), "<=", hi))
        return simplex_lp(LpProblem(model.c, rows, model.direction))

    serial = 0
    heap = []
    root = relax(base_fix)
    if root.status != "optimal":
        return None
    heapq.heappush(heap, _Node(sense * root.value, 0, serial, dict(base_fix)))
    incumbent = None
    best = math.inf
    nodes = 0
    n_cuts = 0

    while heap:
        node = heapq.heappop(heap)
        if node.bound >= best - CUT_TOL:
            continue
        nodes += 1
        if nodes > node_budget:
            raise BudgetExceededError(
                f"node budget {node_budget} exceeded",
                partial=_finish(model, incumbent),
            )
        out = relax(node.fixings)
        if out.status != "optimal":
            continue
        if sense * out.value >= best - CUT_TOL:
            continue
        delta = out.x[model.binaries]
        frac = np.abs(delta - np.round(delta))
        if frac.max() <= INT_TOL:
            rounded = np.round(delta)
            fix_all = dict(node.fixings)
            for pos, idx in enumerate(model.binaries):
                fix_all[idx] = float(rounded[pos])
            pinned = relax(fix_all)
            if pinned.status == "optimal" and sense * pinned.value < best - CUT_TOL:
                best = sense * pinned.value
                incumbent = (pinned.x.copy(), rounded.copy())
            elif pinned.status != "optimal":
                # exclude exactly this membership pattern and move on
                a = np.zeros(model.nvars)
                ones = rounded > 0.5
                for pos, idx in enumerate(model.binaries):
                    a[idx] = 1.0 if ones[pos] else -1.0
                cuts.append((a, "<=", float(ones.sum()) - 1.0))
                n_cuts += 1
                serial += 1
                heapq.heappush(
                    heap, _Node(sense * out.value, node.depth, serial, node.fixings)
                )
            continue
        order = np.lexsort((np.asarray(model.dataset.ids), -frac))
        pick = int(order[0])
        idx = model.binaries[pick]
        for val in (1.0, 0.0):
            serial += 1
            child = dict(node.fixings)
            child[idx] = val
            heapq.heappush(
                heap, _Node(sense * out.value, node.depth + 1, serial, child)
            )

    result = _finish(model, incumbent)
    if result is not None:
        result.extras["nodes"] = nodes
        result.extras["cuts"] = n_cuts
    return result


def _finish(model, incumbent):
    """Recompute the reported numbers from the pinned solve and rounding."""
    if incumbent is None:
        return None
    x, rounded = incumbent
    d = model.dataset.d
    w = np.clip(x[:d], 0.0, None)
    weight = WeightVector(w / w.sum())
    ids = model.dataset.ids
    subset = tuple(sorted(ids[pos] for pos in np.nonzero(rounded > 0.5)[0]))
    wo = model.region.reference
    if model.objective == W_DIFFERENCE:
        value = float(np.abs(weight.as_array() - wo.as_array()).sum())
        util = None
    else:
        util = float(model.so_scores[[model.dataset._index_of(c) for c in subset]].sum())
        uref = reference_topk_utility(model.dataset, model.k, wo)
        value = utility_loss(util, uref)
    return FairResult(
        weight=weight,
        objective=model.objective,
        value=value,
        subset=subset,
        engine="milp",
        utility=util,
    )
