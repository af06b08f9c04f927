"""Fairness verification of a fixed weight vector under exact tie handling.

A weight vector is fair when at least one of its top-k subsets satisfies
every per-group count interval.  Candidates tied with the k-th score are
interchangeable, so verification reduces to distributing the slack (the
tied seats) over membership profiles: bitmasks of protected-group
membership.  A bounded backtracking search over those integer assignments
decides the question without enumerating individual candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import (
    TIE_EPS,
    BudgetExceededError,
    UTILITY_LOSS,
    encode_profile,
    is_fair_counts,
    weight_components,
)


@dataclass(frozen=True)
class TieDecomposition:
    """Top-k cut of the score order with the tie band made explicit.

    order is every candidate id sorted by (score desc, id asc); the first k
    entries are the canonical top-k subset.  strict holds the ids scoring
    strictly above the pivot band, tied_in the remaining members of the
    canonical top-k, tied_out the non-members inside the band.
    """

    order: tuple
    strict: tuple
    tied_in: tuple
    tied_out: tuple
    pivot: int
    pivot_score: float
    slack: int
    scores: dict

    @property
    def tied(self):
        return self.tied_in + self.tied_out


def decompose_topk(dataset, k, w, tol=TIE_EPS):
    """Deterministic tie decomposition of the top-k cut under w."""
    n = len(dataset)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    scores = dataset.scores(w)
    ids = np.asarray(dataset.ids)
    perm = np.lexsort((ids, -scores))
    order = ids[perm]
    ordered_scores = scores[perm]
    pivot_score = float(ordered_scores[k - 1])
    above = ordered_scores > pivot_score + tol
    in_band = np.abs(ordered_scores - pivot_score) <= tol
    strict = order[:k][above[:k]]
    tied_in = order[:k][in_band[:k]]
    tied_out = order[k:][in_band[k:]]
    return TieDecomposition(
        order=tuple(int(i) for i in order),
        strict=tuple(int(i) for i in strict),
        tied_in=tuple(int(i) for i in tied_in),
        tied_out=tuple(int(i) for i in tied_out),
        pivot=int(order[k - 1]),
        pivot_score=pivot_score,
        slack=int(len(tied_in)),
        scores={int(i): float(s) for i, s in zip(order, ordered_scores)},
    )


@dataclass
class ProfileTally:
    """Aggregated view of a tie decomposition by membership profile.

    base holds per-protected-group counts contributed by the strict part.
    avail maps profile code -> number of tied candidates carrying it, and
    prefix maps profile code -> descending-reference-score prefix sums over
    those candidates (prefix[p][m] = best utility of m picks), present only
    when a reference weight was supplied.
    """

    n_protected: int
    base: tuple
    avail: dict
    prefix: dict = None
    members: dict = None

    @classmethod
    def from_decomposition(cls, dataset, decomp, n_protected, wo=None):
        base = [0] * n_protected
        for cid in decomp.strict:
            for g in dataset.by_id(cid).groups:
                if g < n_protected:
                    base[g] += 1
        avail, members = {}, {}
        for cid in decomp.tied:
            code = encode_profile(dataset.by_id(cid).groups, n_protected)
            avail[code] = avail.get(code, 0) + 1
            members.setdefault(code, []).append(cid)
        prefix = None
        if wo is not None:
            wo_arr = np.asarray(weight_components(wo, dataset.d))
            prefix = {}
            for code, cids in members.items():
                scored = sorted(
                    cids,
                    key=lambda c: (-float(np.dot(dataset.by_id(c).point, wo_arr)), c),
                )
                members[code] = scored
                sums = [0.0]
                for c in scored:
                    sums.append(sums[-1] + float(np.dot(dataset.by_id(c).point, wo_arr)))
                prefix[code] = tuple(sums)
        else:
            for code in members:
                members[code] = sorted(members[code])
        return cls(
            n_protected=n_protected,
            base=tuple(base),
            avail=dict(avail),
            prefix=prefix,
            members=members,
        )


@dataclass
class SearchStats:
    """Counters exposed for the leaf-bound guarantee tests."""

    leaves: int = 0
    nodes: int = 0


def assignment_leaf_bound(slack, tally):
    """Combinatorial cap on fair-assignment leaves: C(t + beta - 1, beta - 1)."""
    beta = sum(1 for v in tally.avail.values() if v > 0)
    if beta == 0:
        return 1
    return math.comb(slack + beta - 1, beta - 1)


def _profile_groups(code):
    groups = []
    j = 0
    while code:
        if code & 1:
            groups.append(j)
        code >>= 1
        j += 1
    return groups


def _search(tally, slack, spec, mode, stats=None):
    """Enumerate per-profile seat counts summing to slack.

    mode "exists" stops at the first fair leaf, "first" returns its
    assignment, "best" scans every fair leaf and keeps the one with the
    largest tied-part utility.  Branches die early when a group already
    exceeds its upper bound (counts only grow) or when the seats still to
    place cannot lift every group to its lower bound.
    """
    if stats is None:
        stats = SearchStats()
    profiles = sorted(
        (code for code, a in tally.avail.items() if a > 0),
        key=lambda code: (-tally.avail[code], code),
    )
    n_profiles = len(profiles)
    avail = [tally.avail[p] for p in profiles]
    groups_of = [_profile_groups(p) for p in profiles]
    suffix = [0] * (n_profiles + 1)
    for i in range(n_profiles - 1, -1, -1):
        suffix[i] = suffix[i + 1] + avail[i]
    # per-group availability in the suffix, for the lower-bound prune
    rem = [[0] * spec.n_protected for _ in range(n_profiles + 1)]
    for i in range(n_profiles - 1, -1, -1):
        rem[i] = rem[i + 1][:]
        for g in groups_of[i]:
            rem[i][g] += avail[i]
    if slack > suffix[0]:
        return None
    counts = list(tally.base)
    lower, upper = spec.lower, spec.upper

    best_assign, best_util = None, -math.inf

    def feasible_here(i, remaining):
        for g in range(spec.n_protected):
            c = counts[g]
            if c > upper[g]:
                return False
            if c + min(remaining, rem[i][g]) < lower[g]:
                return False
        return True

    # iterative depth-first walk; frames carry (depth, remaining, next m)
    assign = [0] * n_profiles

    def walk(i, remaining):
        nonlocal best_assign, best_util
        stats.nodes += 1
        if not feasible_here(i, remaining):
            return None
        if remaining == 0 or i == n_profiles:
            if remaining != 0:
                return None
            stats.leaves += 1
            if all(lower[g] <= counts[g] <= upper[g] for g in range(spec.n_protected)):
                taken = {profiles[j]: assign[j] for j in range(i) if assign[j]}
                if mode == "best":
                    util = sum(
                        tally.prefix[p][m] for p, m in taken.items()
                    )
                    if util > best_util + 1e-15:
                        best_util, best_assign = util, taken
                    return None
                return taken
            return None
        hi = min(avail[i], remaining)
        lo = max(0, remaining - suffix[i + 1])
        for m in range(hi, lo - 1, -1):
            assign[i] = m
            for g in groups_of[i]:
                counts[g] += m
            hit = walk(i + 1, remaining - m)
            for g in groups_of[i]:
                counts[g] -= m
            assign[i] = 0
            if hit is not None and mode != "best":
                return hit
        return None

    hit = walk(0, slack)
    if mode == "best":
        if best_assign is None:
            return None
        return best_assign, best_util
    return hit


def backtrack_tiebreak(tally, slack, spec, stats=None):
    """Does any distribution of the tied seats satisfy every bound."""
    return _search(tally, slack, spec, "exists", stats) is not None


def max_utility_tiebreak(tally, slack, spec, wo, stats=None):
    """Best reference-weight utility over fair tied-seat assignments.

    Returns (assignment, tied_utility) or None when no assignment is fair.
    With a single protected group the scan collapses to choosing how many
    in-group seats to take, evaluated directly over prefix sums.
    """
    if tally.prefix is None:
        raise ValueError("tally was built without a reference weight")
    if spec.n_protected <= 1:
        in_code, out_code = 1, 0
        a_in = tally.avail.get(in_code, 0)
        a_out = tally.avail.get(out_code, 0)
        base = tally.base[0] if spec.n_protected else 0
        lo_m = max(0, slack - a_out)
        hi_m = min(slack, a_in)
        if spec.n_protected:
            lo_m = max(lo_m, spec.lower[0] - base)
            hi_m = min(hi_m, spec.upper[0] - base)
        best = None
        zero = (0.0,)
        for m in range(lo_m, hi_m + 1):
            util = tally.prefix.get(in_code, zero)[m] + tally.prefix.get(out_code, zero)[slack - m]
            if best is None or util > best[1] + 1e-15:
                assign = {}
                if m:
                    assign[in_code] = m
                if slack - m:
                    assign[out_code] = slack - m
                best = (assign, util)
        return best
    return _search(tally, slack, spec, "best", stats)


def _group_interval_prune(tally, slack, spec):
    """Necessary per-group reach test; False means provably unfair."""
    total = sum(tally.avail.values())
    if slack > total:
        return False
    for g in range(spec.n_protected):
        in_avail = sum(a for code, a in tally.avail.items() if code >> g & 1)
        out_avail = total - in_avail
        hi = tally.base[g] + min(slack, in_avail)
        lo = tally.base[g] + max(0, slack - out_avail)
        if hi < spec.lower[g] or lo > spec.upper[g]:
            return False
    return True


def verify_fair(dataset, k, spec, w, stats=None):
    """Is some top-k subset under w inside every group-count interval."""
    spec.validate(k)
    decomp = decompose_topk(dataset, k, w)
    tally = ProfileTally.from_decomposition(dataset, decomp, spec.n_protected)
    if spec.n_protected == 0:
        return True
    if decomp.slack == 0:
        return is_fair_counts(tally.base, spec)
    if not _group_interval_prune(tally, decomp.slack, spec):
        return False
    if spec.n_protected == 1:
        return True  # the interval test above is exact for one group
    return backtrack_tiebreak(tally, decomp.slack, spec, stats)


def _materialize(tally, strict, assignment):
    chosen = list(strict)
    for code, m in assignment.items():
        chosen.extend(tally.members[code][:m])
    return tuple(sorted(chosen))


def fair_topk_witness(dataset, k, spec, w, objective=UTILITY_LOSS, wo=None):
    """A concrete fair top-k subset under w, or None.

    Under the utility objective the tied seats go to a fair assignment
    maximizing reference-weight utility; otherwise any fair assignment is
    returned.  wo defaults to w itself.
    """
    spec.validate(k)
    if wo is None:
        wo = weight_components(w, dataset.d)
    decomp = decompose_topk(dataset, k, w)
    tally = ProfileTally.from_decomposition(dataset, decomp, spec.n_protected, wo=wo)
    if decomp.slack == 0:
        return decomp.strict if is_fair_counts(tally.base, spec) else None
    if not _group_interval_prune(tally, decomp.slack, spec):
        return None
    if objective == UTILITY_LOSS or spec.n_protected <= 1:
        hit = max_utility_tiebreak(tally, decomp.slack, spec, wo)
        if hit is None:
            return None
        return _materialize(tally, decomp.strict, hit[0])
    hit = _search(tally, decomp.slack, spec, "first")
    if hit is None:
        return None
    return _materialize(tally, decomp.strict, hit)


def max_fair_utility(dataset, k, spec, w, wo):
    """(witness subset, total reference utility) of the best fair tie choice.

    Returns None when w is unfair.  The strict part contributes its full
    utility; the tied seats are assigned by max_utility_tiebreak.
    """
    spec.validate(k)
    decomp = decompose_topk(dataset, k, w)
    tally = ProfileTally.from_decomposition(dataset, decomp, spec.n_protected, wo=wo)
    wo_arr = np.asarray(weight_components(wo, dataset.d))
    strict_util = float(
        sum(np.dot(dataset.by_id(c).point, wo_arr) for c in decomp.strict)
    )
    if decomp.slack == 0:
        if is_fair_counts(tally.base, spec):
            return decomp.strict, strict_util
        return None
    if not _group_interval_prune(tally, decomp.slack, spec):
        return None
    hit = max_utility_tiebreak(tally, decomp.slack, spec, wo)
    if hit is None:
        return None
    assignment, tied_util = hit
    return _materialize(tally, decomp.strict, assignment), strict_util + tied_util


def reference_topk_utility(dataset, k, wo):
    """Utility of the unconstrained top-k under the reference weights."""
    decomp = decompose_topk(dataset, k, wo)
    return float(sum(decomp.scores[c] for c in decomp.order[:k]))


def naive_verify_oracle(dataset, k, spec, w, budget=2_000_000):
    """Reference answer by enumerating every tie-break of the top-k cut.

    Refuses (BudgetExceededError) when the number of tied-seat choices
    exceeds the budget; intended for tests only.
    """
    spec.validate(k)
    decomp = decompose_topk(dataset, k, w)
    if spec.n_protected == 0:
        return True
    tied = decomp.tied
    total = math.comb(len(tied), decomp.slack)
    if total > budget:
        raise BudgetExceededError(
            f"{total} tie-break choices exceed the oracle budget {budget}"
        )
    base = [0] * spec.n_protected
    for cid in decomp.strict:
        for g in dataset.by_id(cid).groups:
            if g < spec.n_protected:
                base[g] += 1
    for pick in combinations(tied, decomp.slack):
        counts = base[:]
        for cid in pick:
            for g in dataset.by_id(cid).groups:
                if g < spec.n_protected:
                    counts[g] += 1
        if is_fair_counts(counts, spec):
            return True
    return False
