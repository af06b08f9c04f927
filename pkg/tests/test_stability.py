"""Perturbation-stable weights: cell centering and margins."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fairtopk.core import Candidate, Dataset, WeightRegion, WeightVector
from fairtopk.geometry import lift_weight, project_weight
from fairtopk.stability import stable_weight, stable_weight_2d, stable_weight_md
from fairtopk.verify import decompose_topk
from conftest import tied_instance


def region_box(wo, eps):
    return WeightRegion.box(WeightVector(wo), epsilon=eps)


class TestWorkedExample:
    def test_interval_midpoint_and_margin(self, five_dataset):
        region = region_box((0.5, 0.5), 1.0)
        res = stable_weight_2d(five_dataset, 2, (2, 4), region)
        assert res is not None
        assert_allclose(res.weight[0], 26 / 45, atol=1e-12)
        assert_allclose(res.margin, 1 / 45, atol=1e-12)
        assert_allclose(res.box_radius, res.margin, atol=0)
        assert not res.degenerate
        # midpoint +- margin reaches exactly the cell border crossings
        assert_allclose(res.weight[0] - res.margin, 5 / 9, atol=1e-12)
        assert_allclose(res.weight[0] + res.margin, 3 / 5, atol=1e-12)

    def test_md_agrees_with_2d(self, five_dataset):
        region = region_box((0.5, 0.5), 1.0)
        a = stable_weight_2d(five_dataset, 2, (2, 4), region)
        b = stable_weight_md(five_dataset, 2, (2, 4), region)
        assert_allclose(a.weight.as_array(), b.weight.as_array(), atol=1e-9)
        assert_allclose(a.margin, b.margin, atol=1e-9)

    def test_dispatcher_picks_by_dimension(self, five_dataset):
        region = region_box((0.5, 0.5), 1.0)
        res = stable_weight(five_dataset, 2, (2, 4), region)
        assert_allclose(res.weight[0], 26 / 45, atol=1e-12)

    def test_unreachable_subset_returns_none(self, five_dataset):
        # {0, 1} requires beating (0.9, 0.9), impossible anywhere
        region = region_box((0.5, 0.5), 1.0)
        assert stable_weight_2d(five_dataset, 2, (0, 1), region) is None
        assert stable_weight_md(five_dataset, 2, (0, 1), region) is None

    def test_region_clamps_the_cell(self, five_dataset):
        # cell of {2,4} is [5/9, 3/5]; region cuts it at 0.58
        region = WeightRegion.box(
            WeightVector((0.5, 0.5)), 1.0, extra=[(-1.0, 0.0, 0.58)]
        )
        res = stable_weight_2d(five_dataset, 2, (2, 4), region)
        assert_allclose(res.weight[0], 0.5 * (5 / 9 + 0.58), atol=1e-12)
        assert_allclose(res.margin, 0.5 * (0.58 - 5 / 9), atol=1e-12)

    def test_wrong_subset_size_rejected(self, five_dataset):
        region = region_box((0.5, 0.5), 1.0)
        with pytest.raises(ValueError):
            stable_weight_2d(five_dataset, 2, (2,), region)
        with pytest.raises(ValueError):
            stable_weight_md(five_dataset, 2, (0, 2, 4), region)


class TestAgreementAcrossImplementations:
    def test_random_2d_instances(self):
        rng = np.random.default_rng(307)
        compared = 0
        for trial in range(80):
            k = int(rng.integers(1, 6))
            data, _ = tied_instance(rng, n=12, k=k, dup_rate=float(rng.uniform(0, 0.5)))
            x = float(rng.uniform(0, 1))
            subset = tuple(decompose_topk(data, k, WeightVector((x, 1 - x))).order[:k])
            region = region_box(tuple(rng.dirichlet(np.ones(2))), float(rng.uniform(0.1, 0.6)))
            a = stable_weight_2d(data, k, subset, region)
            b = stable_weight_md(data, k, subset, region)
            if a is None or b is None:
                assert (a is None) == (b is None), f"trial {trial}"
                continue
            compared += 1
            assert_allclose(a.margin, b.margin, atol=1e-8), f"trial {trial}"
            if a.margin > 1e-7:
                assert_allclose(
                    a.weight.as_array(), b.weight.as_array(), atol=1e-7
                ), f"trial {trial}"
            assert a.degenerate == b.degenerate
        assert compared > 30


class TestMarginSemantics:
    def test_duplicate_cross_pair_is_degenerate(self):
        cands = [
            Candidate(0, (0.9, 0.9), set()),
            Candidate(1, (0.5, 0.5), set()),
            Candidate(2, (0.5, 0.5), set()),
            Candidate(3, (0.1, 0.2), set()),
        ]
        data = Dataset(cands)
        region = region_box((0.5, 0.5), 1.0)
        res = stable_weight(data, 2, (0, 1), region)
        assert res is not None
        assert res.degenerate
        assert res.margin == 0.0

    def test_margin_never_grows_when_region_shrinks(self):
        rng = np.random.default_rng(311)
        for trial in range(25):
            d = int(rng.integers(2, 4))
            k = int(rng.integers(1, 5))
            data, _ = tied_instance(rng, n=10, d=d, k=k, dup_rate=0.2)
            wo = tuple(rng.dirichlet(np.ones(d)))
            w_seed = WeightVector(tuple(rng.dirichlet(np.ones(d))))
            subset = tuple(decompose_topk(data, k, w_seed).order[:k])
            big = stable_weight(data, k, subset, region_box(wo, 0.4))
            small = stable_weight(data, k, subset, region_box(wo, 0.1))
            if small is None:
                continue
            assert big is not None, "shrinking cannot create feasibility"
            assert big.margin >= small.margin - 1e-9

    def test_perturbations_inside_box_radius_keep_the_subset(self):
        rng = np.random.default_rng(313)
        exercised = 0
        for trial in range(40):
            d = int(rng.integers(2, 5))
            k = int(rng.integers(1, 6))
            data, _ = tied_instance(rng, n=11, d=d, k=k, dup_rate=0.0)
            w_seed = WeightVector(tuple(rng.dirichlet(np.ones(d))))
            subset = tuple(sorted(decompose_topk(data, k, w_seed).order[:k]))
            res = stable_weight(data, k, subset, region_box(tuple(w_seed), 0.3))
            if res is None or res.margin <= 1e-9:
                continue
            exercised += 1
            y0 = project_weight(res.weight)
            for _ in range(25):
                delta = rng.uniform(-1, 1, size=d - 1) * 0.9 * res.box_radius
                y = np.asarray(y0) + delta
                if np.any(y < 0) or y.sum() > 1.0:
                    continue  # outside the simplex, lift would distort
                w = lift_weight(y)
                got = tuple(sorted(decompose_topk(data, k, w).order[:k]))
                assert got == subset, f"trial {trial}: {got} != {subset}"
        assert exercised > 10

    def test_stable_weight_is_inside_the_region(self):
        rng = np.random.default_rng(317)
        for trial in range(30):
            d = int(rng.integers(2, 4))
            k = int(rng.integers(1, 5))
            data, _ = tied_instance(rng, n=10, d=d, k=k, dup_rate=0.3)
            wo = tuple(rng.dirichlet(np.ones(d)))
            w_seed = WeightVector(tuple(rng.dirichlet(np.ones(d))))
            subset = tuple(decompose_topk(data, k, w_seed).order[:k])
            region = region_box(wo, 0.25)
            res = stable_weight(data, k, subset, region)
            if res is None:
                continue
            assert region.contains(res.weight, tol=1e-7)
