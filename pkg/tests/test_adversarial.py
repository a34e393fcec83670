import math

import numpy as np
import pytest

from wtnorm.adversarial import (
    build_example1,
    build_example2,
    example1_erm,
    example1_expected_loss,
    example1_lower_bound,
    example2_erm,
    example2_miss_probability,
    run_example1_trials,
    run_example2_trials,
)
from wtnorm.bench import exact_expected_loss, empirical_loss
from wtnorm.distributions import SampleSet, sample
from wtnorm.solvers import LossSpec
from wtnorm.weighting import (
    SmoothingConfig,
    from_distribution,
    smooth,
    weighted_trace_norm,
)


class TestExample1Construction:
    def test_reference_parameters(self):
        inst = build_example1(60, 1800, seed=0)
        assert inst.a == 15  # floor((2*1800/60)^(2/3)) = floor(60^(2/3))
        assert inst.block_mass == pytest.approx(0.125)
        assert inst.dist.mass.sum() == pytest.approx(1.0, abs=1e-12)

    def test_block_layout(self):
        inst = build_example1(20, 120, seed=1)
        a, half = inst.a, 10
        assert np.all(inst.dist.mass[:a, :half] == 1.0 / (2 * inst.s))
        assert np.all(inst.dist.mass[:a, half:] == 0.0)
        assert np.all(inst.dist.mass[a:, :half] == 0.0)
        assert np.all(np.abs(inst.Y[:a, :half]) == 1.0)
        assert np.all(inst.Y[a:, :] == 0.0)

    def test_target_norm_within_unit_ball(self):
        for seed in range(5):
            inst = build_example1(30, 300, seed=seed)
            norm = weighted_trace_norm(inst.Y, from_distribution(inst.dist))
            assert norm <= 1.0 + 1e-9

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            build_example1(21, 500, seed=0)  # odd n
        with pytest.raises(ValueError):
            build_example1(60, 20, seed=0)  # block height collapses to zero
        with pytest.raises(ValueError):
            build_example1(4, 100, seed=0)  # block would swallow the matrix


class TestExample1Erm:
    def test_full_coverage_recovers_target(self):
        inst = build_example1(12, 60, seed=2)
        # enumerate every cell as the sample to cover the sign block fully
        rows, cols = np.divmod(np.arange(144), 12)
        S = SampleSet.from_arrays(rows, cols, inst.Y[rows, cols])
        Yhat = example1_erm(inst, S)
        assert np.array_equal(Yhat, inst.Y)
        assert exact_expected_loss(Yhat, inst.Y, inst.dist,
                                   LossSpec.clipped_absolute()) == 0.0

    def test_empty_overlap_gives_block_mass_loss(self):
        inst = build_example1(16, 100, seed=3)
        # all observations in the complementary block
        S = SampleSet.from_arrays([15, 14], [15, 14], [0.0, 0.0])
        Yhat = example1_erm(inst, S)
        assert np.array_equal(Yhat, np.zeros_like(inst.Y))
        lp = exact_expected_loss(Yhat, inst.Y, inst.dist, LossSpec.clipped_absolute())
        assert lp == pytest.approx(inst.block_mass, abs=1e-12)

    def test_training_loss_always_zero(self):
        inst = build_example1(20, 150, seed=4)
        for seed in range(5):
            S = sample(inst.dist, inst.s, inst.Y, seed=seed)
            Yhat = example1_erm(inst, S)
            assert empirical_loss(Yhat, S, LossSpec.clipped_absolute()) == 0.0
            assert weighted_trace_norm(Yhat, from_distribution(inst.dist)) <= 1 + 1e-9

    def test_monte_carlo_matches_closed_form(self):
        inst = build_example1(20, 200, seed=5)
        vals = run_example1_trials(inst, 200, seed=6)
        closed = example1_expected_loss(inst)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - closed) <= 3 * se
        assert vals.mean() >= example1_lower_bound(20, 200)

    def test_shared_enumeration_path(self):
        # the trial runner reports exactly what exact_expected_loss computes
        inst = build_example1(14, 80, seed=7)
        S = sample(inst.dist, inst.s, inst.Y, seed=8)
        direct = exact_expected_loss(example1_erm(inst, S), inst.Y, inst.dist,
                                     LossSpec.clipped_absolute())
        assert run_example1_trials(inst, 1, seed=8)[0] == direct


class TestExample1Bound:
    def test_unit_ratio(self):
        assert example1_lower_bound(100, 100) == pytest.approx(0.125)

    def test_reference_value(self):
        assert example1_lower_bound(60, 1800) == pytest.approx(0.0402, abs=1e-4)

    def test_monotone_in_s(self):
        vals = [example1_lower_bound(60, s) for s in (100, 400, 1600, 6400)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestExample2:
    def test_construction(self):
        inst = build_example2(10, 50)
        d = inst.dist
        assert d.row_marginals[0] == pytest.approx(1 / 50, abs=1e-12)
        assert d.col_marginals[0] == pytest.approx(1 / 50, abs=1e-12)
        assert np.all(d.mass[0, 1:] == 0) and np.all(d.mass[1:, 0] == 0)
        assert weighted_trace_norm(inst.A, from_distribution(d)) == pytest.approx(
            1.0, abs=1e-9)

    def test_erm_branches(self):
        inst = build_example2(8, 20)
        seen = SampleSet.from_arrays([0, 3], [0, 3], [0.0, 0.0])
        assert np.array_equal(example2_erm(inst, seen), np.zeros((8, 8)))
        unseen = SampleSet.from_arrays([3, 4], [3, 4], [0.0, 0.0])
        Yhat = example2_erm(inst, unseen)
        assert Yhat[0, 0] == 20.0
        assert exact_expected_loss(Yhat, inst.Y, inst.dist, LossSpec.absolute()) == \
            pytest.approx(1.0, abs=1e-12)

    def test_miss_probability(self):
        for s in (2, 5, 20, 100):
            assert example2_miss_probability(s) >= 0.25
        assert example2_miss_probability(100) == pytest.approx((0.99) ** 100)
        assert example2_miss_probability(10**6) == pytest.approx(math.exp(-1), rel=1e-5)

    def test_monte_carlo_matches_bernoulli(self):
        inst = build_example2(12, 40)
        vals = run_example2_trials(inst, 400, seed=9)
        closed = example2_miss_probability(40)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - closed) <= 3 * se
        assert vals.mean() >= 0.25

    def test_validation(self):
        with pytest.raises(ValueError):
            build_example2(10, 1)
        with pytest.raises(ValueError):
            build_example2(1, 10)

    def test_smoothing_excludes_adversary(self):
        # under half-smoothed marginals the spike's norm grows past any unit
        # budget whenever s exceeds about n, so the degenerate ERM is barred
        for n, s in ((10, 50), (20, 100), (30, 400)):
            inst = build_example2(n, s)
            w = smooth(from_distribution(inst.dist), SmoothingConfig(0.5))
            smoothed_norm = weighted_trace_norm(inst.A, w)
            expected = s * (0.5 / s + 0.5 / n)  # s * sqrt of the two equal floors
            assert smoothed_norm == pytest.approx(expected, rel=1e-9)
            assert smoothed_norm > 1.0
