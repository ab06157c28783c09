"""Loss values against hand computations and gradients against central
finite differences."""

from __future__ import annotations

import math

import numpy as np
import pytest

from centertrack.losses import EPS, LossValue, clamp_probs, focal_loss, l1_regression_loss, score_bce

from oracles import finite_difference_gradient


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)


class TestFocalLoss:
    def test_single_positive_cell_hand_value(self):
        pred = np.array([[[0.5]]])
        target = np.array([[[1.0]]])
        out = focal_loss(pred, target, alpha=2.0)
        assert out.value == pytest.approx(0.25 * math.log(2.0), abs=1e-12)

    def test_perfect_prediction_limit(self):
        pred = np.full((3, 3, 1), EPS)
        target = np.zeros((3, 3, 1))
        pred[1, 1, 0] = 1.0 - EPS
        target[1, 1, 0] = 1.0
        assert focal_loss(pred, target).value < 1e-5

    def test_normalized_by_positive_count(self):
        pred = np.full((2, 2, 1), 0.5)
        target = np.zeros((2, 2, 1))
        one_pos = target.copy()
        one_pos[0, 0, 0] = 1.0
        two_pos = target.copy()
        two_pos[0, 0, 0] = 1.0
        two_pos[1, 1, 0] = 1.0
        single = focal_loss(pred, one_pos)
        double = focal_loss(pred, two_pos)
        # Two positives: one more positive term, normalizer 2 instead of 1.
        pos_term = 0.25 * math.log(2.0)
        neg_term = -0.25 * math.log(0.5)
        assert single.value == pytest.approx(pos_term + 3 * neg_term, abs=1e-12)
        assert double.value == pytest.approx((2 * pos_term + 2 * neg_term) / 2, abs=1e-12)

    def test_soft_targets_downweight_negatives(self):
        pred = np.full((1, 1, 1), 0.5)
        soft = focal_loss(pred, np.array([[[0.9]]]), beta=4.0)
        hard = focal_loss(pred, np.array([[[0.0]]]), beta=4.0)
        assert soft.value == pytest.approx(hard.value * 0.1**4, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(37)
        for _ in range(20):
            pred = rng.uniform(0.05, 0.95, size=(4, 3, 2))
            target = rng.uniform(0.0, 0.9, size=(4, 3, 2))
            flat = target.reshape(-1)
            flat[rng.integers(0, flat.size, size=2)] = 1.0
            out = focal_loss(pred, target)
            fd = finite_difference_gradient(lambda p: focal_loss(p, target).value, pred)
            assert rel_error(out.gradient, fd) < 1e-4

    def test_shape_mismatch_and_range_rejected(self):
        with pytest.raises(ValueError):
            focal_loss(np.zeros((2, 2, 1)) + 0.5, np.zeros((2, 1, 1)))
        with pytest.raises(ValueError):
            focal_loss(np.zeros((2, 2, 1)), np.zeros((2, 2, 1)))

    def test_clamp_probs_keeps_values_interior(self):
        clamped = clamp_probs(np.array([0.0, 0.5, 1.0]))
        assert clamped[0] == EPS and clamped[2] == 1.0 - EPS and clamped[1] == 0.5


class TestL1RegressionLoss:
    def test_zero_at_equality(self):
        rng = np.random.default_rng(41)
        pred = rng.normal(size=(5, 5, 4))
        mask = rng.random((5, 5)) < 0.3
        out = l1_regression_loss(pred, pred.copy(), mask)
        assert out.value == 0.0
        assert not out.gradient.any()

    def test_empty_mask_zero(self):
        out = l1_regression_loss(np.ones((3, 3, 2)), np.zeros((3, 3, 2)), np.zeros((3, 3), dtype=bool))
        assert out.value == 0.0
        assert not out.gradient.any()

    def test_hand_value_one_cell_two_channels(self):
        pred = np.zeros((2, 2, 2))
        target = np.zeros((2, 2, 2))
        mask = np.zeros((2, 2), dtype=bool)
        mask[0, 1] = True
        pred[0, 1] = (0.5, -1.5)
        assert l1_regression_loss(pred, target, mask).value == pytest.approx(1.0, abs=1e-15)

    def test_unmasked_cells_contribute_nothing(self):
        pred = np.zeros((2, 2, 1))
        target = np.zeros((2, 2, 1))
        mask = np.zeros((2, 2), dtype=bool)
        mask[0, 0] = True
        pred[1, 1, 0] = 100.0  # unmasked garbage must not leak in
        out = l1_regression_loss(pred, target, mask)
        assert out.value == 0.0
        assert out.gradient[1, 1, 0] == 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(43)
        for _ in range(20):
            target = rng.normal(size=(4, 4, 3))
            # Keep predictions away from the |.| kink relative to the FD step.
            signs = rng.choice([-1.0, 1.0], size=target.shape)
            pred = target + signs * rng.uniform(0.01, 1.0, size=target.shape)
            mask = rng.random((4, 4)) < 0.5
            out = l1_regression_loss(pred, target, mask)
            fd = finite_difference_gradient(lambda p: l1_regression_loss(p, target, mask).value, pred)
            assert rel_error(out.gradient, fd) < 1e-4


class TestScoreBce:
    def test_half_half_is_log_two(self):
        assert score_bce(0.5, 0.5).value == pytest.approx(math.log(2.0), abs=1e-12)

    def test_perfect_prediction_limit(self):
        assert score_bce(1.0, 1.0).value < 1e-5
        assert score_bce(0.0, 0.0).value < 1e-5

    def test_gradient_formula(self):
        rng = np.random.default_rng(47)
        for _ in range(20):
            p = float(rng.uniform(0.05, 0.95))
            t = float(rng.uniform(0.0, 1.0))
            out = score_bce(p, t)
            assert float(out.gradient) == pytest.approx((p - t) / (p * (1 - p)), abs=1e-12)
            fd = finite_difference_gradient(lambda x: score_bce(float(x[0]), t).value, np.array([p]))
            assert abs(float(out.gradient) - fd[0]) < 1e-6 * max(abs(fd[0]), 1.0)

    def test_clamps_extreme_inputs(self):
        out = score_bce(2.0, 1.0)
        assert math.isfinite(out.value)
        with pytest.raises(ValueError):
            score_bce(0.5, 1.5)


class TestLossValueInvariants:
    def test_all_losses_non_negative(self):
        rng = np.random.default_rng(53)
        for _ in range(50):
            pred = rng.uniform(0.01, 0.99, size=(3, 3, 2))
            target = rng.uniform(0.0, 1.0, size=(3, 3, 2))
            assert focal_loss(pred, target).value >= 0.0
            mask = rng.random((3, 3)) < 0.5
            assert l1_regression_loss(pred, target, mask).value >= 0.0
            assert score_bce(float(rng.uniform(0, 1)), float(rng.uniform(0, 1))).value >= 0.0

    def test_loss_value_type(self):
        out = focal_loss(np.full((1, 1, 1), 0.5), np.ones((1, 1, 1)))
        assert isinstance(out, LossValue)
        assert out.gradient.shape == (1, 1, 1)
