"""
Tests for the batch-softmax contrastive loss family.
"""

import math

import numpy as np
import pytest

from src.common.error_handler import AllMaskedError, ContractError, EmptyBatchError, ShapeError
from src.losses.batch_softmax import (
    PairBatch, bsc_loss, bsc_loss_masked, bsc_loss_sum_form, combo_loss, compute_loss,
    duplicate_aggregated_loss, mse_loss, temperature_from_log, temperature_gradient, triplet_loss
)

from .test_base import LossTestBase


@pytest.mark.unit
@pytest.mark.losses
class TestPairBatch(LossTestBase):
    """Test cases for PairBatch."""

    def test_labels_default_to_ones(self):
        batch = PairBatch.create(np.ones((3, 2)), np.ones((3, 2)))
        np.testing.assert_array_equal(batch.labels, np.ones(3))
        assert batch.size == 3

    def test_empty_batch(self):
        with pytest.raises(EmptyBatchError):
            PairBatch.create(np.zeros((0, 4)), np.zeros((0, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            PairBatch.create(np.ones((3, 2)), np.ones((2, 2)))

    def test_label_count_mismatch(self):
        with pytest.raises(ShapeError):
            PairBatch.create(np.ones((3, 2)), np.ones((3, 2)), [1.0, 0.0])


@pytest.mark.unit
@pytest.mark.losses
class TestBscLoss(LossTestBase):
    """Test cases for the unmasked loss."""

    def test_identity_batch_single_direction(self, identity_batch):
        out = bsc_loss(identity_batch, self.loss_config(symmetrize=False))
        assert out.value == pytest.approx(-math.log(math.e / (math.e + 1.0)), abs=1e-6)
        assert out.value == pytest.approx(0.313262, abs=1e-6)

    def test_identity_batch_symmetric(self, identity_batch):
        out = bsc_loss(identity_batch, self.loss_config())
        assert out.value == pytest.approx(0.626523, abs=1e-6)

    def test_identity_batch_low_temperature(self, identity_batch):
        out = bsc_loss(identity_batch, self.loss_config(temperature=0.5, symmetrize=False))
        assert out.value == pytest.approx(0.126928, abs=1e-6)

    @pytest.mark.parametrize("normalization", ["none", "row_l2", "coord_l2", "coord_minmax"])
    def test_sum_form_matches_matrix_form(self, rng, normalization):
        for _ in range(100):
            m = int(rng.integers(2, 65))
            n = int(rng.integers(1, 33))
            tau = float(np.exp(rng.uniform(np.log(0.05), np.log(4.0))))
            batch = self.random_batch(rng, m=m, n=n)
            cfg = self.loss_config(temperature=tau, normalization=normalization, symmetrize=False)
            assert bsc_loss(batch, cfg).value == pytest.approx(bsc_loss_sum_form(batch, cfg), rel=1e-9, abs=1e-9)

    def test_matches_direct_evaluation(self, rng):
        batch = self.random_batch(rng, m=4, n=3)
        cfg = self.loss_config(temperature=0.7, symmetrize=False)
        assert bsc_loss(batch, cfg).value == pytest.approx(self.direct_l0(batch.Q, batch.A, 0.7), abs=1e-9)

    def test_symmetric_loss_adds_transposed_term(self, rng):
        batch = self.random_batch(rng, m=4, n=3)
        expected = self.direct_l0(batch.Q, batch.A, 0.5) + self.direct_l0(batch.A, batch.Q, 0.5)
        assert bsc_loss(batch, self.loss_config(temperature=0.5)).value == pytest.approx(expected, abs=1e-9)

    def test_loss_is_non_negative(self, rng):
        for _ in range(5):
            batch = self.random_batch(rng)
            assert bsc_loss(batch, self.loss_config(normalization="row_l2")).value >= 0.0

    def test_single_pair_batch_has_zero_loss(self):
        batch = PairBatch.create(np.array([[0.3, 0.4]]), np.array([[1.0, -2.0]]))
        out = bsc_loss(batch, self.loss_config())
        assert out.value == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(out.grad_Q, 0.0, atol=1e-12)

    def test_duplicate_aggregation_keeps_value(self, rng):
        Q = rng.standard_normal((5, 3))
        Q[3] = Q[0]
        Q[4] = Q[0]
        batch = PairBatch.create(Q, rng.standard_normal((5, 3)))
        for symmetrize in (False, True):
            cfg = self.loss_config(temperature=0.5, normalization="row_l2", symmetrize=symmetrize)
            assert duplicate_aggregated_loss(batch, cfg) == pytest.approx(bsc_loss(batch, cfg).value, abs=1e-9)

    def test_low_temperature_weights_hardest_negative(self):
        # Only row 0 contributes; answers 1, 2, 3 are negatives of decreasing similarity.
        Q = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
        A = np.array([[1.0, 0.0], [0.8, 0.6], [0.0, 1.0], [-0.6, 0.8]])
        labels = [1.0, 0.0, 0.0, 0.0]

        def hard_to_easy_ratio(tau):
            out = bsc_loss_masked(PairBatch.create(Q, A, labels), self.loss_config(temperature=tau, symmetrize=False))
            norms = np.linalg.norm(out.grad_A, axis=1)
            return norms[1] / norms[2], norms[2] / norms[3]

        warm = hard_to_easy_ratio(1.0)
        cold = hard_to_easy_ratio(0.1)
        assert warm[0] == pytest.approx(math.exp(0.8), rel=1e-9)
        assert cold[0] == pytest.approx(math.exp(8.0), rel=1e-9)
        assert cold[0] > warm[0]
        assert cold[1] > warm[1]


@pytest.mark.unit
@pytest.mark.losses
class TestMaskedLoss(LossTestBase):
    """Test cases for the masked loss."""

    def test_known_value(self, identity_batch):
        batch = PairBatch.create(np.eye(2), np.eye(2), [1.0, 0.0])
        out = bsc_loss_masked(batch, self.loss_config(symmetrize=False))
        assert out.value == pytest.approx(-0.5 + 0.5 * math.log(math.e + 1.0), abs=1e-6)
        assert out.value == pytest.approx(0.156631, abs=1e-6)

    def test_all_positive_equals_unmasked(self, rng):
        batch = self.random_batch(rng, labels=np.ones(5))
        cfg = self.loss_config(temperature=0.3, normalization="row_l2")
        masked = bsc_loss_masked(batch, cfg)
        plain = bsc_loss(batch, cfg)
        assert masked.value == pytest.approx(plain.value, abs=1e-12)
        np.testing.assert_allclose(masked.grad_Q, plain.grad_Q, atol=1e-12)

    def test_masked_rows_still_serve_as_negatives(self, rng):
        batch = self.random_batch(rng, m=4, n=3, labels=[1.0, 0.2, 1.0, 0.0])
        cfg = self.loss_config(temperature=0.5, symmetrize=False)
        expected = self.direct_l0(batch.Q, batch.A, 0.5, weights=np.array([1.0, 0.0, 1.0, 0.0]))
        out = bsc_loss_masked(batch, cfg)
        assert out.value == pytest.approx(expected, abs=1e-9)
        # Masked rows get no query gradient but their answers are pushed away.
        np.testing.assert_allclose(out.grad_Q[1], 0.0, atol=1e-12)
        assert np.linalg.norm(out.grad_A[1]) > 0.0

    def test_label_at_threshold_is_masked(self):
        batch = PairBatch.create(np.eye(2), np.eye(2), [1.0, 0.5])
        out = bsc_loss_masked(batch, self.loss_config(threshold=0.5, symmetrize=False))
        assert out.value == pytest.approx(0.156631, abs=1e-6)

    def test_all_masked(self):
        batch = PairBatch.create(np.eye(2), np.eye(2), [0.0, 0.1])
        with pytest.raises(AllMaskedError):
            bsc_loss_masked(batch, self.loss_config())


@pytest.mark.unit
@pytest.mark.losses
class TestMseAndCombo(LossTestBase):
    """Test cases for the pointwise and combined losses."""

    def test_mse_value(self):
        batch = PairBatch.create(np.eye(2), np.array([[0.5, 0.0], [0.0, 1.0]]), [1.0, 0.0])
        out = mse_loss(batch, self.loss_config())
        assert out.value == pytest.approx(((0.5 - 1.0) ** 2 + (1.0 - 0.0) ** 2) / 2)

    def test_combo_known_value(self, identity_batch):
        out = combo_loss(identity_batch, self.loss_config(combo_weight=0.5))
        assert out.value == pytest.approx(0.5 * 0.626523, abs=1e-6)

    def test_combo_endpoints(self, rng):
        batch = self.random_batch(rng, labels=[1.0, 0.0, 0.7, 0.3, 1.0])
        cfg_one = self.loss_config(combo_weight=1.0, normalization="row_l2")
        cfg_zero = self.loss_config(combo_weight=0.0, normalization="row_l2")
        assert combo_loss(batch, cfg_one).value == pytest.approx(bsc_loss_masked(batch, cfg_one).value)
        assert combo_loss(batch, cfg_zero).value == pytest.approx(mse_loss(batch, cfg_zero).value)

    def test_combo_is_convex_combination(self, rng):
        batch = self.random_batch(rng, labels=[1.0, 0.0, 0.7, 0.3, 1.0])
        cfg = self.loss_config(combo_weight=0.25, normalization="row_l2")
        expected = 0.25 * bsc_loss_masked(batch, cfg).value + 0.75 * mse_loss(batch, cfg).value
        assert combo_loss(batch, cfg).value == pytest.approx(expected)


@pytest.mark.unit
@pytest.mark.losses
class TestTripletLoss(LossTestBase):
    """Test cases for the triplet loss."""

    def test_value(self):
        anchor = np.array([[0.0, 0.0], [0.0, 0.0]])
        positive = np.array([[1.0, 0.0], [1.0, 0.0]])
        negative = np.array([[2.0, 0.0], [0.5, 0.0]])
        out = triplet_loss(anchor, positive, negative, margin=0.5)
        # Row 0 is inactive (1 - 2 + 0.5 < 0); row 1 contributes 1 - 0.5 + 0.5.
        assert out.value == pytest.approx(1.0 / 2)
        np.testing.assert_allclose(out.grad_Q[0], 0.0)
        assert out.grad_negative is not None

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            triplet_loss(np.ones((2, 2)), np.ones((2, 2)), np.ones((3, 2)), 0.5)


@pytest.mark.unit
@pytest.mark.losses
class TestTemperature(LossTestBase):
    """Test cases for the trainable temperature."""

    def test_clamped_to_bounds(self):
        assert temperature_from_log(math.log(0.1)) == pytest.approx(0.1)
        assert temperature_from_log(-50.0) == pytest.approx(1e-3)
        assert temperature_from_log(50.0) == pytest.approx(10.0)

    def test_gradient_requires_flag(self, identity_batch):
        with pytest.raises(ContractError):
            temperature_gradient(identity_batch, self.loss_config())

    def test_gradient_matches_finite_difference(self, rng):
        batch = self.random_batch(rng)
        cfg = self.loss_config(temperature=0.4, normalization="row_l2", temperature_trainable=True)
        step = 1e-6
        plus = bsc_loss(batch, cfg.model_copy(update={"temperature": 0.4 * math.exp(step)})).value
        minus = bsc_loss(batch, cfg.model_copy(update={"temperature": 0.4 * math.exp(-step)})).value
        assert temperature_gradient(batch, cfg) == pytest.approx((plus - minus) / (2 * step), rel=1e-5)

    def test_no_gradient_when_frozen(self, rng):
        batch = self.random_batch(rng)
        assert bsc_loss(batch, self.loss_config()).grad_tau == 0.0


@pytest.mark.unit
@pytest.mark.losses
class TestComputeLoss(LossTestBase):
    """Test cases for the variant dispatcher."""

    @pytest.mark.parametrize("variant", ["bsc", "bsc_masked", "mse", "combo"])
    def test_dispatch(self, variant, identity_batch):
        out = compute_loss(variant, identity_batch, self.loss_config())
        assert np.isfinite(out.value)
        assert out.grad_Q.shape == (2, 2)

    def test_triplet_is_not_a_pair_loss(self, identity_batch):
        with pytest.raises(ContractError, match="triplet_loss"):
            compute_loss("triplet", identity_batch, self.loss_config())

    def test_unknown_variant(self, identity_batch):
        with pytest.raises(ContractError):
            compute_loss("hinge", identity_batch, self.loss_config())


@pytest.mark.unit
@pytest.mark.losses
class TestRowPermutation(LossTestBase):
    """Reordering the rows of a batch leaves every pair loss unchanged."""

    @pytest.mark.parametrize("variant", ["bsc", "bsc_masked", "mse", "combo"])
    @pytest.mark.parametrize("normalization", ["none", "row_l2", "coord_l2", "coord_minmax"])
    def test_value_and_gradients_follow_the_permutation(self, rng, variant, normalization):
        cfg = self.loss_config(temperature=0.3, normalization=normalization, combo_weight=0.4)
        for _ in range(20):
            m = int(rng.integers(2, 17))
            n = int(rng.integers(1, 9))
            labels = rng.integers(0, 2, size=m).astype(np.float64)
            labels[0] = 1.0
            batch = self.random_batch(rng, m=m, n=n, labels=labels)
            perm = rng.permutation(m)
            permuted = PairBatch.create(batch.Q[perm], batch.A[perm], batch.labels[perm])

            out = compute_loss(variant, batch, cfg)
            out_permuted = compute_loss(variant, permuted, cfg)
            assert out_permuted.value == pytest.approx(out.value, rel=1e-9, abs=1e-12)
            np.testing.assert_allclose(out_permuted.grad_Q, out.grad_Q[perm], rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(out_permuted.grad_A, out.grad_A[perm], rtol=1e-9, atol=1e-12)
