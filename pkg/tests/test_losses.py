"""
Unit tests for training losses and the optimizer.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from setgen.errors import ConfigError
from setgen.models import DeformationField, VelocityField
from setgen.plugins.similarity.mse import mse
from setgen.plugins.similarity.ncc import ncc_dissimilarity
from setgen.services.deformation_service import identity_grid
from setgen.services.loss_service import (ABLATION_PRESETS, LossParts, LossWeights, even_loss,
                                          gradient_loss, kl_loss, recon_loss, temp_loss,
                                          total_loss, warped_loss)
from setgen.services.optim_service import AdamState, ScheduleConfig, adam_step, cosine_lr
from setgen.tensor import DiffGraph, Tensor, backward

finite = st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False)


@pytest.mark.unit
class TestLossTerms:
    """Tests for the individual loss terms."""

    def test_recon_is_mse(self, rng):
        a, b = rng.uniform(size=(1, 1, 4, 4)), rng.uniform(size=(1, 1, 4, 4))
        assert recon_loss(Tensor(a), Tensor(b)).item() == pytest.approx(np.mean((a - b) ** 2))

    def test_kl_zero_at_standard_normal(self):
        zeros = Tensor(np.zeros((2, 3, 2, 2)))
        assert kl_loss(zeros, zeros).item() == pytest.approx(0.0)

    def test_kl_closed_form(self):
        mu = np.full((1, 2), 1.0)
        log_var = np.full((1, 2), math.log(2.0))
        expected = -0.5 * 2 * (1.0 + math.log(2.0) - 1.0 - 2.0)
        assert kl_loss(Tensor(mu), Tensor(log_var)).item() == pytest.approx(expected)

    def test_kl_averages_over_batch(self, rng):
        mu = rng.standard_normal((1, 3))
        lv = rng.standard_normal((1, 3))
        single = kl_loss(Tensor(mu), Tensor(lv)).item()
        double = kl_loss(Tensor(np.concatenate([mu, mu])), Tensor(np.concatenate([lv, lv]))).item()
        assert double == pytest.approx(single)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (1, 2, 4, 4), elements=finite))
    def test_even_is_zero_for_opposite_fields(self, u):
        assert even_loss(Tensor(u), Tensor(-u)).item() == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (1, 2, 4, 4), elements=finite),
           arrays(np.float64, (1, 2, 4, 4), elements=finite))
    def test_even_is_symmetric(self, u1, u2):
        assert even_loss(Tensor(u1), Tensor(u2)).item() == \
            pytest.approx(even_loss(Tensor(u2), Tensor(u1)).item())

    def test_even_sums_components(self):
        u = np.zeros((1, 2, 4, 4))
        u[:, 0] = 1.0
        u[:, 1] = 2.0
        assert even_loss(Tensor(u), Tensor(np.zeros_like(u))).item() == pytest.approx(5.0)

    def test_template_terms_with_identity(self, rng):
        image = Tensor(rng.uniform(size=(1, 1, 6, 6)))
        identity = DeformationField(Tensor(identity_grid((6, 6))))
        assert temp_loss(image, image, image, identity, identity).item() == pytest.approx(0.0)
        assert warped_loss(image, image, identity, identity).item() == pytest.approx(0.0)

    def test_gradient_loss_of_linear_ramp(self):
        ramp = np.broadcast_to(np.arange(5.0)[:, None], (5, 5))
        v = np.stack([ramp, np.zeros((5, 5))])[None]
        # one unit step along axis 0 on one of two channels, zero along axis 1
        assert gradient_loss(Tensor(v)).item() == pytest.approx(0.5)

    def test_gradient_loss_accepts_velocity_fields(self):
        ramp = np.broadcast_to(np.arange(5.0)[:, None], (5, 5))
        values = Tensor(np.stack([ramp, np.zeros((5, 5))])[None], requires_grad=True)
        with DiffGraph() as graph:
            loss = gradient_loss(VelocityField(values))
        assert loss.item() == pytest.approx(0.5)
        backward(loss, graph)
        assert values.grad.shape == (1, 2, 5, 5)

    def test_ncc_identical_and_inverted(self, rng):
        a = rng.uniform(size=(2, 1, 6, 6))
        assert ncc_dissimilarity(Tensor(a), Tensor(a)).item() == pytest.approx(0.0, abs=1e-5)
        assert ncc_dissimilarity(Tensor(a), Tensor(1.0 - a)).item() == pytest.approx(2.0, abs=1e-5)

    def test_mse_symmetric(self, rng):
        a, b = rng.uniform(size=(3, 3)), rng.uniform(size=(3, 3))
        assert mse(a, b).item() == pytest.approx(mse(b, a).item())


@pytest.mark.unit
class TestLossWeights:
    """Tests for loss weighting and ablation presets."""

    def test_defaults(self):
        weights = LossWeights()
        assert weights.to_dict() == {'sim': 300.0, 'kl': 0.0002, 'even': 5.0, 'temp': 100.0,
                                     'warped': 200.0}

    def test_negative_weight(self):
        with pytest.raises(ConfigError):
            LossWeights(even=-1.0)

    @pytest.mark.parametrize('tag', sorted(ABLATION_PRESETS))
    def test_ablation_keeps_vae_terms(self, tag):
        weights = LossWeights.for_ablation(tag)
        assert weights.sim == 300.0 and weights.kl == 0.0002
        for term in ('even', 'temp', 'warped'):
            assert (getattr(weights, term) > 0) == (term in ABLATION_PRESETS[tag])

    def test_ablation_a_disables_template_terms(self):
        weights = LossWeights.for_ablation('a')
        assert (weights.even, weights.temp, weights.warped) == (0.0, 0.0, 0.0)

    def test_unknown_ablation(self):
        with pytest.raises(ConfigError):
            LossWeights.for_ablation('z')

    def test_total_is_weighted_sum(self):
        parts = LossParts(*(Tensor(np.array(v)) for v in (1.0, 2.0, 3.0, 4.0, 5.0)))
        weights = LossWeights(1.0, 10.0, 100.0, 1000.0, 10000.0)
        breakdown = total_loss(parts, weights)
        assert breakdown.total == pytest.approx(54321.0)
        assert breakdown.is_finite()
        assert breakdown.to_record(iter=0)['iter'] == 0


@pytest.mark.unit
class TestOptimizer:
    """Tests for Adam and the learning-rate schedule."""

    def test_adam_first_step_moves_by_lr(self):
        param = Tensor(np.array([1.0, -1.0]), requires_grad=True)
        param.grad = np.array([0.5, -2.0])
        adam_step({'p': param}, AdamState(lr=0.1))
        np.testing.assert_allclose(param.data, [0.9, -0.9], atol=1e-6)

    def test_adam_skips_frozen_and_gradless(self):
        frozen = Tensor(np.ones(2), requires_grad=False)
        frozen.grad = np.ones(2)
        gradless = Tensor(np.ones(2), requires_grad=True)
        adam_step({'a': frozen, 'b': gradless}, AdamState(lr=0.1))
        np.testing.assert_array_equal(frozen.data, 1.0)
        np.testing.assert_array_equal(gradless.data, 1.0)

    def test_adam_minimizes_quadratic(self):
        x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        state = AdamState(lr=0.1)
        for _ in range(200):
            x.grad = None
            with DiffGraph() as graph:
                loss = (x * x).sum()
            backward(loss, graph)
            adam_step({'x': x}, state)
        assert np.max(np.abs(x.data)) < 0.5

    def test_moments_keyed_by_name(self):
        a = Tensor(np.ones(2), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        a.grad, b.grad = np.ones(2), np.ones(3)
        state = AdamState()
        adam_step({'encoder.w': a, 'decoder.w': b}, state)
        assert state.m['encoder.w'].shape == (2,)
        assert state.m['decoder.w'].shape == (3,)

    def test_cosine_schedule(self):
        cfg = ScheduleConfig(base_lr=1e-3, min_lr=1e-5, period=10)
        assert cosine_lr(0, cfg) == pytest.approx(1e-3)
        assert cosine_lr(5, cfg) == pytest.approx((1e-3 + 1e-5) / 2)
        assert cosine_lr(10, cfg) == pytest.approx(1e-3)
        assert cosine_lr(9, cfg) < cosine_lr(8, cfg)

    def test_schedule_validation(self):
        with pytest.raises(ConfigError):
            ScheduleConfig(base_lr=1e-4, min_lr=1e-3)
        with pytest.raises(ConfigError):
            ScheduleConfig(period=0)
