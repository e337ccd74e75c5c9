import math

import numpy as np
import pytest

from cftp_rl.hedge import HedgeState, clamp_mask, hedge_regret, hedge_step, rescale_loss


def adversarial_worst_coordinate(k, n_rounds, rng):
    """Loss sequence that always charges the currently heaviest coordinate."""
    state = HedgeState.create(k, n_rounds)
    losses = np.zeros((n_rounds, k))
    for t in range(n_rounds):
        loss = np.zeros(k)
        loss[int(np.argmax(state.weights))] = 1.0
        losses[t] = loss
        state = hedge_step(state, loss)
    return losses


class TestHedgeStep:
    def test_zero_loss_keeps_weights(self):
        state = HedgeState.create(3, 10)
        after = hedge_step(state, np.zeros(3))
        assert np.allclose(after.weights, state.weights, atol=1e-15)
        assert after.t == 1

    def test_two_coordinate_formula(self):
        # Direct formula: with beta = 1 and loss (1, 0) from uniform weights,
        # w = (e^-1 / (1 + e^-1), 1 / (1 + e^-1)).
        state = HedgeState(log_weights=np.zeros(2), beta=1.0)
        after = hedge_step(state, np.array([1.0, 0.0]))
        expected = np.array([math.exp(-1.0), 1.0]) / (1.0 + math.exp(-1.0))
        assert np.allclose(after.weights, expected, atol=1e-12)
        assert abs(after.weights[0] - 0.2689) < 1e-4

    def test_identical_losses_keep_weights(self):
        state = HedgeState.create(4, 100)
        after = hedge_step(state, np.full(4, 0.7))
        assert np.allclose(after.weights, state.weights, atol=1e-15)

    def test_out_of_range_loss_is_a_hard_error(self):
        state = HedgeState.create(2, 10)
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            hedge_step(state, np.array([1.2, 0.0]))
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            hedge_step(state, np.array([-0.1, 0.0]))

    def test_learning_rate_formula(self):
        state = HedgeState.create(16, 400)
        assert abs(state.beta - math.sqrt(math.log(16) / 400)) < 1e-15

    def test_single_coordinate_is_degenerate(self):
        state = HedgeState.create(1, 100)
        assert state.beta == 0.0
        after = hedge_step(state, np.array([1.0]))
        assert after.weights[0] == 1.0

    def test_log_domain_survives_long_horizons(self):
        state = HedgeState.create(2, 100_000)
        for _ in range(5000):
            state = hedge_step(state, np.array([1.0, 0.0]))
        assert np.isfinite(state.weights).all()
        assert abs(state.weights.sum() - 1.0) < 1e-12


class TestRescaleLoss:
    def test_zero_maps_to_half(self):
        assert np.allclose(rescale_loss(np.zeros(3), 2.0), 0.5)

    def test_endpoints(self):
        assert np.allclose(rescale_loss(np.array([-2.0, 2.0]), 2.0), [0.0, 1.0])

    def test_midpoint_formula(self):
        assert np.allclose(rescale_loss(np.array([1.0]), 2.0), [0.75])

    def test_clamping_and_mask(self):
        g = np.array([-3.0, 0.0, 5.0])
        out = rescale_loss(g, 2.0)
        assert np.allclose(out, [0.0, 0.5, 1.0])
        assert np.array_equal(clamp_mask(g, 2.0), [True, False, True])

    def test_bound_must_be_positive(self):
        with pytest.raises(ValueError):
            rescale_loss(np.zeros(2), 0.0)


class TestRegretBound:
    @pytest.mark.parametrize("k", [2, 4, 16])
    @pytest.mark.parametrize("n_rounds", [100, 2000])
    def test_random_sequences(self, k, n_rounds):
        rng = np.random.default_rng(k * 1000 + n_rounds)
        losses = rng.random((n_rounds, k))
        assert hedge_regret(losses) <= 2.0 * math.sqrt(n_rounds * math.log(k))

    @pytest.mark.parametrize("k", [2, 8, 16])
    def test_adversarial_worst_coordinate(self, k):
        n_rounds = 3000
        losses = adversarial_worst_coordinate(k, n_rounds, None)
        assert hedge_regret(losses) <= 2.0 * math.sqrt(n_rounds * math.log(k))

    def test_alternating_sequences(self):
        n_rounds, k = 10_000, 2
        losses = np.zeros((n_rounds, k))
        losses[0::2, 0] = 1.0
        losses[1::2, 1] = 1.0
        assert hedge_regret(losses) <= 2.0 * math.sqrt(n_rounds * math.log(k))

    def test_rescaled_regret_bound(self):
        rng = np.random.default_rng(5)
        n_rounds, k, bound = 5000, 4, 3.0
        gains = rng.uniform(-bound, bound, size=(n_rounds, k))
        state = HedgeState.create(k, n_rounds)
        incurred = 0.0
        for g in gains:
            incurred += float(state.weights @ g)
            state = hedge_step(state, rescale_loss(g, bound))
        regret = (incurred - gains.sum(axis=0).min()) / n_rounds
        assert regret <= 4.0 * bound * math.sqrt(math.log(k) / n_rounds)

    def test_scale_shift_coherence(self):
        # Running Hedge on rescaled losses relates unrescaled and rescaled
        # regret by exactly the factor 2B.
        rng = np.random.default_rng(8)
        n_rounds, k, bound = 1000, 3, 2.5
        gains = rng.uniform(-bound, bound, size=(n_rounds, k))
        state = HedgeState.create(k, n_rounds)
        incurred_raw = 0.0
        incurred_rescaled = 0.0
        rescaled_sum = np.zeros(k)
        for g in gains:
            tilde = rescale_loss(g, bound)
            incurred_raw += float(state.weights @ g)
            incurred_rescaled += float(state.weights @ tilde)
            rescaled_sum += tilde
            state = hedge_step(state, tilde)
        regret_raw = incurred_raw - gains.sum(axis=0).min()
        regret_rescaled = incurred_rescaled - rescaled_sum.min()
        assert abs(regret_raw - 2.0 * bound * regret_rescaled) < 1e-9
