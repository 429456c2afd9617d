import numpy as np
import pytest
from scipy import stats

from wheelquad.energy import (SELECTION_PERIOD, TemperatureSchedule,
                              anneal_temperature, gait_probabilities,
                              instantaneous_power, make_predictor,
                              predict_power, predictor_loss_and_grads,
                              select_gait, update_predictor)
from wheelquad.nets import Adam, FeedForwardNet

from oracles import selection_probabilities


class TestInstantaneousPower:
    def test_hand_computed(self):
        tau = np.array([2.0, -3.0, 0.0, 1.0])
        qd = np.array([-1.0, 2.0, 5.0, 0.5])
        assert abs(instantaneous_power(tau, qd) - (2 + 6 + 0 + 0.5)) <= 1e-12

    def test_nonnegative_batch(self):
        rng = np.random.default_rng(3)
        p = instantaneous_power(rng.normal(size=(32, 16)),
                                rng.normal(size=(32, 16)))
        assert p.shape == (32,)
        assert np.all(p >= 0.0)


class TestSelectionDistribution:
    def test_frozen_probabilities(self):
        probs = gait_probabilities([10.0, 20.0, 30.0], 10.0)
        want = [0.6652409558, 0.2447284711, 0.0900305732]
        assert np.allclose(probs, want, atol=1e-9)

    def test_matches_oracle_random(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p = rng.uniform(0.0, 50.0, size=3)
            tau = rng.uniform(0.1, 20.0)
            assert np.allclose(gait_probabilities(p, tau),
                               selection_probabilities(p, tau), atol=1e-12)

    def test_shift_invariance(self):
        p = np.array([10.0, 20.0, 30.0])
        a = gait_probabilities(p, 10.0)
        b = gait_probabilities(p + 1234.5, 10.0)
        assert np.allclose(a, b, atol=1e-12)

    def test_sums_to_one_batch(self):
        rng = np.random.default_rng(11)
        probs = gait_probabilities(rng.uniform(0, 100, size=(40, 3)), 2.0)
        assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-12)

    def test_lower_power_never_less_likely(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            p = rng.uniform(0, 30, size=3)
            probs = gait_probabilities(p, 1.5)
            order = np.argsort(p)
            assert probs[order[0]] >= probs[order[1]] >= probs[order[2]]

    def test_temperature_must_be_positive(self):
        with pytest.raises(ValueError):
            gait_probabilities([1.0, 2.0, 3.0], 0.0)

    def test_empirical_uniform_chi_square(self):
        rng = np.random.default_rng(17)
        picks = select_gait(np.tile([5.0, 5.0, 5.0], (100_000, 1)), 1.0, rng)
        counts = np.bincount(picks, minlength=3)
        _, pvalue = stats.chisquare(counts)
        assert pvalue > 0.01

    def test_empirical_matches_frozen(self):
        rng = np.random.default_rng(19)
        picks = select_gait(np.tile([10.0, 20.0, 30.0], (100_000, 1)),
                            10.0, rng)
        freq = np.bincount(picks, minlength=3) / picks.size
        want = np.array([0.6652409558, 0.2447284711, 0.0900305732])
        assert np.abs(freq - want).max() <= 0.01

    def test_cold_limit_is_argmin(self):
        rng = np.random.default_rng(23)
        picks = select_gait(np.tile([30.0, 12.0, 22.0], (20_000, 1)),
                            1e-3, rng)
        assert np.mean(picks == 1) >= 0.999

    def test_scalar_input_returns_int(self):
        pick = select_gait([1.0, 2.0, 3.0], 0.5, np.random.default_rng(0))
        assert isinstance(pick, int)

    def test_selection_period_constant(self):
        assert SELECTION_PERIOD == 50


class TestTemperatureSchedule:
    def test_endpoints_and_midpoint(self):
        sched = TemperatureSchedule(tau_start=8.0, tau_end=0.5,
                                    total_epochs=100)
        assert abs(sched.temperature(0) - 8.0) <= 1e-12
        assert abs(sched.temperature(100) - 0.5) <= 1e-12
        # geometric interpolation: the midpoint is the geometric mean
        assert abs(sched.temperature(50) - 2.0) <= 1e-12

    def test_monotone_decreasing(self):
        sched = TemperatureSchedule(tau_start=8.0, tau_end=0.5,
                                    total_epochs=300)
        temps = [anneal_temperature(sched, e) for e in range(301)]
        assert all(a >= b for a, b in zip(temps, temps[1:]))

    def test_clamped_past_end(self):
        sched = TemperatureSchedule(total_epochs=10)
        assert sched.temperature(99) == sched.temperature(10)

    def test_validation(self):
        with pytest.raises(ValueError):
            TemperatureSchedule(tau_start=0.0)
        with pytest.raises(ValueError):
            TemperatureSchedule(total_epochs=0)


class TestPredictorTraining:
    def test_masked_loss_linear_net_by_hand(self):
        # identity-free single-layer net lets us verify the masked MSE and
        # its gradient against pencil-and-paper values
        net = FeedForwardNet([2, 3], rng=np.random.default_rng(0))
        net.weights[0][...] = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        net.biases[0][...] = 0.0
        obs = np.array([[2.0, 3.0], [1.0, -1.0]])
        gait_ids = np.array([0, 2])
        targets = np.array([1.0, 1.0])
        # predictions: row0 head0 = 2, row1 head2 = 0; errors 1 and -1
        loss, grads = predictor_loss_and_grads(net, obs, gait_ids, targets)
        assert abs(loss - 1.0) <= 1e-12
        gw = grads[0]
        # head 0 gets d(e0^2)/dw = 2*e0*obs0 / 2, head 2 gets 2*e1*obs1 / 2
        assert np.allclose(gw[0], [2.0, 3.0])
        assert np.allclose(gw[1], [0.0, 0.0])
        assert np.allclose(gw[2], [-1.0, 1.0])

    def test_only_executed_head_updated(self):
        rng = np.random.default_rng(29)
        net = make_predictor(obs_dim=6, rng=rng)
        obs = rng.normal(size=(16, 6))
        gait_ids = np.zeros(16, dtype=int)
        targets = rng.uniform(0, 5, size=16)
        _, grads = predictor_loss_and_grads(net, obs, gait_ids, targets)
        # final-layer rows for heads 1 and 2 receive no error signal
        gw_last, gb_last = grads[-2], grads[-1]
        assert np.all(gw_last[1] == 0.0) and np.all(gw_last[2] == 0.0)
        assert gb_last[1] == 0.0 and gb_last[2] == 0.0
        assert np.any(gw_last[0] != 0.0)

    def test_nonfinite_targets_rejected(self):
        net = make_predictor(obs_dim=4, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            predictor_loss_and_grads(net, np.zeros((2, 4)), [0, 1],
                                     [1.0, np.nan])

    def test_batch_size_mismatch_rejected(self):
        net = make_predictor(obs_dim=4, rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            predictor_loss_and_grads(net, np.zeros((2, 4)), [0], [1.0, 2.0])

    def test_training_reduces_loss(self):
        rng = np.random.default_rng(31)
        net = make_predictor(obs_dim=5, hidden=(32, 32), rng=rng)
        opt = Adam(net.parameters(), lr=1e-3)
        obs = rng.normal(size=(256, 5))
        gait_ids = rng.integers(0, 3, size=256)
        # target depends on both the observation and the executed gait
        targets = 5.0 + 2.0 * obs[:, 0] + 3.0 * gait_ids
        first = update_predictor(net, opt, obs, gait_ids, targets)
        for _ in range(400):
            last = update_predictor(net, opt, obs, gait_ids, targets)
        assert last < 0.1 * first

    def test_predict_power_shape(self):
        net = make_predictor(obs_dim=7, rng=np.random.default_rng(0))
        out = predict_power(net, np.zeros((9, 7)))
        assert out.shape == (9, 3)
