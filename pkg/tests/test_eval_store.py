import itertools
import math

import numpy as np
import pytest
from scipy import stats

from cftp_rl.chains import DeterministicPolicy, RewardModel, SampleLedger, TabularMDP, induce_chain
from cftp_rl.eval_store import (
    SampleMatrix,
    StoreEnsemble,
    dumps_store,
    estimate_all,
    evaluate_policy,
    load_store,
    loads_store,
    save_store,
)
from cftp_rl.instances import random_mdp
from cftp_rl.sampling import lower_bound_chain
from cftp_rl.solvers import average_reward, mixing_time


def all_policies(mdp):
    return [
        DeterministicPolicy(np.array(actions))
        for actions in itertools.product(range(mdp.n_actions), repeat=mdp.n_states)
    ]


def lazy_mdp(n, eps):
    chain = lower_bound_chain(n, eps, reward_mode="mean")
    return TabularMDP(
        chain.transition[None, :, :], RewardModel(chain.reward.means[:, None], "mean")
    )


class TestSampleMatrix:
    def test_append_cost_is_exactly_states_times_actions(self):
        mdp = random_mdp(3, 2, rng=0)
        store = SampleMatrix(mdp, rng=1)
        store.row_at(4)
        assert len(store) == 4
        assert store.ledger.generative_calls == 4 * 3 * 2

    def test_rows_are_immutable_and_stable(self):
        mdp = random_mdp(3, 2, rng=2)
        store = SampleMatrix(mdp, rng=3)
        row = store.row_at(1)
        with pytest.raises(ValueError):
            row.next_state[0, 0] = 1
        snapshot = row.next_state.copy()
        store.row_at(10)
        assert np.array_equal(store.row_at(1).next_state, snapshot)

    def test_restricted_map_matches_policy_rows(self):
        # Column restriction of many rows reproduces the induced-chain rows.
        mdp = random_mdp(3, 2, rng=4)
        policy = DeterministicPolicy(np.array([1, 0, 1]))
        chain = induce_chain(mdp, policy)
        store = SampleMatrix(mdp, rng=5)
        n_rows = 12_000
        maps = np.array([store.restricted_map(t, policy) for t in range(1, n_rows + 1)])
        for s in range(3):
            counts = np.bincount(maps[:, s], minlength=3)
            _, p_value = stats.chisquare(counts, chain.transition[s] * n_rows)
            assert p_value > 0.001

    def test_row_draws_match_per_action_rows(self):
        mdp = random_mdp(2, 2, rng=6)
        store = SampleMatrix(mdp, rng=7)
        store.row_at(8000)
        draws = np.array([[row.next_state[s, a] for row in store.rows] for s in range(2) for a in range(2)])
        for idx, (s, a) in enumerate((s, a) for s in range(2) for a in range(2)):
            counts = np.bincount(draws[idx], minlength=2)
            _, p_value = stats.chisquare(counts, mdp.transition[a, s] * draws.shape[1])
            assert p_value > 0.001


class TestEvaluatePolicy:
    def test_single_state_mdp(self):
        mdp = TabularMDP(np.ones((1, 1, 1)), RewardModel(np.array([[0.8]]), "mean"))
        store = SampleMatrix(mdp, rng=0)
        record = evaluate_policy(store, DeterministicPolicy(np.array([0])))
        assert record.reward == 0.8
        assert record.rows_consumed == 1 and len(store) == 1

    def test_repeated_evaluation_is_deterministic(self):
        mdp = random_mdp(3, 1, rng=8)
        store = SampleMatrix(mdp, rng=9)
        policy = DeterministicPolicy(np.zeros(3, dtype=int))
        first = evaluate_policy(store, policy)
        rows_after = len(store)
        second = evaluate_policy(store, policy)
        assert first == second
        assert len(store) == rows_after

    def test_row_reuse_across_policies(self):
        mdp = random_mdp(3, 2, rng=10)
        store = SampleMatrix(mdp, rng=11)
        pi = DeterministicPolicy(np.array([0, 0, 0]))
        pi_prime = DeterministicPolicy(np.array([1, 1, 1]))
        evaluate_policy(store, pi)
        evaluate_policy(store, pi_prime)
        grown = len(store)
        third = evaluate_policy(store, pi)
        assert len(store) == grown  # the third call consumed no new rows
        assert third.rows_consumed <= grown

    def test_call_accounting_is_exact(self):
        mdp = random_mdp(4, 3, rng=12)
        ledger = SampleLedger()
        store = SampleMatrix(mdp, rng=13, ledger=ledger)
        for policy in all_policies(mdp)[:5]:
            evaluate_policy(store, policy)
        assert ledger.generative_calls == len(store) * 4 * 3

    def test_unbiased_for_every_policy(self):
        # Bias is measured across fresh matrices; within one matrix the
        # estimates of different policies share rows and are correlated.
        mdp = random_mdp(3, 2, rng=14)
        policies = all_policies(mdp)
        exact = np.array([average_reward(induce_chain(mdp, p)) for p in policies])
        n_stores = 10_000
        sums = np.zeros(len(policies))
        squares = np.zeros(len(policies))
        for i in range(n_stores):
            store = SampleMatrix(mdp, rng=(100_000 + i))
            for j, policy in enumerate(policies):
                r = evaluate_policy(store, policy).reward
                sums[j] += r
                squares[j] += r * r
        means = sums / n_stores
        variances = squares / n_stores - means**2
        ses = np.sqrt(variances / n_stores)
        assert np.all(np.abs(means - exact) <= 3 * np.maximum(ses, 1e-12))

    def test_expected_rows_scale_with_size_times_mixing(self):
        # Mean rows to evaluate grows linearly in n * Tmix; the slope stays
        # within a factor 4 of the two-chain constant 2.
        xs, ys = [], []
        for n, eps, seed in [(4, 0.5, 0), (4, 0.25, 1), (6, 0.5, 2), (6, 0.25, 3)]:
            mdp = lazy_mdp(n, eps)
            t_mix = mixing_time(induce_chain(mdp, DeterministicPolicy(np.zeros(n, dtype=int))))
            rows = []
            for i in range(150):
                store = SampleMatrix(mdp, rng=(seed * 1000 + i))
                rows.append(evaluate_policy(store, DeterministicPolicy(np.zeros(n, dtype=int))).rows_consumed)
            xs.append(n * t_mix)
            ys.append(np.mean(rows))
        slope = float(np.dot(xs, ys) / np.dot(xs, xs))
        assert 2.0 / 4.0 <= slope <= 2.0 * 4.0


class TestStoreEnsemble:
    def test_copy_count_formula(self):
        mdp = random_mdp(3, 2, rng=20)
        ensemble = StoreEnsemble(mdp, epsilon=0.1, delta=0.1, n_policies=8, rng=21)
        assert ensemble.n_copies == math.ceil(math.log(8 / 0.1) / 0.1**2) == 439

    def test_copies_use_disjoint_streams(self):
        mdp = random_mdp(3, 2, rng=22)
        ensemble = StoreEnsemble(mdp, epsilon=0.5, delta=0.5, n_policies=2, rng=23)
        rows = [copy.row_at(1) for copy in ensemble.copies[:2]]
        assert not np.array_equal(rows[0].next_state, rows[1].next_state) or not np.array_equal(
            rows[0].reward, rows[1].reward
        )

    def test_single_policy_constant_reward_is_exact(self):
        transition = np.ones((1, 2, 2)) * 0.5
        mdp = TabularMDP(transition, RewardModel(np.full((2, 1), 0.7), "mean"))
        ensemble = StoreEnsemble(mdp, epsilon=0.3, delta=0.3, n_policies=1, rng=24)
        estimates = estimate_all(ensemble, [DeterministicPolicy(np.zeros(2, dtype=int))])
        assert estimates[0] == 0.7

    def test_simultaneous_accuracy(self):
        mdp = random_mdp(3, 2, rng=25)
        policies = all_policies(mdp)
        exact = np.array([average_reward(induce_chain(mdp, p)) for p in policies])
        ensemble = StoreEnsemble(mdp, epsilon=0.15, delta=0.1, n_policies=8, rng=26)
        estimates = estimate_all(ensemble, policies)
        assert np.max(np.abs(estimates - exact)) <= 0.15


class TestPersistence:
    def test_round_trip_is_exact(self, tmp_path):
        mdp = random_mdp(3, 2, rng=30)
        store = SampleMatrix(mdp, rng=31)
        store.row_at(7)
        path = tmp_path / "store.txt"
        save_store(store, path)
        loaded = load_store(path, mdp, rng=31)
        assert len(loaded) == 7
        for a, b in zip(store.rows, loaded.rows):
            assert np.array_equal(a.next_state, b.next_state)
            assert np.array_equal(a.reward, b.reward)

    def test_resume_reproduces_the_uninterrupted_run(self, tmp_path):
        mdp = random_mdp(3, 2, rng=32)
        full = SampleMatrix(mdp, rng=33)
        full.row_at(12)
        partial = SampleMatrix(mdp, rng=33)
        partial.row_at(5)
        path = tmp_path / "checkpoint.txt"
        save_store(partial, path)
        resumed = load_store(path, mdp, rng=33)
        resumed.row_at(12)
        for a, b in zip(full.rows, resumed.rows):
            assert np.array_equal(a.next_state, b.next_state)
            assert np.array_equal(a.reward, b.reward)

    def test_shape_validation(self):
        mdp = random_mdp(3, 2, rng=34)
        other = random_mdp(4, 2, rng=35)
        store = SampleMatrix(mdp, rng=36)
        store.row_at(2)
        with pytest.raises(ValueError, match="shape"):
            loads_store(dumps_store(store), other, rng=36)
