import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import small_mdps
from bilinvfa.benchmarks import random_mdp
from bilinvfa.mdp import (
    InvalidMdpError,
    Policy,
    TabularMdp,
    bellman_backup,
    bellman_backup_policy,
    bellman_residual,
    constraint_matrix,
    constraint_matrix_B,
    evaluate_policy,
    expected_policy_loss,
    greedy_policy,
    is_transitive_feasible,
    load_mdp,
    mdp_from_dict,
    mdp_to_dict,
    optimal_value,
    robust_policy_loss,
    save_mdp,
    visitation_frequencies,
)


def one_state(r=1.0, gamma=0.9):
    return TabularMdp.from_arrays([[[1.0]]], [[r]], gamma)


def random_policy(mdp, rng, deterministic=False):
    if deterministic:
        return Policy.from_actions(rng.integers(0, mdp.n_actions, mdp.n_states), mdp.n_actions)
    p = rng.random((mdp.n_states, mdp.n_actions))
    return Policy(p / p.sum(axis=1, keepdims=True))


class TestValidation:
    def test_rejects_non_stochastic_rows(self):
        with pytest.raises(InvalidMdpError, match="sums to"):
            TabularMdp.from_arrays([[[0.5, 0.4], [0.0, 1.0]]], [[0.0], [0.0]], 0.9)

    def test_rejects_negative_probabilities(self):
        with pytest.raises(InvalidMdpError, match="negative"):
            TabularMdp.from_arrays([[[1.5, -0.5], [0.0, 1.0]]], [[0.0], [0.0]], 0.9)

    def test_rejects_bad_discount_and_alpha(self):
        with pytest.raises(InvalidMdpError) as err:
            TabularMdp.from_arrays([[[1.0]]], [[0.0]], 1.0, [0.5])
        msg = str(err.value)
        assert "discount" in msg and "initial_dist sums" in msg

    def test_policy_rows_must_sum_to_one(self):
        with pytest.raises(ValueError):
            Policy(np.array([[0.5, 0.4]]))

    def test_dimension_mismatch(self, mdp_m2):
        with pytest.raises(ValueError):
            bellman_backup(mdp_m2, np.zeros(3))
        with pytest.raises(ValueError):
            bellman_backup_policy(mdp_m2, Policy.uniform(3, 2), np.zeros(2))

    def test_arrays_are_read_only(self, mdp_m2):
        with pytest.raises(ValueError):
            mdp_m2.reward[0, 0] = 5.0


class TestBellmanOperators:
    def test_zero_discount_is_max_reward(self):
        mdp = random_mdp(4, 3, seed=1, gamma=0.0)
        v = np.random.default_rng(42).normal(size=4)
        np.testing.assert_allclose(bellman_backup(mdp, v), mdp.reward.max(axis=1))

    def test_optimal_value_is_fixed_point(self, mdp_m2, frozen):
        v_star = np.array(frozen["m2"]["v_star"])
        np.testing.assert_allclose(bellman_backup(mdp_m2, v_star), v_star, atol=1e-10)
        np.testing.assert_allclose(optimal_value(mdp_m2), v_star, atol=1e-10)

    def test_backup_matches_loop_oracle(self, mdp_r4):
        v = np.random.default_rng(42).normal(size=4)
        P, R, g = oracles.tensors(mdp_r4)
        np.testing.assert_allclose(bellman_backup(mdp_r4, v), oracles.backup(P, R, g, v), atol=1e-12)

    def test_uniform_policy_hand_expansion(self, mdp_m2):
        v = np.array([1.0, -2.0])
        P, R, g = oracles.tensors(mdp_m2)
        expected = [sum(0.5 * (R[s, a] + g * P[a, s] @ v) for a in range(2)) for s in range(2)]
        got = bellman_backup_policy(mdp_m2, Policy.uniform(2, 2), v)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_deterministic_policy_zero_discount(self):
        mdp = random_mdp(3, 2, seed=4, gamma=0.0)
        pol = Policy.from_actions([1, 0, 1], 2)
        got = bellman_backup_policy(mdp, pol, np.ones(3))
        np.testing.assert_allclose(got, mdp.reward[np.arange(3), [1, 0, 1]])

    @given(small_mdps(), st.integers(0, 2**31 - 1), st.floats(-50, 50))
    def test_shift_law(self, mdp, seed, c):
        v = np.random.default_rng(seed).normal(size=mdp.n_states) * 10
        lhs = bellman_backup(mdp, v + c)
        rhs = bellman_backup(mdp, v) + mdp.discount * c
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(c) + np.abs(v).max()) * 10)

    @given(small_mdps(), st.integers(0, 2**31 - 1))
    def test_monotone(self, mdp, seed):
        rng = np.random.default_rng(seed)
        y = rng.normal(size=mdp.n_states)
        x = y + rng.random(mdp.n_states)
        assert np.all(bellman_backup(mdp, x) >= bellman_backup(mdp, y) - 1e-12)

    @given(small_mdps(), st.integers(0, 2**31 - 1))
    def test_greedy_policy_attains_backup(self, mdp, seed):
        v = np.random.default_rng(seed).normal(size=mdp.n_states)
        pol = greedy_policy(mdp, v)
        assert pol.deterministic
        np.testing.assert_allclose(bellman_backup_policy(mdp, pol, v), bellman_backup(mdp, v), atol=1e-12)


class TestGreedy:
    def test_zero_discount_argmax_reward(self):
        mdp = random_mdp(5, 3, seed=2, gamma=0.0)
        np.testing.assert_array_equal(greedy_policy(mdp, np.zeros(5)).actions, mdp.reward.argmax(axis=1))

    def test_optimal_policy_matches_enumeration(self, mdp_m2, frozen):
        pol = greedy_policy(mdp_m2, np.array(frozen["m2"]["v_star"]))
        np.testing.assert_array_equal(pol.actions, frozen["m2"]["optimal_actions"])

    def test_ties_choose_action_zero(self):
        P = np.stack([np.eye(2), np.eye(2)])
        mdp = TabularMdp.from_arrays(P, [[1.0, 1.0], [0.0, 0.0]], 0.5)
        np.testing.assert_array_equal(greedy_policy(mdp, np.array([3.0, 1.0])).actions, [0, 0])


class TestPolicyEvaluation:
    def test_geometric_series(self):
        np.testing.assert_allclose(evaluate_policy(one_state(), Policy.uniform(1, 1)), [10.0])

    def test_matches_frozen_value(self, mdp_m2, frozen):
        v = evaluate_policy(mdp_m2, Policy.from_actions([0, 0], 2))
        np.testing.assert_allclose(v, frozen["m2"]["value_all_zero_policy"], atol=1e-9)

    @given(small_mdps(max_states=4), st.integers(0, 2**31 - 1))
    def test_fixed_point_and_dominated(self, mdp, seed):
        rng = np.random.default_rng(seed)
        pol = random_policy(mdp, rng)
        v = evaluate_policy(mdp, pol)
        assert np.max(np.abs(v - bellman_backup_policy(mdp, pol, v))) <= 1e-9
        assert np.all(v <= optimal_value(mdp) + 1e-9)

    def test_optimal_value_matches_value_iteration(self, mdp_r4, frozen):
        np.testing.assert_allclose(optimal_value(mdp_r4), frozen["r4"]["v_star"], atol=1e-9)

    def test_every_policy_below_optimal(self, mdp_r4):
        P, R, g = oracles.tensors(mdp_r4)
        v_star = optimal_value(mdp_r4)
        for bits in range(16):
            actions = [(bits >> i) & 1 for i in range(4)]
            v = evaluate_policy(mdp_r4, Policy.from_actions(actions, 2))
            np.testing.assert_allclose(v, oracles.policy_value(P, R, g, actions), atol=1e-10)
            assert np.all(v <= v_star + 1e-9)


class TestVisitation:
    def test_single_state(self):
        u = visitation_frequencies(one_state(gamma=0.8), Policy.uniform(1, 1))
        np.testing.assert_allclose(u.per_state, [5.0])

    @given(small_mdps(), st.integers(0, 2**31 - 1))
    def test_total_mass(self, mdp, seed):
        pol = random_policy(mdp, np.random.default_rng(seed))
        u = visitation_frequencies(mdp, pol)
        np.testing.assert_allclose(u.per_state.sum(), 1 / (1 - mdp.discount), rtol=1e-8)
        np.testing.assert_allclose(u.per_state_action.sum(axis=1), u.per_state, atol=1e-12)
        assert np.all(u.per_state >= -1e-12)

    def test_return_identity(self, mdp_m2):
        pol = Policy(np.array([[0.3, 0.7], [0.9, 0.1]]))
        u = visitation_frequencies(mdp_m2, pol)
        P, R, g = oracles.tensors(mdp_m2)
        lhs = mdp_m2.initial_dist @ evaluate_policy(mdp_m2, pol)
        np.testing.assert_allclose(lhs, np.sum(u.per_state_action * R), atol=1e-8)

    def test_matches_oracle(self, mdp_r4):
        P, _, g = oracles.tensors(mdp_r4)
        actions = [1, 0, 0, 1]
        u = visitation_frequencies(mdp_r4, Policy.from_actions(actions, 2))
        np.testing.assert_allclose(u.per_state, oracles.occupancy(P, g, np.asarray(mdp_r4.initial_dist), actions))


class TestPolicyLoss:
    def test_optimal_policy_has_zero_loss(self, mdp_r4, frozen):
        pol = Policy.from_actions(frozen["r4"]["optimal_actions"], 2)
        assert abs(expected_policy_loss(mdp_r4, pol)) <= 1e-9
        assert abs(robust_policy_loss(mdp_r4, pol)) <= 1e-9

    def test_suboptimal_loss_matches_oracle(self, mdp_m2, frozen):
        pol = Policy.from_actions([0, 0], 2)
        gap = np.array(frozen["m2"]["v_star"]) - np.array(frozen["m2"]["value_all_zero_policy"])
        np.testing.assert_allclose(expected_policy_loss(mdp_m2, pol), mdp_m2.initial_dist @ gap, atol=1e-9)
        np.testing.assert_allclose(robust_policy_loss(mdp_m2, pol), np.max(np.abs(gap)), atol=1e-9)
        np.testing.assert_allclose(expected_policy_loss(mdp_m2, pol), mdp_m2.initial_dist @ np.abs(gap), atol=1e-9)

    @given(small_mdps(), st.integers(0, 2**31 - 1))
    def test_robust_dominates_point_mass_expected(self, mdp, seed):
        rng = np.random.default_rng(seed)
        mdp = mdp.with_initial(np.eye(mdp.n_states)[rng.integers(mdp.n_states)])
        pol = random_policy(mdp, rng)
        exp_loss = expected_policy_loss(mdp, pol)
        assert exp_loss >= -1e-9
        assert robust_policy_loss(mdp, pol) >= exp_loss - 1e-12


class TestResidualAndConstraints:
    def test_optimal_value_min_residual_zero(self, mdp_r4):
        res = bellman_residual(mdp_r4, optimal_value(mdp_r4)).reshape(4, 2)
        np.testing.assert_allclose(res.min(axis=1), 0.0, atol=1e-9)

    @given(small_mdps(), st.integers(0, 2**31 - 1))
    def test_residual_consistent_with_backup(self, mdp, seed):
        v = np.random.default_rng(seed).normal(size=mdp.n_states)
        res = bellman_residual(mdp, v).reshape(mdp.n_states, mdp.n_actions)
        np.testing.assert_allclose(np.abs(res.min(axis=1)), np.abs(v - bellman_backup(mdp, v)), atol=1e-12)
        A, b = constraint_matrix(mdp)
        np.testing.assert_allclose(A @ v - b, res.ravel(), atol=1e-12)

    def test_residual_matches_loop_oracle(self, mdp_r4):
        v = np.arange(4.0)
        P, R, g = oracles.tensors(mdp_r4)
        np.testing.assert_allclose(bellman_residual(mdp_r4, v), oracles.residual_pairs(P, R, g, v), atol=1e-12)

    def test_shift_moves_residuals(self, mdp_r4):
        v = optimal_value(mdp_r4)
        shift = bellman_residual(mdp_r4, v + 2.0) - bellman_residual(mdp_r4, v)
        np.testing.assert_allclose(shift, (1 - mdp_r4.discount) * 2.0, atol=1e-12)

    def test_zero_discount_rows_are_one_hot(self):
        A, _ = constraint_matrix(random_mdp(3, 2, seed=0, gamma=0.0))
        np.testing.assert_array_equal(A, np.repeat(np.eye(3), 2, axis=0))

    def test_single_state(self):
        A, b = constraint_matrix(one_state(r=2.5))
        np.testing.assert_allclose(A, [[0.1]])
        np.testing.assert_allclose(b, [2.5])

    def test_row_ordering_is_state_major(self, mdp_r4):
        A, b = constraint_matrix(mdp_r4)
        P, R, g = oracles.tensors(mdp_r4)
        np.testing.assert_allclose(A, np.eye(4)[[0, 0, 1, 1, 2, 2, 3, 3]] - g * P.transpose(1, 0, 2).reshape(8, 4))
        np.testing.assert_allclose(b, R.ravel())

    def test_B_matrix(self):
        mdp = TabularMdp.from_arrays([[[1.0]], [[1.0]]], [[0.0, 1.0]], 0.5)
        np.testing.assert_array_equal(constraint_matrix_B(mdp), [[1.0, 1.0]])
        B = constraint_matrix_B(random_mdp(3, 2))
        np.testing.assert_array_equal(B.sum(axis=0), np.ones(6))
        pol = Policy(np.array([[0.2, 0.8], [1.0, 0.0], [0.5, 0.5]]))
        np.testing.assert_allclose(B @ pol.flat(), np.ones(3))


class TestTransitiveFeasibility:
    def test_optimal_value_feasible(self, mdp_r4):
        assert is_transitive_feasible(mdp_r4, optimal_value(mdp_r4))

    def test_shift_down(self, mdp_r4):
        v = optimal_value(mdp_r4) - 0.5
        assert not is_transitive_feasible(mdp_r4, v)
        assert is_transitive_feasible(mdp_r4, v, eps=(1 - mdp_r4.discount) * 0.5)

    def test_negative_eps_rejected(self, mdp_m2):
        with pytest.raises(ValueError):
            is_transitive_feasible(mdp_m2, np.zeros(2), eps=-1.0)

    @given(small_mdps(), st.integers(0, 2**31 - 1))
    def test_feasibility_equivalence(self, mdp, seed):
        rng = np.random.default_rng(seed)
        v = optimal_value(mdp) + rng.normal(size=mdp.n_states) * 0.3 + rng.choice([0.0, 0.5])
        A, b = constraint_matrix(mdp)
        # compare away from the tolerance boundary
        margin = np.min(A @ v - b)
        if abs(margin) > 1e-7:
            assert (margin >= -1e-9) == is_transitive_feasible(mdp, v)

    @given(small_mdps(), st.integers(0, 2**31 - 1), st.floats(0, 2))
    def test_upper_bound_law(self, mdp, seed, eps):
        rng = np.random.default_rng(seed)
        v_star = optimal_value(mdp)
        v = v_star + rng.normal(size=mdp.n_states)
        v = v + max(0.0, np.max(bellman_backup(mdp, v) - v - eps)) / (1 - mdp.discount) + 1e-9
        if is_transitive_feasible(mdp, v, eps):
            assert np.all(v >= v_star - eps / (1 - mdp.discount) - 1e-8)
        if is_transitive_feasible(mdp, v, 0.0):
            assert np.all(v >= v_star - 1e-8)


class TestPolicyLossBounds:
    @given(small_mdps(max_states=4), st.integers(0, 2**31 - 1))
    def test_residual_bound_on_greedy_loss(self, mdp, seed):
        v = optimal_value(mdp) + np.random.default_rng(seed).normal(size=mdp.n_states)
        pol = greedy_policy(mdp, v)
        res = np.max(np.abs(v - bellman_backup(mdp, v)))
        loss = robust_policy_loss(mdp, pol)
        assert loss <= 2 / (1 - mdp.discount) * res + 1e-8
        if is_transitive_feasible(mdp, v):
            assert loss <= res / (1 - mdp.discount) + 1e-8

    @given(small_mdps(), st.integers(0, 2**31 - 1))
    def test_loss_identity_for_greedy_policy(self, mdp, seed):
        v = np.random.default_rng(seed).normal(size=mdp.n_states) * 3
        pol = greedy_policy(mdp, v)
        u = visitation_frequencies(mdp, pol).per_state
        res = bellman_residual(mdp, v).reshape(mdp.n_states, mdp.n_actions)
        restricted = np.sum(pol.probs * res, axis=1)
        alpha, v_star = mdp.initial_dist, optimal_value(mdp)
        lhs = alpha @ v_star - alpha @ evaluate_policy(mdp, pol)
        rhs = alpha @ v_star - alpha @ v + u @ restricted
        np.testing.assert_allclose(lhs, rhs, atol=1e-8 * (1 + abs(lhs)))


class TestSerialization:
    def test_dense_round_trip(self, tmp_path, mdp_r4):
        save_mdp(mdp_r4, tmp_path / "m.json")
        back = load_mdp(tmp_path / "m.json")
        np.testing.assert_array_equal(back.transition, mdp_r4.transition)
        np.testing.assert_array_equal(back.reward, mdp_r4.reward)
        assert back.discount == mdp_r4.discount
        data = json.loads((tmp_path / "m.json").read_text())
        assert np.shape(data["transition"]) == (2, 4, 4)

    def test_sparse_round_trip(self, mdp_r4):
        sparse = TabularMdp(sp.csr_array(np.asarray(mdp_r4.transition)), mdp_r4.reward,
                            mdp_r4.discount, mdp_r4.initial_dist)
        data = json.loads(json.dumps(mdp_to_dict(sparse)))
        assert "transition_sparse" in data and "transition" not in data
        back = mdp_from_dict(data)
        assert back.is_sparse
        np.testing.assert_array_equal(back.transition.toarray(), np.asarray(mdp_r4.transition))

    def test_loader_itemizes_problems(self):
        data = {"n_states": 2, "n_actions": 1, "gamma": 0.9, "alpha": [0.5, 0.5],
                "reward": [[0.0], [0.0]], "transition": [[[0.5, 0.4], [0.2, 0.2]]]}
        with pytest.raises(InvalidMdpError) as err:
            mdp_from_dict(data)
        assert str(err.value).count("\n  - ") == 2

    def test_missing_fields(self):
        with pytest.raises(InvalidMdpError, match="missing field 'gamma'"):
            mdp_from_dict({"n_states": 1, "n_actions": 1, "alpha": [1], "reward": [[0]], "transition": [[[1]]]})
        with pytest.raises(InvalidMdpError, match="exactly one"):
            mdp_from_dict({"n_states": 1, "n_actions": 1, "gamma": 0.5, "alpha": [1], "reward": [[0]]})
