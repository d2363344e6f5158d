import unittest

import numpy as np

from sfmpy.mdp_core import TabularMDP, make_random_mdp, make_chain_mdp, make_gridworld_mdp, oracle_sf, oracle_occupancy, \
    oracle_q_values, oracle_state_occupancy, value_iteration, random_policy_table, uniform_policy_table, \
    state_action_transition_matrix, state_transition_matrix


def _truncated_sf_series(mdp, policy, n_terms):
    P_pi = state_action_transition_matrix(mdp, policy)
    term = np.repeat(mdp.Phi, mdp.n_actions, axis=0)
    total = np.zeros_like(term)
    for _ in range(n_terms):
        total += term
        term = mdp.gamma * P_pi @ term
    return total


class OracleSfTests(unittest.TestCase):

    def test_zero_discount(self):
        mdp = make_random_mdp(4, 3, 2, 0.0, np.random.default_rng(0))
        psi = oracle_sf(mdp, random_policy_table(mdp, np.random.default_rng(1)))
        np.testing.assert_allclose(psi, np.repeat(mdp.Phi, 3, axis=0), atol=1e-15)

    def test_self_loop(self):
        mdp = TabularMDP(P=np.ones((1, 2, 1)), P0=np.ones(1), gamma=0.9, Phi=np.ones((1, 1)))
        psi = oracle_sf(mdp, np.array([[0.3, 0.7]]))
        np.testing.assert_allclose(psi, [[10.0], [10.0]], atol=1e-12)

    def test_truncated_series(self):
        rng = np.random.default_rng(3)
        mdp = make_random_mdp(5, 3, 4, 0.95, rng)
        policy = random_policy_table(mdp, rng)
        psi = oracle_sf(mdp, policy)
        np.testing.assert_allclose(psi, _truncated_sf_series(mdp, policy, 10 ** 4), atol=1e-6)

    def test_bellman_residual(self):
        rng = np.random.default_rng(4)
        mdp = make_random_mdp(6, 2, 3, 0.99, rng)
        policy = random_policy_table(mdp, rng)
        psi = oracle_sf(mdp, policy)
        P_pi = state_action_transition_matrix(mdp, policy)
        residual = np.max(np.abs(np.repeat(mdp.Phi, 2, axis=0) + mdp.gamma * P_pi @ psi - psi))
        self.assertLess(residual, 1e-10)

    def test_q_factorisation(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            mdp = make_random_mdp(int(rng.integers(1, 9)), int(rng.integers(1, 5)), 3, float(rng.uniform(0.5, 0.99)), rng)
            policy = random_policy_table(mdp, rng)
            w_r = rng.normal(size=3)
            q = oracle_q_values(mdp, policy, mdp.Phi @ w_r)
            np.testing.assert_allclose(q, oracle_sf(mdp, policy) @ w_r, atol=1e-9)


class OccupancyTests(unittest.TestCase):

    def test_single_state(self):
        mdp = TabularMDP(P=np.ones((1, 3, 1)), P0=np.ones(1), gamma=0.7, Phi=np.ones((1, 1)))
        policy = np.array([[0.2, 0.3, 0.5]])
        np.testing.assert_allclose(oracle_occupancy(mdp, policy), [0.2, 0.3, 0.5], atol=1e-12)

    def test_tiny_discount(self):
        rng = np.random.default_rng(6)
        mdp = make_random_mdp(5, 2, 1, 1e-12, rng)
        policy = random_policy_table(mdp, rng)
        np.testing.assert_allclose(oracle_occupancy(mdp, policy), (mdp.P0[:, None] * policy).ravel(), atol=1e-9)

    def test_truncated_series(self):
        rng = np.random.default_rng(7)
        mdp = make_random_mdp(5, 3, 1, 0.9, rng)
        policy = random_policy_table(mdp, rng)
        P_pi = state_transition_matrix(mdp, policy)
        p_t = mdp.P0.copy()
        d = np.zeros(5)
        for t in range(2000):
            d += (1 - mdp.gamma) * mdp.gamma ** t * p_t
            p_t = P_pi.T @ p_t
        mu = oracle_occupancy(mdp, policy)
        self.assertAlmostEqual(mu.sum(), 1.0, delta=1e-10)
        np.testing.assert_allclose(mu, (d[:, None] * policy).ravel(), atol=1e-8)

    def test_lemma1_identity(self):
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(100):
            n_states = int(rng.integers(1, 9))
            n_actions = int(rng.integers(1, 5))
            mdp = make_random_mdp(n_states, n_actions, 1, float(rng.uniform(0.5, 0.99)), rng)
            policy = random_policy_table(mdp, rng)
            f = rng.normal(size=(n_states, 3))
            mu = oracle_occupancy(mdp, policy).reshape(n_states, n_actions)
            expected_next = np.einsum('sat,tk->sak', mdp.P, f)
            lhs = np.einsum('sa,sak->k', mu, f[:, None, :] - mdp.gamma * expected_next)
            rhs = (1 - mdp.gamma) * mdp.P0 @ f
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        self.assertLessEqual(worst, 1e-10)


class ValueIterationTests(unittest.TestCase):

    def test_chain_steps_right(self):
        result = value_iteration(make_chain_mdp(4))
        np.testing.assert_array_equal(result.policy.argmax(axis=1), [1, 1, 1, 1])
        self.assertLess(result.bellman_residual, 1e-10)

    def test_gridworld_matches_policy_evaluation(self):
        mdp = make_gridworld_mdp()
        result = value_iteration(mdp)
        q = oracle_q_values(mdp, result.policy, mdp.reward).reshape(mdp.n_states, mdp.n_actions)
        np.testing.assert_allclose(q.max(axis=1), result.values, atol=1e-8)

    def test_non_convergence(self):
        with self.assertRaises(ValueError):
            value_iteration(make_gridworld_mdp(), max_sweeps=3)

    def test_state_occupancy_is_marginal(self):
        mdp = make_chain_mdp(4, gamma=0.5)
        policy = uniform_policy_table(mdp)
        np.testing.assert_allclose(oracle_occupancy(mdp, policy).reshape(4, 2).sum(axis=1), oracle_state_occupancy(mdp, policy),
                                   atol=1e-14)

    def test_invalid_mdp(self):
        with self.assertRaises(ValueError):
            TabularMDP(P=np.full((2, 1, 2), 0.6), P0=np.array([0.5, 0.5]), gamma=0.9, Phi=np.eye(2))
        with self.assertRaises(ValueError):
            TabularMDP(P=np.full((2, 1, 2), 0.5), P0=np.array([0.5, 0.5]), gamma=1.0, Phi=np.eye(2))


if __name__ == '__main__':
    unittest.main()
