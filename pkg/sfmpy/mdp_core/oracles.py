from dataclasses import dataclass

import numpy as np
import scipy.linalg

from sfmpy.mdp_core.tabular_mdps import TabularMDP, PROBABILITY_TOLERANCE

BELLMAN_TOLERANCE = 1e-10
MAX_VALUE_ITERATION_SWEEPS = 10 ** 5


def check_policy_table(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f'Policy table must have shape {(mdp.n_states, mdp.n_actions)}, got {policy.shape}')
    if np.any(policy < 0) or np.max(np.abs(policy.sum(axis=1) - 1)) > PROBABILITY_TOLERANCE:
        raise ValueError('Every policy row must be a probability vector')
    return policy


def uniform_policy_table(mdp: TabularMDP) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def random_policy_table(mdp: TabularMDP, rng: np.random.Generator) -> np.ndarray:
    table = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
    return table / table.sum(axis=1, keepdims=True)


def state_action_transition_matrix(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """P_pi[(s, a), (s', a')] = P(s' | s, a) pi(a' | s'), indexed s * n_actions + a."""
    policy = check_policy_table(mdp, policy)
    n_pairs = mdp.n_states * mdp.n_actions
    return (mdp.P.reshape(n_pairs, mdp.n_states)[:, :, None] * policy[None, :, :]).reshape(n_pairs, n_pairs)


def state_transition_matrix(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    policy = check_policy_table(mdp, policy)
    return np.einsum('sa,sat->st', policy, mdp.P)


def _solve(matrix: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    try:
        solution = scipy.linalg.solve(matrix, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise ValueError(f'Linear solve for {what} failed: {e}')
    if not np.all(np.isfinite(solution)):
        raise ValueError(f'Linear solve for {what} returned non-finite values')
    return solution


def oracle_sf(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """
    Exact successor features of a tabular policy.

    Solves psi = Phi_sa + gamma P_pi psi, where Phi_sa repeats phi(s) for every action.

    :param mdp: the TabularMDP
    :param policy: (n_states, n_actions) probability table
    :return: (n_states * n_actions, d) matrix, row s * n_actions + a holds psi(s, a)
    """
    P_pi = state_action_transition_matrix(mdp, policy)
    phi_sa = np.repeat(mdp.Phi, mdp.n_actions, axis=0)
    system = np.eye(P_pi.shape[0]) - mdp.gamma * P_pi
    psi = _solve(system, phi_sa, 'successor features')
    residual = np.max(np.abs(phi_sa + mdp.gamma * P_pi @ psi - psi))
    scale = max(1.0, float(np.max(np.abs(psi))))
    if residual > 1e-8 * scale:
        raise ValueError(f'Successor feature solve is inaccurate, Bellman residual {residual}')
    return psi


def oracle_state_occupancy(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """d(s) = (1 - gamma) sum_t gamma^t Pr(S_t = s)."""
    P_pi = state_transition_matrix(mdp, policy)
    system = np.eye(mdp.n_states) - mdp.gamma * P_pi.T
    return (1 - mdp.gamma) * _solve(system, mdp.P0, 'state occupancy')


def oracle_occupancy(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """
    Discounted state-action occupancy mu(s, a) = (1 - gamma) pi(a|s) sum_t gamma^t p_t(s).

    :return: vector of length n_states * n_actions, entry s * n_actions + a
    """
    policy = check_policy_table(mdp, policy)
    d = oracle_state_occupancy(mdp, policy)
    return (d[:, None] * policy).ravel()


def oracle_q_values(mdp: TabularMDP, policy: np.ndarray, reward: np.ndarray) -> np.ndarray:
    """Q(s, a) = r(s) + gamma E[Q(s', a')], the reward being collected in the current state."""
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (mdp.n_states,):
        raise ValueError(f'Reward must have shape ({mdp.n_states},), got {reward.shape}')
    P_pi = state_action_transition_matrix(mdp, policy)
    return _solve(np.eye(P_pi.shape[0]) - mdp.gamma * P_pi, np.repeat(reward, mdp.n_actions), 'action values')


@dataclass
class ValueIterationResult:
    values: np.ndarray
    q_values: np.ndarray
    policy: np.ndarray
    sweeps: int
    bellman_residual: float


def value_iteration(mdp: TabularMDP, reward: np.ndarray = None, tol: float = 1e-12,
                    max_sweeps: int = MAX_VALUE_ITERATION_SWEEPS) -> ValueIterationResult:
    """
    Optimal values for a state reward collected in the current state.
    The returned policy is greedy (deterministic, lowest index on ties).
    """
    if reward is None:
        reward = mdp.reward
    if reward is None:
        raise ValueError('Value iteration needs a reward vector')
    reward = np.asarray(reward, dtype=np.float64)

    values = np.zeros(mdp.n_states)
    for sweep in range(1, max_sweeps + 1):
        q_values = reward[:, None] + mdp.gamma * mdp.P @ values
        new_values = q_values.max(axis=1)
        change = float(np.max(np.abs(new_values - values)))
        values = new_values
        if change < tol:
            break
    else:
        raise ValueError(f'Value iteration did not converge after {max_sweeps} sweeps')

    q_values = reward[:, None] + mdp.gamma * mdp.P @ values
    residual = float(np.max(np.abs(q_values.max(axis=1) - values)))
    if residual >= BELLMAN_TOLERANCE:
        raise ValueError(f'Value iteration stopped with Bellman residual {residual}')
    policy = np.zeros((mdp.n_states, mdp.n_actions))
    policy[np.arange(mdp.n_states), q_values.argmax(axis=1)] = 1.0
    return ValueIterationResult(values=values, q_values=q_values, policy=policy, sweeps=sweep, bellman_residual=residual)
