import json
import os
import time
from dataclasses import dataclass, asdict
from typing import Callable, Dict, List, Tuple

import numpy as np
from tqdm import tqdm

from sfmpy.function_approx import Mlp, central_difference_gradient, relative_error
from sfmpy.mdp_core import TabularMDP, TransitionBatch, Trajectory, make_random_mdp, random_policy_table, oracle_sf, oracle_occupancy, \
    oracle_q_values, state_action_transition_matrix, make_chain_env, make_expert, rollout
from sfmpy.policy_opt import DeterministicActor, GaussianActor, deterministic_pg_gradient, gaussian_pg_gradient, \
    gaussian_log_derivative_gradient, gaussian_pg_step, witness_objective
from sfmpy.sf_estimator import SfNet, sf_td_update, sf_td_target, sf_predict, tabular_sf_net
from sfmpy.witness import ExpertSfTracker, expert_sf_from_demos, compute_witness, buffer_sf_estimate_exact, initial_state_sf, \
    agent_sf_estimate

VERIFICATION_SUITES = {
    'lemma1': ['lemma1_identity', 'q_factorization', 'oracle_sf_bellman_residual', 'occupancy_normalisation', 'rollout_determinism'],
    'prop1': ['prop1_exact_identity', 'prop1_monte_carlo_slope', 'ema_tracking', 'witness_degeneracy', 'witness_argmax'],
    'prop2': ['deterministic_pg_finite_difference', 'gaussian_pg_finite_difference', 'reparameterization_vs_log_derivative',
              'witness_gradient_linearity', 'tanh_saturation_guard', 'entropy_monotonicity'],
    'sf_oracle': ['sf_td_vs_oracle', 'sf_td7_vs_oracle', 'sf_td_stochastic_vs_oracle', 'clip_monotonicity', 'mean_bootstrap_symmetry',
                  'target_staleness'],
}
SUITE_CHOICES = list(VERIFICATION_SUITES) + ['all']

N_RANDOM_MDPS = 100
N_GRADIENT_INSTANCES = 50


class VerificationFailure(ValueError):
    """One or more verification checks exceeded their tolerance."""
    pass


@dataclass
class CheckResult:
    suite: str
    name: str
    max_error: float
    tolerance: float
    passed: bool
    instances: int
    seconds: float


def _random_tabular(rng: np.random.Generator, d: int = 3) -> TabularMDP:
    return make_random_mdp(int(rng.integers(1, 9)), int(rng.integers(1, 5)), d, float(rng.uniform(0.5, 0.99)), rng)


### lemma1

def check_lemma1_identity() -> Tuple[float, int]:
    """E_mu[f(S, A) - gamma E f(S', .)] = (1 - gamma) E_P0[f] for random test functions of the state."""
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(N_RANDOM_MDPS):
        mdp = _random_tabular(rng, d=1)
        policy = random_policy_table(mdp, rng)
        f = rng.normal(size=(mdp.n_states, 3))
        mu = oracle_occupancy(mdp, policy).reshape(mdp.n_states, mdp.n_actions)
        expected_next = np.einsum('sat,tk->sak', mdp.P, f)
        lhs = np.einsum('sa,sak->k', mu, f[:, None, :] - mdp.gamma * expected_next)
        worst = max(worst, float(np.max(np.abs(lhs - (1 - mdp.gamma) * mdp.P0 @ f))))
    return worst, N_RANDOM_MDPS


def check_q_factorization() -> Tuple[float, int]:
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(N_RANDOM_MDPS):
        mdp = _random_tabular(rng)
        policy = random_policy_table(mdp, rng)
        w = rng.normal(size=mdp.feature_dim)
        q_values = oracle_q_values(mdp, policy, mdp.Phi @ w)
        worst = max(worst, float(np.max(np.abs(q_values - oracle_sf(mdp, policy) @ w))))
    return worst, N_RANDOM_MDPS


def check_oracle_sf_bellman_residual() -> Tuple[float, int]:
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(N_RANDOM_MDPS):
        mdp = _random_tabular(rng)
        policy = random_policy_table(mdp, rng)
        psi = oracle_sf(mdp, policy)
        phi_sa = np.repeat(mdp.Phi, mdp.n_actions, axis=0)
        residual = phi_sa + mdp.gamma * state_action_transition_matrix(mdp, policy) @ psi - psi
        worst = max(worst, float(np.max(np.abs(residual))))
    return worst, N_RANDOM_MDPS


def check_occupancy_normalisation() -> Tuple[float, int]:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(N_RANDOM_MDPS):
        mdp = _random_tabular(rng)
        mu = oracle_occupancy(mdp, random_policy_table(mdp, rng))
        worst = max(worst, abs(float(mu.sum()) - 1.0), max(0.0, -float(mu.min())))
    return worst, N_RANDOM_MDPS


def check_rollout_determinism() -> Tuple[float, int]:
    env = make_chain_env(n_states=5)
    expert = make_expert(env)
    first = rollout(env, expert, rng_seed=4, n_steps=200)
    second = rollout(env, expert, rng_seed=4, n_steps=200)
    worst = 0.0
    for a, b in zip(first, second):
        worst = max(worst, float(np.max(np.abs(a.state - b.state))), float(np.max(np.abs(a.next_state - b.next_state))))
    return worst, len(first)


### prop1

def check_prop1_exact_identity() -> Tuple[float, int]:
    """Buffer estimator expectation under a mixture of occupancies equals the initial-state SF."""
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(N_RANDOM_MDPS):
        mdp = _random_tabular(rng)
        policy = random_policy_table(mdp, rng)
        psi = oracle_sf(mdp, policy)
        weights = rng.dirichlet(np.ones(3))
        buffer = sum(wt * oracle_occupancy(mdp, random_policy_table(mdp, rng)) for wt in weights)
        estimate = buffer_sf_estimate_exact(mdp, psi, policy, buffer)
        worst = max(worst, float(np.max(np.abs(estimate - initial_state_sf(mdp, psi, policy)))))
    return worst, N_RANDOM_MDPS


def _sample_rows(rng: np.random.Generator, probabilities: np.ndarray) -> np.ndarray:
    """One categorical draw per row of a probability matrix."""
    cumulative = np.cumsum(probabilities, axis=1)
    u = rng.random(len(probabilities))[:, None] * cumulative[:, -1:]
    return np.minimum((cumulative <= u).sum(axis=1), probabilities.shape[1] - 1)


def monte_carlo_slope(sizes=(100, 400, 1600, 6400, 25600), repeats: int = 50, seed: int = 6) -> float:
    """Log-log slope of the RMSE of agent_sf_estimate, on an exact SF table, against the batch size."""
    rng = np.random.default_rng(seed)
    mdp = make_random_mdp(5, 2, 3, 0.9, rng)
    policy = random_policy_table(mdp, rng)
    table = oracle_sf(mdp, policy)
    truth = initial_state_sf(mdp, table, policy)
    net = tabular_sf_net(mdp.n_states, mdp.n_actions, table.shape[1], table=table)
    state_codes, action_codes = np.eye(mdp.n_states), np.eye(mdp.n_actions)
    one_hot_policy = lambda states, r: action_codes[_sample_rows(r, policy[np.argmax(states, axis=1)])]
    buffer = 0.5 * oracle_occupancy(mdp, random_policy_table(mdp, rng)) + 0.5 * oracle_occupancy(mdp, random_policy_table(mdp, rng))
    # solver round-off can leave tiny negative entries
    buffer = np.clip(buffer, 0.0, None)
    buffer = buffer / buffer.sum()

    rmse = []
    for n in sizes:
        errors = []
        for _ in range(repeats):
            pairs = rng.choice(len(buffer), size=n, p=buffer)
            states, behaviour_actions = pairs // mdp.n_actions, pairs % mdp.n_actions
            next_states = _sample_rows(rng, mdp.P[states, behaviour_actions])
            batch = TransitionBatch(states=state_codes[states], actions=action_codes[behaviour_actions],
                                    next_states=state_codes[next_states])
            estimate = agent_sf_estimate(net, one_hot_policy, batch, mdp.gamma, rng)
            errors.append(float(np.sum((estimate - truth) ** 2)))
        rmse.append(np.sqrt(np.mean(errors)))
    slope, _ = np.polyfit(np.log(sizes), np.log(rmse), 1)
    return float(slope)


def check_prop1_monte_carlo_slope() -> Tuple[float, int]:
    return abs(monte_carlo_slope() + 0.5), 5


def check_ema_tracking() -> Tuple[float, int]:
    rng = np.random.default_rng(7)
    demos = [Trajectory(states=rng.normal(size=(8, 3))) for _ in range(2)]
    phi = Mlp([3, 4], ['tanh'], rng_seed=1)
    tracker = ExpertSfTracker(gamma=0.9, ema_rate=0.05, ema=np.zeros(4))
    initial_gap = float(np.linalg.norm(expert_sf_from_demos(demos, phi.forward, 0.9)))
    worst = 0.0
    for k in range(1, 201):
        tracker.update(demos, phi.forward)
        worst = max(worst, float(np.linalg.norm(tracker.ema - tracker.raw)) - 0.95 ** k * initial_gap)
    return max(worst, 0.0), 200


def check_witness_degeneracy() -> Tuple[float, int]:
    rng = np.random.default_rng(8)
    worst = 0.0
    for instance in range(10):
        expert_sf = rng.normal(size=4)
        witness = compute_witness(expert_sf, expert_sf.copy())
        actor = DeterministicActor(3, 2, hidden=8, seed=instance)
        grad = deterministic_pg_gradient(actor, SfNet(3, 2, 4, hidden=8, seed=instance), witness, rng.normal(size=(6, 3)))
        worst = max(worst, float(np.max(np.abs(grad))), 0.0 if witness.degenerate else np.inf)
    return worst, 10


def check_witness_argmax() -> Tuple[float, int]:
    rng = np.random.default_rng(9)
    worst = -np.inf
    for _ in range(10):
        expert_sf, agent_sf = rng.normal(size=5), rng.normal(size=5)
        bound = float(rng.uniform(0.5, 3.0))
        difference = expert_sf - agent_sf
        best = difference @ compute_witness(expert_sf, agent_sf, normalize=True, B=bound).w
        candidates = rng.normal(size=(1000, 5))
        candidates *= (bound * rng.uniform(size=(1000, 1))) / np.linalg.norm(candidates, axis=1, keepdims=True)
        worst = max(worst, float(np.max(candidates @ difference - best)))
    return max(worst, 0.0), 10000


### prop2

def _smooth_sf(state_dim: int, action_dim: int, d: int, seed: int) -> SfNet:
    return SfNet(state_dim, action_dim, d, psi1=Mlp([state_dim + action_dim, 6, d], ['tanh', 'identity'], rng_seed=seed),
                 psi2=Mlp([state_dim + action_dim, 6, d], ['tanh', 'identity'], rng_seed=seed + 1))


def _smooth_gaussian(state_dim: int, action_dim: int, seed: int, entropy_coeff: float) -> GaussianActor:
    return GaussianActor(state_dim, action_dim, entropy_coeff=entropy_coeff,
                         mean_head=Mlp([state_dim, 5, action_dim], ['tanh', 'tanh'], rng_seed=seed),
                         std_head=Mlp([state_dim, 5, action_dim], ['tanh', 'identity'], rng_seed=seed + 1))


def _finite_difference_error(actor, objective: Callable[[], float], analytic: np.ndarray) -> float:
    original = actor.params.copy()

    def at(params):
        actor.params = params
        return objective()

    numeric = central_difference_gradient(at, original)
    actor.params = original
    return relative_error(analytic, numeric)


def check_deterministic_pg_finite_difference() -> Tuple[float, int]:
    rng = np.random.default_rng(10)
    worst = 0.0
    for instance in range(N_GRADIENT_INSTANCES):
        actor = DeterministicActor(3, 2, net=Mlp([3, 5, 2], ['tanh', 'tanh'], rng_seed=instance))
        sf_net = _smooth_sf(3, 2, 4, seed=1000 + instance)
        w, states = rng.normal(size=4), rng.normal(size=(6, 3))
        analytic = deterministic_pg_gradient(actor, sf_net, w, states)
        worst = max(worst, _finite_difference_error(actor, lambda: witness_objective(actor, sf_net, w, states), analytic))
    return worst, N_GRADIENT_INSTANCES


def check_gaussian_pg_finite_difference() -> Tuple[float, int]:
    rng = np.random.default_rng(11)
    worst = 0.0
    for instance in range(N_GRADIENT_INSTANCES):
        actor = _smooth_gaussian(3, 2, seed=instance, entropy_coeff=1e-2)
        sf_net = _smooth_sf(3, 2, 4, seed=2000 + instance)
        w, states, noise = rng.normal(size=4), rng.normal(size=(6, 3)), rng.standard_normal(size=(6, 2))
        analytic = gaussian_pg_gradient(actor, sf_net, w, states, noise)
        worst = max(worst, _finite_difference_error(actor, lambda: witness_objective(actor, sf_net, w, states, noise), analytic))
    return worst, N_GRADIENT_INSTANCES


def check_reparameterization_vs_log_derivative() -> Tuple[float, int]:
    """Largest gap between the two estimators in units of three combined standard errors."""
    rng = np.random.default_rng(12)
    actor = GaussianActor(1, 1, entropy_coeff=0.0, mean_head=Mlp([1, 1], ['tanh'], params=np.array([0.5, 0.1])),
                          std_head=Mlp([1, 1], ['identity'], params=np.array([0.2, -0.5])))
    sf_net = _smooth_sf(1, 1, 3, seed=11)
    w = np.array([1.0, -0.5, 0.8])
    n = 10 ** 5
    states = rng.uniform(-1, 1, size=(n, 1))
    reparameterised = gaussian_pg_gradient(actor, sf_net, w, states, rng.standard_normal(size=(n, 1)), per_sample=True)
    score_function = gaussian_log_derivative_gradient(actor, sf_net, w, states, rng.standard_normal(size=(n, 1)), per_sample=True)
    difference = np.abs(reparameterised.mean(axis=0) - score_function.mean(axis=0))
    standard_error = np.sqrt(reparameterised.var(axis=0, ddof=1) / n + score_function.var(axis=0, ddof=1) / n)
    return float(np.max(difference / (3 * standard_error))), n


def check_witness_gradient_linearity() -> Tuple[float, int]:
    rng = np.random.default_rng(13)
    worst = 0.0
    for instance in range(20):
        sf_net = _smooth_sf(3, 2, 4, seed=3000 + instance)
        w, states, c = rng.normal(size=4), rng.normal(size=(6, 3)), float(rng.uniform(0.1, 10.0))
        deterministic = DeterministicActor(3, 2, net=Mlp([3, 5, 2], ['tanh', 'tanh'], rng_seed=instance))
        gaussian = _smooth_gaussian(3, 2, seed=instance, entropy_coeff=0.0)
        noise = rng.standard_normal(size=(6, 2))
        pairs = [(deterministic_pg_gradient(deterministic, sf_net, c * w, states), deterministic_pg_gradient(deterministic, sf_net, w, states)),
                 (gaussian_pg_gradient(gaussian, sf_net, c * w, states, noise), gaussian_pg_gradient(gaussian, sf_net, w, states, noise))]
        for scaled, base in pairs:
            worst = max(worst, relative_error(scaled, c * base))
    return worst, 40


def check_tanh_saturation_guard() -> Tuple[float, int]:
    net = Mlp([2, 3, 1], ['relu', 'tanh'], rng_seed=2)
    weights, bias = net.layers()[-1]
    weights[:] = 0.0
    bias[:] = np.arctanh(1 - 1e-7)
    actor = DeterministicActor(2, 1, net=net)
    grad = deterministic_pg_gradient(actor, _smooth_sf(2, 1, 3, seed=5), np.ones(3), np.full((4, 2), 0.5))
    distance = 1 - float(actor.act(np.array([0.5, 0.5]))[0])
    return (0.0 if np.all(np.isfinite(grad)) and 0 < distance < 1e-6 else np.inf), 1


def check_entropy_monotonicity() -> Tuple[float, int]:
    rng = np.random.default_rng(14)
    actor = _smooth_gaussian(3, 2, seed=14, entropy_coeff=1e-2)
    actor.adam.learning_rate = 1e-3
    sf_net = _smooth_sf(3, 2, 4, seed=15)
    states, noise = rng.normal(size=(16, 3)), rng.standard_normal(size=(16, 2))
    previous = float(np.mean(actor.entropy(states)))
    worst = 0.0
    for _ in range(50):
        gaussian_pg_step(actor, sf_net, np.zeros(4), states, noise)
        current = float(np.mean(actor.entropy(states)))
        worst = max(worst, previous - current)
        previous = current
    return worst, 50


### sf_oracle

def _one_hot_batch(n_states: int, n_actions: int, transitions) -> TransitionBatch:
    transitions = np.asarray(transitions)
    return TransitionBatch(states=np.eye(n_states)[transitions[:, 0]], actions=np.eye(n_actions)[transitions[:, 1]],
                           next_states=np.eye(n_states)[transitions[:, 2]])


def _tabular_td_error(mdp: TabularMDP, greedy: np.ndarray, batch: TransitionBatch, mode: str, updates: int, learning_rate: float,
                      final_learning_rate: float = None, update_interval: int = 10) -> float:
    """
    Largest gap between full-batch TD on an exact SF table and the oracle SF of the greedy policy.
    With final_learning_rate the Adam learning rate decays geometrically to it over the run.
    """
    n_states, n_actions = mdp.n_states, mdp.n_actions
    net = tabular_sf_net(n_states, n_actions, mdp.feature_dim, mode=mode, learning_rate=learning_rate,
                         update_interval=update_interval)
    next_policy = lambda s, _: np.eye(n_actions)[greedy[np.argmax(s, axis=1)]]
    features = lambda s: mdp.Phi[np.argmax(s, axis=1)]
    decay = 1.0 if final_learning_rate is None else (final_learning_rate / learning_rate) ** (1 / updates)
    for _ in range(updates):
        sf_td_update(net, features, next_policy, batch, mdp.gamma)
        net.adam1.learning_rate *= decay
        net.adam2.learning_rate *= decay
    pairs = np.arange(n_states * n_actions)
    learned = sf_predict(net, np.eye(n_states)[pairs // n_actions], np.eye(n_actions)[pairs % n_actions])
    return float(np.max(np.abs(learned - oracle_sf(mdp, np.eye(n_actions)[greedy]))))


def _deterministic_td_problem(seed: int = 12):
    rng = np.random.default_rng(seed)
    n_states, n_actions = 5, 2
    successors = rng.integers(0, n_states, size=(n_states, n_actions))
    P = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            P[s, a, successors[s, a]] = 1.0
    mdp = TabularMDP(P=P, P0=np.full(n_states, 1 / n_states), gamma=0.5, Phi=np.eye(n_states))
    greedy = rng.integers(0, n_actions, size=n_states)
    batch = _one_hot_batch(n_states, n_actions, [(s, a, successors[s, a]) for s in range(n_states) for a in range(n_actions)])
    return mdp, greedy, batch


def check_sf_td_vs_oracle() -> Tuple[float, int]:
    """td3 targets on a 5-state deterministic MDP with one-hot features."""
    mdp, greedy, batch = _deterministic_td_problem()
    return _tabular_td_error(mdp, greedy, batch, 'td3', 20000, 1e-2, final_learning_rate=1e-5), 20000


def check_sf_td7_vs_oracle() -> Tuple[float, int]:
    """td7 targets (hard refresh, clipped bootstrap) on the same deterministic MDP."""
    mdp, greedy, batch = _deterministic_td_problem()
    return _tabular_td_error(mdp, greedy, batch, 'td7', 20000, 0.1, final_learning_rate=1e-5), 20000


def check_sf_td_stochastic_vs_oracle() -> Tuple[float, int]:
    """
    td7 targets at the training discount 0.99 on a stochastic 4-state MDP. Each pair appears once per
    recorded successor and P holds their empirical frequencies, so the full-batch fixed point is the oracle SF.
    The error is relative to the largest oracle entry.
    """
    rng = np.random.default_rng(13)
    n_states, n_actions, draws = 4, 2, 4
    successors = rng.integers(0, n_states, size=(n_states, n_actions, draws))
    P = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            np.add.at(P[s, a], successors[s, a], 1 / draws)
    mdp = TabularMDP(P=P, P0=np.full(n_states, 1 / n_states), gamma=0.99, Phi=np.eye(n_states))
    greedy = rng.integers(0, n_actions, size=n_states)
    batch = _one_hot_batch(n_states, n_actions, [(s, a, t) for s in range(n_states) for a in range(n_actions)
                                                 for t in successors[s, a]])
    error = _tabular_td_error(mdp, greedy, batch, 'td7', 30000, 0.1, final_learning_rate=1e-4)
    scale = float(np.max(np.abs(oracle_sf(mdp, np.eye(n_actions)[greedy]))))
    return error / scale, 30000


def _random_batch(rng: np.random.Generator, n: int = 16) -> TransitionBatch:
    return TransitionBatch(states=rng.normal(size=(n, 3)), actions=rng.uniform(-1, 1, size=(n, 2)), next_states=rng.normal(size=(n, 3)))


def _tanh_features(states):
    return np.tanh(np.atleast_2d(states)[:, :2])


def _zero_policy(states, rng):
    return np.zeros((len(states), 2))


def check_clip_monotonicity() -> Tuple[float, int]:
    rng = np.random.default_rng(15)
    net = SfNet(3, 2, 2, hidden=8, mode='td7', update_interval=10, learning_rate=1e-2)
    # bounds are defined by the first batch, monotone from then on
    sf_td_update(net, _tanh_features, _zero_policy, _random_batch(rng), 0.9)
    worst = max(0.0, float(np.max(net.clip_low - net.clip_high)))
    low, high = net.clip_low.copy(), net.clip_high.copy()
    for _ in range(100):
        sf_td_update(net, _tanh_features, _zero_policy, _random_batch(rng), 0.9)
        worst = max(worst, float(np.max(net.clip_low - low)), float(np.max(high - net.clip_high)),
                    float(np.max(net.clip_low - net.clip_high)))
        low, high = net.clip_low.copy(), net.clip_high.copy()
    return worst, 101


def check_mean_bootstrap_symmetry() -> Tuple[float, int]:
    rng = np.random.default_rng(16)
    worst = 0.0
    for instance in range(10):
        net = SfNet(3, 2, 2, hidden=8, seed=instance)
        batch = _random_batch(rng)
        next_actions = rng.uniform(-1, 1, size=(16, 2))
        before = sf_td_target(net, _tanh_features(batch.states), batch.next_states, next_actions, 0.99)
        net.psi1, net.psi2 = net.psi2, net.psi1
        net.targets1, net.targets2 = net.targets2, net.targets1
        after = sf_td_target(net, _tanh_features(batch.states), batch.next_states, next_actions, 0.99)
        worst = max(worst, float(np.max(np.abs(before - after))))
    return worst, 10


def check_target_staleness() -> Tuple[float, int]:
    rng = np.random.default_rng(17)
    interval = 5
    net = SfNet(3, 2, 2, hidden=8, mode='td7', update_interval=interval, learning_rate=1e-2)
    fixed_states, fixed_actions = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))
    previous = net.predict(fixed_states, fixed_actions, target=True)
    worst = 0.0
    for update in range(1, 31):
        sf_td_update(net, _tanh_features, _zero_policy, _random_batch(rng), 0.9)
        current = net.predict(fixed_states, fixed_actions, target=True)
        if update % interval != 0:
            worst = max(worst, float(np.max(np.abs(current - previous))))
        previous = current
    return worst, 30


CHECKS: Dict[str, Tuple[Callable[[], Tuple[float, int]], float]] = {
    'lemma1_identity': (check_lemma1_identity, 1e-10),
    'q_factorization': (check_q_factorization, 1e-9),
    'oracle_sf_bellman_residual': (check_oracle_sf_bellman_residual, 1e-10),
    'occupancy_normalisation': (check_occupancy_normalisation, 1e-10),
    'rollout_determinism': (check_rollout_determinism, 0.0),
    'prop1_exact_identity': (check_prop1_exact_identity, 1e-10),
    'prop1_monte_carlo_slope': (check_prop1_monte_carlo_slope, 0.1),
    'ema_tracking': (check_ema_tracking, 1e-12),
    'witness_degeneracy': (check_witness_degeneracy, 0.0),
    'witness_argmax': (check_witness_argmax, 1e-12),
    'deterministic_pg_finite_difference': (check_deterministic_pg_finite_difference, 1e-4),
    'gaussian_pg_finite_difference': (check_gaussian_pg_finite_difference, 1e-4),
    'reparameterization_vs_log_derivative': (check_reparameterization_vs_log_derivative, 1.0),
    'witness_gradient_linearity': (check_witness_gradient_linearity, 1e-12),
    'tanh_saturation_guard': (check_tanh_saturation_guard, 0.0),
    'entropy_monotonicity': (check_entropy_monotonicity, 1e-12),
    'sf_td_vs_oracle': (check_sf_td_vs_oracle, 1e-3),
    'sf_td7_vs_oracle': (check_sf_td7_vs_oracle, 1e-3),
    'sf_td_stochastic_vs_oracle': (check_sf_td_stochastic_vs_oracle, 5e-3),
    'clip_monotonicity': (check_clip_monotonicity, 0.0),
    'mean_bootstrap_symmetry': (check_mean_bootstrap_symmetry, 0.0),
    'target_staleness': (check_target_staleness, 0.0),
}

_CORRUPTION = 1e6


def run_check(suite: str, name: str, corrupt_check: str = None) -> CheckResult:
    check, tolerance = CHECKS[name]
    start = time.time()
    max_error, instances = check()
    if name == corrupt_check:
        max_error = max_error + _CORRUPTION * max(tolerance, 1.0)
    max_error = float(max_error)
    return CheckResult(suite=suite, name=name, max_error=max_error, tolerance=tolerance,
                       passed=bool(np.isfinite(max_error) and max_error <= tolerance), instances=int(instances),
                       seconds=time.time() - start)


def run_suite(suite: str, corrupt_check: str = None, progress: bool = True) -> List[CheckResult]:
    if suite not in SUITE_CHOICES:
        raise ValueError(f'Unknown verification suite: {suite}. Choose from {SUITE_CHOICES}')
    if corrupt_check is not None and corrupt_check not in CHECKS:
        raise ValueError(f'Unknown check to corrupt: {corrupt_check}')
    suites = list(VERIFICATION_SUITES) if suite == 'all' else [suite]
    jobs = [(s, name) for s in suites for name in VERIFICATION_SUITES[s]]
    return [run_check(s, name, corrupt_check) for s, name in tqdm(jobs, desc=f'Verifying {suite}', ascii=False, ncols=80, disable=not progress)]


def verification_report(results: List[CheckResult]) -> dict:
    return {'passed': all(r.passed for r in results),
            'failed_checks': [r.name for r in results if not r.passed],
            'checks': [asdict(r) for r in results]}


def write_report(results: List[CheckResult], path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf8') as f:
        json.dump(verification_report(results), f, indent=2)


def raise_on_failure(results: List[CheckResult]):
    failed = [r for r in results if not r.passed]
    if failed:
        details = ', '.join(f'{r.name} (error {r.max_error:.3g} > {r.tolerance:.3g})' for r in failed)
        raise VerificationFailure(f'Verification failed: {details}')
