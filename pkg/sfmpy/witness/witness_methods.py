from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from sfmpy.function_approx import NonFiniteError
from sfmpy.mdp_core import TabularMDP, Trajectory, check_policy_table
from sfmpy.sf_estimator import SfNet

EXPERT_SF_EMA_RATE = 0.01


def expert_sf_from_demos(demos: List[Trajectory], feature_fn: Callable[[np.ndarray], np.ndarray], gamma: float) -> np.ndarray:
    """
    Discounted feature sum of the demonstrations: (1/M) sum_i sum_t gamma^(t-1) phi(s_t^i), t running from 1.

    :param demos: list of Trajectory (or state arrays)
    :param feature_fn: maps a state batch to features
    :param gamma: discount
    :return: d-vector
    """
    if len(demos) == 0:
        raise ValueError('Need at least one demonstration')
    total = None
    for i, demo in enumerate(demos):
        states = demo.states if isinstance(demo, Trajectory) else np.atleast_2d(demo)
        if len(states) == 0:
            raise ValueError(f'Demonstration {i} has no states')
        phi = np.atleast_2d(feature_fn(states))
        discounted = (gamma ** np.arange(len(states))) @ phi
        total = discounted if total is None else total + discounted
    return total / len(demos)


@dataclass
class ExpertSfTracker:
    """Exponential moving average of the expert SF as the feature map drifts."""
    gamma: float
    ema_rate: float = EXPERT_SF_EMA_RATE
    raw: Optional[np.ndarray] = None
    ema: Optional[np.ndarray] = None
    n_updates: int = 0

    def __post_init__(self):
        if not 0 < self.ema_rate <= 1:
            raise ValueError(f'EMA rate must lie in (0, 1], got {self.ema_rate}')

    def update(self, demos: List[Trajectory], feature_fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        self.raw = expert_sf_from_demos(demos, feature_fn, self.gamma)
        if self.ema is None:
            self.ema = self.raw.copy()
        else:
            self.ema = (1 - self.ema_rate) * self.ema + self.ema_rate * self.raw
        self.n_updates += 1
        return self.ema


def agent_sf_estimate(net: SfNet, policy: Callable, batch, gamma: float, rng: np.random.Generator = None) -> np.ndarray:
    """
    Initial-state expected SF of the policy from buffer pairs (S, S'):
    (1 - gamma)^-1 * mean[psi(S, A) - gamma psi(S', A')], A ~ pi(.|S), A' ~ pi(.|S').

    :param net: SfNet (the mean of the twins is used)
    :param policy: action sampler called as policy(states, rng)
    :param batch: anything with `states` and `next_states` arrays
    :param gamma: discount, strictly below 1
    """
    if not 0 <= gamma < 1:
        raise ValueError(f'The buffer estimator needs gamma in [0, 1), got {gamma}')
    states = np.atleast_2d(batch.states)
    next_states = np.atleast_2d(batch.next_states)
    if len(states) == 0:
        raise ValueError('The buffer estimator needs a non-empty batch')
    actions = policy(states, rng)
    next_actions = policy(next_states, rng)
    difference = net.predict(states, actions) - gamma * net.predict(next_states, next_actions)
    return difference.mean(axis=0) / (1 - gamma)


@dataclass
class Witness:
    w: np.ndarray
    normalized: bool = False
    bound_B: Optional[float] = None
    degenerate: bool = False

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.w))


def compute_witness(expert_sf: np.ndarray, agent_sf: np.ndarray, normalize: bool = False, B: float = 1.0) -> Witness:
    """
    expert_sf - agent_sf, or its rescaling to norm B when normalize is set.
    A zero difference gives the zero vector flagged as degenerate.
    """
    expert_sf = np.asarray(expert_sf, dtype=np.float64)
    agent_sf = np.asarray(agent_sf, dtype=np.float64)
    if expert_sf.shape != agent_sf.shape:
        raise ValueError(f'Expert SF shape {expert_sf.shape} does not match agent SF shape {agent_sf.shape}')
    if not (np.all(np.isfinite(expert_sf)) and np.all(np.isfinite(agent_sf))):
        raise NonFiniteError('Non-finite successor features passed to the witness')
    if normalize and B <= 0:
        raise ValueError(f'The witness bound must be positive, got {B}')

    difference = expert_sf - agent_sf
    gap = float(np.linalg.norm(difference))
    if gap == 0:
        return Witness(w=np.zeros_like(difference), normalized=normalize, bound_B=B if normalize else None, degenerate=True)
    if normalize:
        return Witness(w=B * difference / gap, normalized=True, bound_B=B)
    return Witness(w=difference)


def witness_reward(feature_fn: Callable[[np.ndarray], np.ndarray], witness: Witness, state) -> np.ndarray:
    """r(s) = phi(s)^T w; a float for one state, a vector for a batch."""
    phi = feature_fn(state)
    if np.shape(phi)[-1] != len(witness.w):
        raise ValueError(f'Feature dimension {np.shape(phi)[-1]} does not match witness dimension {len(witness.w)}')
    reward = np.asarray(phi) @ witness.w
    return float(reward) if np.ndim(reward) == 0 else reward


### Exact tabular forms

def state_sf_table(mdp: TabularMDP, psi: np.ndarray, policy: np.ndarray) -> np.ndarray:
    """Psi(s) = sum_a pi(a|s) psi(s, a), shape (n_states, d)."""
    policy = check_policy_table(mdp, policy)
    return np.einsum('sa,sad->sd', policy, psi.reshape(mdp.n_states, mdp.n_actions, -1))


def initial_state_sf(mdp: TabularMDP, psi: np.ndarray, policy: np.ndarray) -> np.ndarray:
    return mdp.P0 @ state_sf_table(mdp, psi, policy)


def buffer_sf_estimate_exact(mdp: TabularMDP, psi: np.ndarray, policy: np.ndarray, buffer_occupancy: np.ndarray) -> np.ndarray:
    """
    Expectation of the buffer estimator when (S, A_b) ~ buffer_occupancy and S' ~ P(.|S, A_b),
    with the policy's actions averaged exactly.
    """
    buffer_occupancy = np.asarray(buffer_occupancy, dtype=np.float64)
    if buffer_occupancy.shape != (mdp.n_states * mdp.n_actions,):
        raise ValueError(f'Buffer occupancy must have length {mdp.n_states * mdp.n_actions}')
    per_state = state_sf_table(mdp, psi, policy)
    next_expected = mdp.P.reshape(mdp.n_states * mdp.n_actions, mdp.n_states) @ per_state
    current = np.repeat(per_state, mdp.n_actions, axis=0)
    return buffer_occupancy @ (current - mdp.gamma * next_expected) / (1 - mdp.gamma)
