from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from sfmpy.function_approx import NonFiniteError
from sfmpy.mdp_core.environments import TabularEnv, PointMassEnv
from sfmpy.mdp_core.oracles import value_iteration, check_policy_table


@dataclass
class Transition:
    state: np.ndarray
    action: object
    next_state: np.ndarray
    truncated: bool = False


@dataclass
class Trajectory:
    """States s_1..s_T and, unless state-only, actions a_1..a_{T-1}."""
    states: np.ndarray
    actions: Optional[np.ndarray] = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float64))
        if self.actions is not None:
            self.actions = np.asarray(self.actions, dtype=np.float64)
            if len(self.actions) != len(self.states) - 1:
                raise ValueError(f'A trajectory with {len(self.states)} states needs {len(self.states) - 1} actions, got {len(self.actions)}')

    @property
    def has_actions(self) -> bool:
        return self.actions is not None


@dataclass
class TransitionBatch:
    states: np.ndarray
    actions: Optional[np.ndarray]
    next_states: np.ndarray

    def __len__(self):
        return len(self.states)

    @property
    def has_actions(self) -> bool:
        return self.actions is not None


def transitions_to_batch(transitions: List[Transition]) -> TransitionBatch:
    if len(transitions) == 0:
        raise ValueError('Cannot build a batch from no transitions')
    states = np.array([t.state for t in transitions], dtype=np.float64)
    next_states = np.array([t.next_state for t in transitions], dtype=np.float64)
    actions = np.array([np.atleast_1d(t.action) for t in transitions], dtype=np.float64)
    return TransitionBatch(states=states, actions=actions, next_states=next_states)


def demonstration_batch(demos: List[Trajectory]) -> TransitionBatch:
    """Consecutive state pairs of every demonstration, with actions when all demos have them."""
    states = np.concatenate([d.states[:-1] for d in demos])
    next_states = np.concatenate([d.states[1:] for d in demos])
    actions = None
    if all(d.has_actions for d in demos):
        actions = np.concatenate([np.atleast_2d(d.actions.reshape(len(d.actions), -1)) for d in demos])
    return TransitionBatch(states=states, actions=actions, next_states=next_states)


class TabularPolicy:
    """
    Policy given by an (n_states, n_actions) probability table. With continuous_actions the sampled
    index is returned as the environment's continuous action code.
    """

    def __init__(self, env: TabularEnv, table: np.ndarray, continuous_actions: bool = True):
        self.env = env
        self.table = check_policy_table(env.mdp, table)
        self.continuous_actions = continuous_actions
        self.action_dim = env.action_dim if continuous_actions else None

    def __call__(self, state: np.ndarray, rng: np.random.Generator):
        s = self.env.state_index(state)
        index = int(rng.choice(self.env.mdp.n_actions, p=self.table[s]))
        if self.continuous_actions:
            return self.env.encode_action(index)
        return index


class PointMassController:
    """Proportional-derivative controller a = clip(kp (goal - p) - kd v, -1, 1)."""

    def __init__(self, env: PointMassEnv, kp: float = 2.0, kd: float = 1.0):
        self.env = env
        self.kp = kp
        self.kd = kd
        self.action_dim = env.action_dim

    def __call__(self, state: np.ndarray, rng: np.random.Generator):
        position, velocity = state[:2], state[2:]
        return np.clip(self.kp * (self.env.goal - position) - self.kd * velocity, -1, 1)


class RandomPolicy:

    def __init__(self, action_dim: int):
        self.action_dim = action_dim

    def __call__(self, state: np.ndarray, rng: np.random.Generator):
        return rng.uniform(-1, 1, size=self.action_dim)


def make_expert(env):
    """
    Exact expert for a built-in environment: greedy policy from value iteration on the ground-truth reward
    for tabular environments, a PD controller for the point mass.
    """
    if isinstance(env, TabularEnv):
        result = value_iteration(env.mdp)
        return TabularPolicy(env, result.policy)
    if isinstance(env, PointMassEnv):
        return PointMassController(env)
    raise ValueError(f'No expert available for environment {getattr(env, "name", env)}')


def _checked_action(env, policy, state, rng, step: int):
    action = policy(state, rng)
    if isinstance(action, (int, np.integer)):
        if not env.is_tabular:
            raise ValueError(f'Integer action at step {step} but {env.name} has continuous actions')
        return int(action)
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (env.action_dim,):
        raise ValueError(f'Policy action at step {step} has shape {action.shape}, {env.name} expects ({env.action_dim},)')
    if not np.all(np.isfinite(action)):
        raise NonFiniteError(f'Non-finite action {action} from policy at step {step}')
    return action


def rollout(env, policy, rng_seed: int, n_steps: int) -> List[Transition]:
    """
    Run the policy for exactly n_steps environment steps, resetting after every `horizon` steps.
    The policy and the environment share one generator seeded with rng_seed.
    """
    policy_dim = getattr(policy, 'action_dim', None)
    if policy_dim is not None and policy_dim != env.action_dim:
        raise ValueError(f'Policy action dimension {policy_dim} does not match {env.name} ({env.action_dim})')
    if n_steps < 0:
        raise ValueError(f'n_steps must be non-negative, got {n_steps}')

    rng = np.random.default_rng(rng_seed)
    transitions = []
    state = env.reset(rng)
    episode_step = 0
    for step in range(n_steps):
        action = _checked_action(env, policy, state, rng, step)
        next_state = env.step(state, action, rng)
        episode_step += 1
        truncated = episode_step == env.horizon
        transitions.append(Transition(state=state, action=action, next_state=next_state, truncated=truncated))
        if truncated:
            state = env.reset(rng)
            episode_step = 0
        else:
            state = next_state
    return transitions


def collect_episode(env, policy, rng: np.random.Generator, keep_actions: bool = True, n_steps: int = None) -> Trajectory:
    """One episode of n_steps steps (the horizon by default) without resets: n_steps + 1 states and n_steps actions."""
    if n_steps is None:
        n_steps = env.horizon
    if n_steps < 1:
        raise ValueError(f'An episode needs at least one step, got {n_steps}')
    state = env.reset(rng)
    states = [state]
    actions = []
    for step in range(n_steps):
        action = _checked_action(env, policy, state, rng, step)
        state = env.step(state, action, rng)
        states.append(state)
        actions.append(np.atleast_1d(action).astype(np.float64))
    return Trajectory(states=np.array(states), actions=np.array(actions) if keep_actions else None)


def trajectory_return(env, trajectory: Trajectory) -> float:
    """Undiscounted ground-truth return, each reward collected on entering a state."""
    return float(sum(env.reward(s) for s in trajectory.states[1:]))
