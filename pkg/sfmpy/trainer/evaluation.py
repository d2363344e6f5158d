from typing import List, Tuple

import numpy as np

from sfmpy.mdp_core import RandomPolicy, make_expert, collect_episode, trajectory_return
from sfmpy.policy_opt import ActorPolicy


def _as_policy(actor_or_policy):
    if hasattr(actor_or_policy, 'act'):
        return ActorPolicy(actor_or_policy, 'deterministic')
    return actor_or_policy


def episode_returns(actor_or_policy, env, n_episodes: int, seed: int) -> List[float]:
    """Ground-truth returns of n_episodes full episodes; actors act in deterministic mode."""
    if n_episodes < 1:
        raise ValueError(f'Need at least one evaluation episode, got {n_episodes}')
    policy = _as_policy(actor_or_policy)
    rng = np.random.default_rng(seed)
    return [trajectory_return(env, collect_episode(env, policy, rng, keep_actions=False)) for _ in range(n_episodes)]


def reference_returns(env, n_episodes: int, seed: int) -> Tuple[float, float]:
    """(random_return, expert_return), the two anchors of the normalised return."""
    random_return = float(np.mean(episode_returns(RandomPolicy(env.action_dim), env, n_episodes, seed)))
    expert_return = float(np.mean(episode_returns(make_expert(env), env, n_episodes, seed)))
    return random_return, expert_return


def normalized_return(value: float, random_return: float, expert_return: float) -> float:
    if expert_return == random_return:
        raise ValueError(f'Expert and random returns coincide ({expert_return}), cannot normalise')
    return (value - random_return) / (expert_return - random_return)


def evaluate(actor_or_policy, env, n_episodes: int, seed: int, random_return: float = None,
             expert_return: float = None) -> Tuple[float, float]:
    """
    :return: (mean_return, normalized_return); reference returns are computed with the same seed
     when not given
    """
    mean_return = float(np.mean(episode_returns(actor_or_policy, env, n_episodes, seed)))
    if random_return is None or expert_return is None:
        random_return, expert_return = reference_returns(env, n_episodes, seed)
    return mean_return, normalized_return(mean_return, random_return, expert_return)
