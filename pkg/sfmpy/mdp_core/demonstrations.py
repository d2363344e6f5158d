import json
import os
from dataclasses import dataclass
from typing import List

import numpy as np

from sfmpy.mdp_core.rollouts import Trajectory, make_expert, collect_episode

DEMO_LENGTH = 1000
TAIL_MASS_WARNING = 0.05


@dataclass
class DemonstrationSet:
    env: str
    gamma: float
    trajectories: List[Trajectory]

    @property
    def state_only(self) -> bool:
        return not all(t.has_actions for t in self.trajectories)


def generate_expert_demonstrations(env, n_demos: int, seed: int = 0, state_only: bool = False, length: int = None) -> List[Trajectory]:
    """
    Expert episodes of `length` steps each, the environment horizon by default. Training uses
    DEMO_LENGTH so that the discounted feature sum of a demonstration covers the effective horizon.
    """
    if n_demos < 1:
        raise ValueError(f'Need at least one demonstration, got {n_demos}')
    expert = make_expert(env)
    rng = np.random.default_rng(seed)
    return [collect_episode(env, expert, rng, keep_actions=not state_only, n_steps=length) for _ in range(n_demos)]


def discounted_tail_mass(trajectories: List[Trajectory], gamma: float) -> float:
    """gamma^T for the shortest demonstration of T states: the share of the discounted sum it leaves out."""
    return float(gamma ** min(len(t.states) for t in trajectories))


def save_demonstrations(path: str, env_name: str, gamma: float, trajectories: List[Trajectory]):
    """
    Write demonstrations as {"env", "gamma", "trajectories": [{"states", "actions"}]}, actions null when
    the trajectory is state-only.
    """
    content = {'env': env_name,
               'gamma': float(gamma),
               'trajectories': [{'states': t.states.tolist(),
                                 'actions': t.actions.tolist() if t.has_actions else None}
                                for t in trajectories]}
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf8') as f:
        json.dump(content, f)


def load_demonstrations(path: str) -> DemonstrationSet:
    with open(path, 'r', encoding='utf8') as f:
        content = json.load(f)
    for key in ['env', 'gamma', 'trajectories']:
        if key not in content:
            raise ValueError(f'Demonstration file {path} is missing "{key}"')
    trajectories = []
    for i, t in enumerate(content['trajectories']):
        if len(t['states']) == 0:
            raise ValueError(f'Trajectory {i} in {path} has no states')
        trajectories.append(Trajectory(states=np.array(t['states'], dtype=np.float64),
                                       actions=None if t.get('actions') is None else np.array(t['actions'], dtype=np.float64)))
    if len(trajectories) == 0:
        raise ValueError(f'Demonstration file {path} holds no trajectories')
    return DemonstrationSet(env=content['env'], gamma=float(content['gamma']), trajectories=trajectories)


def check_demonstrations_match_env(demos: DemonstrationSet, env):
    if demos.env != env.name:
        raise ValueError(f'Demonstrations were recorded on {demos.env}, not {env.name}')
    for i, t in enumerate(demos.trajectories):
        if t.states.shape[1] != env.state_dim:
            raise ValueError(f'Trajectory {i} has state dimension {t.states.shape[1]}, {env.name} has {env.state_dim}')
