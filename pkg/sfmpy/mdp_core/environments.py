import numpy as np

from sfmpy.mdp_core.tabular_mdps import TabularMDP, make_gridworld_mdp, make_chain_mdp, gridworld_embedding, GRID_MOVES, GRIDWORLD_SIZE

ENVIRONMENT_NAMES = ['gridworld', 'pointmass', 'chain']

MAX_HORIZON = 200


class TabularEnv:
    """
    A TabularMDP presented with continuous states and actions.

    States are rows of `embedding`. Actions are either integer indices or continuous codes in
    [-1, 1]^action_dim: 'grid' decoding picks the move along the dominant axis of a 2-D code,
    'bins' decoding splits the first component into n_actions equal-width bins.
    """
    is_tabular = True

    def __init__(self, name: str, mdp: TabularMDP, embedding: np.ndarray = None, horizon: int = 50, action_decoding: str = 'bins'):
        if embedding is None:
            embedding = np.eye(mdp.n_states)
        embedding = np.asarray(embedding, dtype=np.float64)
        if embedding.shape[0] != mdp.n_states:
            raise ValueError(f'Embedding must have one row per state, got {embedding.shape[0]} rows for {mdp.n_states} states')
        if not 1 <= horizon <= MAX_HORIZON:
            raise ValueError(f'Horizon must lie in [1, {MAX_HORIZON}], got {horizon}')
        if action_decoding not in ['grid', 'bins']:
            raise ValueError(f'Unknown action decoding: {action_decoding}')
        if action_decoding == 'grid' and mdp.n_actions != len(GRID_MOVES):
            raise ValueError('Grid action decoding needs exactly four actions')
        self.name = name
        self.mdp = mdp
        self.embedding = embedding
        self.horizon = horizon
        self.action_decoding = action_decoding

    @property
    def state_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def action_dim(self) -> int:
        return 2 if self.action_decoding == 'grid' else 1

    def state_index(self, state: np.ndarray) -> int:
        distances = np.sum((self.embedding - np.asarray(state, dtype=np.float64)) ** 2, axis=1)
        return int(np.argmin(distances))

    def decode_action(self, action) -> int:
        if np.ndim(action) == 0:
            index = int(action)
            if not 0 <= index < self.mdp.n_actions:
                raise ValueError(f'Action index {index} out of range for {self.mdp.n_actions} actions')
            return index
        action = np.clip(np.asarray(action, dtype=np.float64), -1, 1)
        if self.action_decoding == 'grid':
            if abs(action[0]) >= abs(action[1]):
                return 0 if action[0] >= 0 else 1
            return 2 if action[1] >= 0 else 3
        return min(int(np.floor((action[0] + 1) / 2 * self.mdp.n_actions)), self.mdp.n_actions - 1)

    def encode_action(self, index: int) -> np.ndarray:
        if self.action_decoding == 'grid':
            return np.array(GRID_MOVES[index], dtype=np.float64)
        return np.array([-1 + (2 * index + 1) / self.mdp.n_actions])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        s = int(rng.choice(self.mdp.n_states, p=self.mdp.P0))
        return self.embedding[s].copy()

    def step(self, state: np.ndarray, action, rng: np.random.Generator) -> np.ndarray:
        s = self.state_index(state)
        a = self.decode_action(action)
        next_s = int(rng.choice(self.mdp.n_states, p=self.mdp.P[s, a]))
        return self.embedding[next_s].copy()

    def reward(self, state: np.ndarray) -> float:
        if self.mdp.reward is None:
            raise ValueError(f'Environment {self.name} has no ground-truth reward')
        return float(self.mdp.reward[self.state_index(state)])


class PointMassEnv:
    """
    2-D point mass with velocity: state (x, y, vx, vy), action (ax, ay) clipped to [-1, 1].

    v' = damping * v + dt * a, p' = clip(p + dt * v', -1, 1), plus optional Gaussian position noise.
    Ground-truth reward of a state is minus its distance to the goal.
    """
    is_tabular = False
    state_dim = 4
    action_dim = 2

    def __init__(self, start=(0.8, -0.6), goal=(0.0, 0.0), horizon: int = 100, noise_std: float = 0.0,
                 start_noise: float = 0.0, damping: float = 0.9, dt: float = 0.1):
        if not 1 <= horizon <= MAX_HORIZON:
            raise ValueError(f'Horizon must lie in [1, {MAX_HORIZON}], got {horizon}')
        if noise_std < 0 or start_noise < 0:
            raise ValueError('Noise scales must be non-negative')
        self.name = 'pointmass'
        self.start = np.asarray(start, dtype=np.float64)
        self.goal = np.asarray(goal, dtype=np.float64)
        self.horizon = horizon
        self.noise_std = noise_std
        self.start_noise = start_noise
        self.damping = damping
        self.dt = dt

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        position = self.start.copy()
        if self.start_noise > 0:
            position = np.clip(position + rng.uniform(-self.start_noise, self.start_noise, size=2), -1, 1)
        return np.concatenate([position, np.zeros(2)])

    def step(self, state: np.ndarray, action, rng: np.random.Generator) -> np.ndarray:
        action = np.clip(np.asarray(action, dtype=np.float64), -1, 1)
        position, velocity = state[:2], state[2:]
        velocity = self.damping * velocity + self.dt * action
        position = position + self.dt * velocity
        if self.noise_std > 0:
            position = position + rng.normal(scale=self.noise_std, size=2)
        position = np.clip(position, -1, 1)
        return np.concatenate([position, velocity])

    def reward(self, state: np.ndarray) -> float:
        return -float(np.linalg.norm(np.asarray(state)[:2] - self.goal))


# a horizon near 1/(1 - gamma) keeps uniform replay sampling close to the discounted weighting of the expert SF
def make_gridworld_env(size: int = GRIDWORLD_SIZE, gamma: float = 0.99, horizon: int = 100) -> TabularEnv:
    return TabularEnv('gridworld', make_gridworld_mdp(size, gamma), embedding=gridworld_embedding(size), horizon=horizon,
                      action_decoding='grid')


def make_chain_env(n_states: int = 4, gamma: float = 0.99, horizon: int = 20) -> TabularEnv:
    return TabularEnv('chain', make_chain_mdp(n_states, gamma), horizon=horizon, action_decoding='bins')


def make_environment(name: str, gamma: float = 0.99, noise_std: float = 0.0, **kwargs):
    """Built-in environment by name; noise_std is the point mass position noise and must stay 0 for tabular ones."""
    if noise_std != 0 and name != 'pointmass':
        raise ValueError(f'Only the point mass takes position noise, got noise_std={noise_std} for {name}')
    if name == 'gridworld':
        return make_gridworld_env(gamma=gamma, **kwargs)
    if name == 'chain':
        return make_chain_env(gamma=gamma, **kwargs)
    if name == 'pointmass':
        return PointMassEnv(noise_std=noise_std, **kwargs)
    raise ValueError(f'Unknown environment: {name}. Choose from {ENVIRONMENT_NAMES}')
