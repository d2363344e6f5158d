from dataclasses import dataclass

import numpy as np

PROBABILITY_TOLERANCE = 1e-12

GRIDWORLD_SIZE = 8
# right, left, up, down
GRID_MOVES = [(1, 0), (-1, 0), (0, 1), (0, -1)]


@dataclass
class TabularMDP:
    """
    Finite MDP used by every exact oracle.

    P has shape (n_states, n_actions, n_states), P0 shape (n_states,), Phi shape (n_states, d).
    reward is an optional ground-truth state reward used only for experts and reporting.
    """
    P: np.ndarray
    P0: np.ndarray
    gamma: float
    Phi: np.ndarray
    reward: np.ndarray = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.P0 = np.asarray(self.P0, dtype=np.float64)
        self.Phi = np.atleast_2d(np.asarray(self.Phi, dtype=np.float64))
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise ValueError(f'Transition tensor must have shape (S, A, S), got {self.P.shape}')
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1)) > PROBABILITY_TOLERANCE:
            raise ValueError('Every transition row must be a probability vector')
        if self.P0.shape != (self.n_states,):
            raise ValueError(f'P0 must have shape ({self.n_states},), got {self.P0.shape}')
        if np.any(self.P0 < 0) or abs(self.P0.sum() - 1) > PROBABILITY_TOLERANCE:
            raise ValueError('P0 must be a probability vector')
        if not 0 <= self.gamma < 1:
            raise ValueError(f'Discount must lie in [0, 1), got {self.gamma}')
        if self.Phi.shape[0] != self.n_states:
            raise ValueError(f'Feature table must have {self.n_states} rows, got {self.Phi.shape[0]}')
        if self.reward is not None:
            self.reward = np.asarray(self.reward, dtype=np.float64)
            if self.reward.shape != (self.n_states,):
                raise ValueError(f'Reward must have shape ({self.n_states},), got {self.reward.shape}')

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.Phi.shape[1]


def make_random_mdp(n_states: int, n_actions: int, d: int, gamma: float, rng: np.random.Generator) -> TabularMDP:
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    # renormalise so rows sum to one at full precision
    P = P / P.sum(axis=2, keepdims=True)
    P0 = rng.dirichlet(np.ones(n_states))
    P0 = P0 / P0.sum()
    Phi = rng.normal(size=(n_states, d))
    reward = rng.normal(size=n_states)
    return TabularMDP(P=P, P0=P0, gamma=gamma, Phi=Phi, reward=reward)


def make_chain_mdp(n_states: int = 4, gamma: float = 0.99) -> TabularMDP:
    """Actions: 0 steps left, 1 steps right. Starts in state 0; reward 1 in the last state."""
    P = np.zeros((n_states, 2, n_states))
    for s in range(n_states):
        P[s, 0, max(s - 1, 0)] = 1.0
        P[s, 1, min(s + 1, n_states - 1)] = 1.0
    P0 = np.zeros(n_states)
    P0[0] = 1.0
    reward = np.zeros(n_states)
    reward[-1] = 1.0
    return TabularMDP(P=P, P0=P0, gamma=gamma, Phi=np.eye(n_states), reward=reward)


def gridworld_state_index(x: int, y: int, size: int = GRIDWORLD_SIZE) -> int:
    return y * size + x


def make_gridworld_mdp(size: int = GRIDWORLD_SIZE, gamma: float = 0.99) -> TabularMDP:
    """
    size x size grid with deterministic moves (bumping into a wall leaves the agent in place).
    Start in the (0, 0) corner, reward 1 in the opposite corner.
    """
    n_states = size * size
    P = np.zeros((n_states, len(GRID_MOVES), n_states))
    for y in range(size):
        for x in range(size):
            s = gridworld_state_index(x, y, size)
            for a, (dx, dy) in enumerate(GRID_MOVES):
                nx = min(max(x + dx, 0), size - 1)
                ny = min(max(y + dy, 0), size - 1)
                P[s, a, gridworld_state_index(nx, ny, size)] = 1.0
    P0 = np.zeros(n_states)
    P0[gridworld_state_index(0, 0, size)] = 1.0
    reward = np.zeros(n_states)
    reward[gridworld_state_index(size - 1, size - 1, size)] = 1.0
    return TabularMDP(P=P, P0=P0, gamma=gamma, Phi=np.eye(n_states), reward=reward)


def gridworld_embedding(size: int = GRIDWORLD_SIZE) -> np.ndarray:
    """(x, y) of every state scaled to [-1, 1]^2."""
    coords = np.zeros((size * size, 2))
    for y in range(size):
        for x in range(size):
            coords[gridworld_state_index(x, y, size)] = [2 * x / (size - 1) - 1, 2 * y / (size - 1) - 1]
    return coords
