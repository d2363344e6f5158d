import numpy as np

from sfmpy.mdp_core import TransitionBatch

BUFFER_CAPACITY = 100000
BATCH_SIZE = 256
SAMPLE_STREAMS = ['d', 'd_prime']


class ReplayBuffer:
    """
    Ring buffer of (state, action, next_state) transitions.

    Batches are drawn uniformly with replacement from one of two independent streams spawned from the
    seed: 'd' feeds the SF, actor and feature updates, 'd_prime' feeds the witness estimate.
    """

    def __init__(self, state_dim: int, action_dim: int, capacity: int = BUFFER_CAPACITY, seed=0):
        if capacity < 1:
            raise ValueError(f'Buffer capacity must be positive, got {capacity}')
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.size = 0
        self.position = 0

        sequence = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        d_sequence, d_prime_sequence = sequence.spawn(2)
        self.streams = {'d': np.random.default_rng(d_sequence), 'd_prime': np.random.default_rng(d_prime_sequence)}

    def __len__(self):
        return self.size

    def push(self, state, action, next_state):
        self.states[self.position] = state
        self.actions[self.position] = np.atleast_1d(action)
        self.next_states[self.position] = next_state
        self.position = (self.position + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, stream: str = 'd', rng: np.random.Generator = None) -> np.ndarray:
        if self.size == 0:
            raise ValueError('Cannot sample from an empty replay buffer')
        if rng is None:
            if stream not in SAMPLE_STREAMS:
                raise ValueError(f'Unknown sample stream: {stream}. Choose from {SAMPLE_STREAMS}')
            rng = self.streams[stream]
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, stream: str = 'd', rng: np.random.Generator = None) -> TransitionBatch:
        indices = self.sample_indices(batch_size, stream, rng)
        return TransitionBatch(states=self.states[indices], actions=self.actions[indices], next_states=self.next_states[indices])
