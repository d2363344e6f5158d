import numpy as np
from scipy.special import expit

from sfmpy.function_approx import Mlp, AdamState, NonFiniteError, check_finite, mlp_record, vector_record, write_checkpoint, \
    read_checkpoint, records_by_tag, record_to_mlp

ACTOR_KINDS = ['deterministic', 'gaussian']
ACT_MODES = ['deterministic', 'explore']

EXPLORATION_NOISE = 0.1
ENTROPY_COEFF = 1e-3
STD_FLOOR = 1e-4
ACTOR_FINAL_LAYER_SCALE = 0.1


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def softplus_grad(z: np.ndarray) -> np.ndarray:
    return expit(z)


def gaussian_entropy(std: np.ndarray) -> np.ndarray:
    """Entropy of a diagonal Gaussian, sum_i (0.5 log(2 pi e) + log std_i), one value per row."""
    std = np.atleast_2d(std)
    return np.sum(0.5 * np.log(2 * np.pi * np.e) + np.log(std), axis=1)


def _check_mode(mode: str, rng):
    if mode not in ACT_MODES:
        raise ValueError(f'Unknown action mode: {mode}. Choose from {ACT_MODES}')
    if mode == 'explore' and rng is None:
        raise ValueError('Exploration needs a random generator')


class DeterministicActor:
    """pi(s) = tanh(net(s)); exploration adds N(0, sigma^2) noise and clips to [-1, 1]."""
    kind = 'deterministic'

    def __init__(self, state_dim: int, action_dim: int, hidden: int = 64, seed: int = 0, learning_rate: float = 5e-4,
                 exploration_noise_sigma: float = EXPLORATION_NOISE, net: Mlp = None):
        if net is None:
            net = Mlp([state_dim, hidden, hidden, action_dim], ['relu', 'relu', 'tanh'], rng_seed=seed,
                      final_layer_scale=ACTOR_FINAL_LAYER_SCALE)
        if net.input_dim != state_dim or net.output_dim != action_dim:
            raise ValueError(f'Actor network must map {state_dim} inputs to {action_dim} outputs')
        if exploration_noise_sigma < 0:
            raise ValueError(f'Exploration noise must be non-negative, got {exploration_noise_sigma}')
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.net = net
        self.exploration_noise_sigma = exploration_noise_sigma
        self.adam = AdamState(learning_rate=learning_rate)

    @property
    def params(self) -> np.ndarray:
        return self.net.params

    @params.setter
    def params(self, values: np.ndarray):
        self.net.params = np.asarray(values, dtype=np.float64)

    def actions(self, states, rng: np.random.Generator = None) -> np.ndarray:
        return self.net.forward(np.atleast_2d(states))

    def sample_actions(self, states, rng: np.random.Generator = None) -> np.ndarray:
        return self.actions(states)

    def act(self, state, mode: str = 'deterministic', rng: np.random.Generator = None) -> np.ndarray:
        _check_mode(mode, rng)
        action = self.net.forward(state)
        if mode == 'explore':
            action = np.clip(action + rng.normal(scale=self.exploration_noise_sigma, size=action.shape), -1, 1)
        check_finite(action, 'actor action')
        return action


class GaussianActor:
    """
    Diagonal Gaussian policy with reparameterised samples h(s, eps) = m(s) + sigma(s) * eps.

    The mean head ends in tanh; sigma = softplus(std_head(s)) + 1e-4, or the constant fixed_std when set.
    """
    kind = 'gaussian'

    def __init__(self, state_dim: int, action_dim: int, hidden: int = 64, seed: int = 0, learning_rate: float = 5e-4,
                 entropy_coeff: float = ENTROPY_COEFF, fixed_std: float = None, mean_head: Mlp = None, std_head: Mlp = None):
        if mean_head is None:
            mean_head = Mlp([state_dim, hidden, hidden, action_dim], ['relu', 'relu', 'tanh'], rng_seed=seed,
                            final_layer_scale=ACTOR_FINAL_LAYER_SCALE)
        if std_head is None:
            std_head = Mlp([state_dim, hidden, hidden, action_dim], ['relu', 'relu', 'identity'], rng_seed=seed + 1,
                           final_layer_scale=ACTOR_FINAL_LAYER_SCALE)
        for head in [mean_head, std_head]:
            if head.input_dim != state_dim or head.output_dim != action_dim:
                raise ValueError(f'Actor heads must map {state_dim} inputs to {action_dim} outputs')
        if entropy_coeff < 0:
            raise ValueError(f'Entropy coefficient must be non-negative, got {entropy_coeff}')
        if fixed_std is not None and not fixed_std > 0:
            raise ValueError(f'A fixed std must be positive, got {fixed_std}')
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.mean_head = mean_head
        self.std_head = std_head
        self.entropy_coeff = entropy_coeff
        self.fixed_std = fixed_std
        self.adam = AdamState(learning_rate=learning_rate)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.mean_head.params, self.std_head.params])

    @params.setter
    def params(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        n_mean = self.mean_head.n_params
        self.mean_head.params = values[:n_mean].copy()
        self.std_head.params = values[n_mean:].copy()

    def mean(self, states) -> np.ndarray:
        return self.mean_head.forward(states)

    def std(self, states) -> np.ndarray:
        if self.fixed_std is not None:
            return np.full(np.shape(self.mean(states)), self.fixed_std)
        std = softplus(self.std_head.forward(states)) + STD_FLOOR
        if not np.all(np.isfinite(std)):
            raise NonFiniteError('Non-finite policy std')
        if np.any(std <= 0):
            raise ValueError('Policy std underflow: std must stay strictly positive')
        return std

    def entropy(self, states) -> np.ndarray:
        return gaussian_entropy(self.std(np.atleast_2d(states)))

    def actions(self, states, rng: np.random.Generator = None) -> np.ndarray:
        return self.mean(np.atleast_2d(states))

    def sample_actions(self, states, rng: np.random.Generator) -> np.ndarray:
        states = np.atleast_2d(states)
        noise = rng.standard_normal(size=(len(states), self.action_dim))
        return np.clip(self.mean(states) + self.std(states) * noise, -1, 1)

    def act(self, state, mode: str = 'deterministic', rng: np.random.Generator = None, noise: np.ndarray = None) -> np.ndarray:
        """
        Deterministic mode returns the mean. Explore mode returns h(s, eps) clipped to [-1, 1], with eps
        drawn from rng unless given.
        """
        if noise is None:
            _check_mode(mode, rng)
        elif mode not in ACT_MODES:
            raise ValueError(f'Unknown action mode: {mode}. Choose from {ACT_MODES}')
        action = self.mean(state)
        if mode == 'explore':
            if noise is None:
                noise = rng.standard_normal(size=np.shape(action))
            action = np.clip(action + self.std(state) * noise, -1, 1)
        check_finite(action, 'actor action')
        return action


def make_actor(kind: str, state_dim: int, action_dim: int, hidden: int = 64, seed: int = 0, learning_rate: float = 5e-4,
               exploration_noise: float = EXPLORATION_NOISE, entropy_coeff: float = ENTROPY_COEFF):
    if kind == 'deterministic':
        return DeterministicActor(state_dim, action_dim, hidden=hidden, seed=seed, learning_rate=learning_rate,
                                  exploration_noise_sigma=exploration_noise)
    if kind == 'gaussian':
        return GaussianActor(state_dim, action_dim, hidden=hidden, seed=seed, learning_rate=learning_rate, entropy_coeff=entropy_coeff)
    raise ValueError(f'Unknown actor kind: {kind}. Choose from {ACTOR_KINDS}')


def act(actor, state, mode: str = 'deterministic', rng: np.random.Generator = None) -> np.ndarray:
    return actor.act(state, mode, rng)


class ActorPolicy:
    """Adapts an actor to the (state, rng) policy interface used by rollouts."""

    def __init__(self, actor, mode: str = 'deterministic'):
        if mode not in ACT_MODES:
            raise ValueError(f'Unknown action mode: {mode}. Choose from {ACT_MODES}')
        self.actor = actor
        self.mode = mode
        self.action_dim = actor.action_dim

    def __call__(self, state: np.ndarray, rng: np.random.Generator):
        return self.actor.act(state, self.mode, rng)


def save_actor_checkpoint(path: str, actor):
    if isinstance(actor, DeterministicActor):
        records = [mlp_record('actor.net:deterministic', actor.net),
                   vector_record('actor.noise', [actor.exploration_noise_sigma])]
    elif isinstance(actor, GaussianActor):
        records = [mlp_record('actor.mean:gaussian', actor.mean_head),
                   mlp_record('actor.std:gaussian', actor.std_head),
                   vector_record('actor.entropy', [actor.entropy_coeff, 0.0 if actor.fixed_std is None else actor.fixed_std])]
    else:
        raise ValueError(f'Cannot checkpoint actor of type {type(actor).__name__}')
    write_checkpoint(path, records)


def load_actor_checkpoint(path: str):
    records = records_by_tag(read_checkpoint(path))
    if 'actor.net:deterministic' in records:
        net = record_to_mlp(records['actor.net:deterministic'])
        noise = float(records['actor.noise'].values[0]) if 'actor.noise' in records else EXPLORATION_NOISE
        return DeterministicActor(net.input_dim, net.output_dim, net=net, exploration_noise_sigma=noise)
    if 'actor.mean:gaussian' in records:
        mean_head = record_to_mlp(records['actor.mean:gaussian'])
        std_head = record_to_mlp(records['actor.std:gaussian'])
        entropy_coeff, fixed_std = ENTROPY_COEFF, None
        if 'actor.entropy' in records:
            entropy_coeff, stored_std = [float(v) for v in records['actor.entropy'].values]
            fixed_std = stored_std if stored_std > 0 else None
        return GaussianActor(mean_head.input_dim, mean_head.output_dim, entropy_coeff=entropy_coeff, fixed_std=fixed_std,
                             mean_head=mean_head, std_head=std_head)
    raise ValueError(f'{path} does not hold an actor checkpoint')
