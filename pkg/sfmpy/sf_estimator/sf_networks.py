from typing import Callable, Tuple

import numpy as np

from sfmpy.function_approx import Mlp, AdamState, adam_step, make_target, NonFiniteError, mlp_record, vector_record, write_checkpoint
from sfmpy.mdp_core import TransitionBatch

SF_MODES = ['td7', 'td3']
INPUT_ENCODINGS = ['concat', 'outer']

CLIP_BOUND_INIT = 1e18
TARGET_NOISE = 0.2
TARGET_NOISE_CLIP = 0.5
UPDATE_INTERVAL = 250
SF_POLYAK = 0.995


def sf_network(input_dim: int, d: int, hidden: int, mode: str, seed: int) -> Mlp:
    if mode == 'td7':
        return Mlp([input_dim, hidden, hidden, hidden, d], ['avgl1norm', 'elu', 'elu', 'identity'], rng_seed=seed)
    if mode == 'td3':
        return Mlp([input_dim, hidden, hidden, d], ['relu', 'relu', 'identity'], rng_seed=seed)
    raise ValueError(f'Unknown SF mode: {mode}. Choose from {SF_MODES}')


class SfNet:
    """
    Twin successor-feature estimators psi_1, psi_2 of (state, action) with delayed target copies and running
    elementwise clip bounds for the bootstrapped value.

    td7 mode refreshes the targets by hard copy every `update_interval` updates; td3 mode uses polyak averaging.
    The 'outer' input encoding feeds the Kronecker product of state and action vectors.
    """

    def __init__(self, state_dim: int, action_dim: int, d: int, hidden: int = 64, mode: str = 'td7', seed: int = 0,
                 learning_rate: float = 5e-4, update_interval: int = UPDATE_INTERVAL, polyak: float = SF_POLYAK,
                 input_encoding: str = 'concat', psi1: Mlp = None, psi2: Mlp = None):
        if mode not in SF_MODES:
            raise ValueError(f'Unknown SF mode: {mode}. Choose from {SF_MODES}')
        if input_encoding not in INPUT_ENCODINGS:
            raise ValueError(f'Unknown input encoding: {input_encoding}')
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.d = d
        self.mode = mode
        self.input_encoding = input_encoding

        input_dim = state_dim + action_dim if input_encoding == 'concat' else state_dim * action_dim
        self.psi1 = psi1 if psi1 is not None else sf_network(input_dim, d, hidden, mode, seed)
        self.psi2 = psi2 if psi2 is not None else sf_network(input_dim, d, hidden, mode, seed + 1)
        for net in [self.psi1, self.psi2]:
            if net.input_dim != input_dim or net.output_dim != d:
                raise ValueError(f'SF networks must map {input_dim} inputs to {d} outputs')

        target_mode = 'hard' if mode == 'td7' else 'polyak'
        self.targets1 = make_target(self.psi1.params, target_mode, interval=update_interval, alpha=polyak)
        self.targets2 = make_target(self.psi2.params, target_mode, interval=update_interval, alpha=polyak)
        self.clip_low = np.full(d, -CLIP_BOUND_INIT)
        self.clip_high = np.full(d, CLIP_BOUND_INIT)
        self.clip_defined = False
        self.adam1 = AdamState(learning_rate=learning_rate)
        self.adam2 = AdamState(learning_rate=learning_rate)

    @property
    def update_interval(self) -> int:
        return self.targets1.interval

    def encode(self, states, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if states.shape[1] != self.state_dim or actions.shape[1] != self.action_dim:
            raise ValueError(f'Expected states of dimension {self.state_dim} and actions of dimension {self.action_dim}, '
                             f'got {states.shape} and {actions.shape}')
        if self.input_encoding == 'concat':
            return np.concatenate([states, actions], axis=1)
        return np.einsum('bi,bj->bij', states, actions).reshape(len(states), -1)

    def action_grad_from_input_grad(self, states, input_grad: np.ndarray) -> np.ndarray:
        if self.input_encoding == 'concat':
            return input_grad[:, self.state_dim:]
        states = np.atleast_2d(states)
        return np.einsum('bi,bij->bj', states, input_grad.reshape(len(states), self.state_dim, self.action_dim))

    def predict(self, states, actions, which: str = 'mean', target: bool = False) -> np.ndarray:
        single = np.ndim(states) == 1
        x = self.encode(states, actions)
        params1 = self.targets1.params if target else None
        params2 = self.targets2.params if target else None
        if which == 'one':
            out = self.psi1.forward(x, params1)
        elif which == 'two':
            out = self.psi2.forward(x, params2)
        elif which == 'mean':
            out = 0.5 * (self.psi1.forward(x, params1) + self.psi2.forward(x, params2))
        else:
            raise ValueError(f'Unknown twin selector: {which}')
        return out[0] if single else out


def tabular_sf_net(n_states: int, n_actions: int, d: int, table: np.ndarray = None, **kwargs) -> SfNet:
    """
    SfNet whose twins are a single linear layer on the 'outer' encoding. With one-hot states and actions,
    row s * n_actions + a of `table` (zeros by default) is exactly psi(s, a).
    """
    if table is None:
        table = np.zeros((n_states * n_actions, d))
    table = np.asarray(table, dtype=np.float64)
    if table.shape != (n_states * n_actions, d):
        raise ValueError(f'SF table must have shape ({n_states * n_actions}, {d}), got {table.shape}')
    params = np.concatenate([table.ravel(), np.zeros(d)])
    psi1 = Mlp([n_states * n_actions, d], ['identity'], params=params)
    psi2 = Mlp([n_states * n_actions, d], ['identity'], params=params)
    return SfNet(n_states, n_actions, d, input_encoding='outer', psi1=psi1, psi2=psi2, **kwargs)


def sf_predict(net: SfNet, state, action, which: str = 'mean') -> np.ndarray:
    return net.predict(state, action, which)


def smoothed_next_actions(action_fn: Callable[[np.ndarray], np.ndarray], states: np.ndarray, rng: np.random.Generator,
                          noise: float = TARGET_NOISE, noise_clip: float = TARGET_NOISE_CLIP) -> np.ndarray:
    """Target-policy smoothing: a' = clip(pi(s') + clip(N(0, noise^2), -noise_clip, noise_clip), -1, 1)."""
    actions = np.atleast_2d(action_fn(states))
    smoothing = np.clip(rng.normal(scale=noise, size=actions.shape), -noise_clip, noise_clip)
    return np.clip(actions + smoothing, -1, 1)


def sf_td_target(net: SfNet, phi_states: np.ndarray, next_states: np.ndarray, next_actions: np.ndarray, gamma: float) -> np.ndarray:
    """phi(s) + gamma * mean of the target twins at (s', a'), clipped to [clip_low, clip_high] in td7 mode."""
    bootstrap = net.predict(next_states, next_actions, 'mean', target=True)
    if net.mode == 'td7':
        bootstrap = np.clip(bootstrap, net.clip_low, net.clip_high)
    target = phi_states + gamma * bootstrap
    bad_rows = np.where(~np.all(np.isfinite(target), axis=1))[0]
    if len(bad_rows) > 0:
        raise NonFiniteError(f'Non-finite SF target for transition {int(bad_rows[0])} of the batch')
    return target


def sf_td_update(net: SfNet, feature_fn: Callable[[np.ndarray], np.ndarray], policy: Callable, batch: TransitionBatch, gamma: float,
                 rng: np.random.Generator = None) -> Tuple[float, SfNet]:
    """
    One least-squares TD step for both twins.

    :param net: SfNet, updated in place
    :param feature_fn: maps a state batch to base features
    :param policy: next-action sampler, called as policy(next_states, rng)
    :param batch: TransitionBatch with actions
    :param gamma: discount
    :param rng: generator passed to the next-action sampler
    :return: (mean of the twin losses, net)
    """
    if len(batch) == 0:
        raise ValueError('SF update needs a non-empty batch')
    if not batch.has_actions:
        raise ValueError('actions required: SF updates need the behaviour actions')

    phi_states = np.atleast_2d(feature_fn(batch.states))
    next_actions = np.atleast_2d(policy(batch.next_states, rng))
    target = sf_td_target(net, phi_states, batch.next_states, next_actions, gamma)

    x = net.encode(batch.states, batch.actions)
    losses = []
    for psi, adam_name in [(net.psi1, 'adam1'), (net.psi2, 'adam2')]:
        prediction, cache = psi.forward_with_cache(x)
        error = prediction - target
        losses.append(float(np.mean(np.sum(error * error, axis=1))))
        grad, _ = psi.backward(x, 2 * error / len(x), cache=cache)
        psi.params, state = adam_step(getattr(net, adam_name), psi.params, grad)
        setattr(net, adam_name, state)

    # the first batch replaces the infinite surrogates, later batches only widen
    if net.clip_defined:
        net.clip_low = np.minimum(net.clip_low, target.min(axis=0))
        net.clip_high = np.maximum(net.clip_high, target.max(axis=0))
    else:
        net.clip_low, net.clip_high = target.min(axis=0), target.max(axis=0)
        net.clip_defined = True
    net.targets1.update(net.psi1.params)
    net.targets2.update(net.psi2.params)
    return 0.5 * (losses[0] + losses[1]), net


def sf_action_vjp(net: SfNet, states: np.ndarray, actions: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Rows of w^T d psi_mean(s, a) / da for a batch, shape (B, action_dim)."""
    x = net.encode(states, actions)
    upstream = np.tile(0.5 * np.asarray(w, dtype=np.float64), (len(x), 1))
    _, input_grad1 = net.psi1.backward(x, upstream)
    _, input_grad2 = net.psi2.backward(x, upstream)
    return net.action_grad_from_input_grad(states, input_grad1 + input_grad2)


def sf_action_grad(net: SfNet, state: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Jacobian of the mean twin output w.r.t. the action, shape (d, action_dim)."""
    state = np.atleast_2d(state)
    action = np.atleast_2d(action)
    return np.array([sf_action_vjp(net, state, action, np.eye(net.d)[i])[0] for i in range(net.d)])


def save_sf_checkpoint(path: str, net: SfNet):
    write_checkpoint(path, [mlp_record(f'sf.psi1:{net.mode}', net.psi1),
                            mlp_record(f'sf.psi2:{net.mode}', net.psi2),
                            vector_record('sf.bounds', np.concatenate([net.clip_low, net.clip_high]))])
