import hashlib
from typing import Dict, Tuple

import numpy as np

from sfmpy.function_approx import Mlp, AdamState, adam_step, make_target, check_finite, mlp_record, write_checkpoint
from sfmpy.mdp_core import TransitionBatch

FEATURE_KINDS = ['random', 'ae', 'idm', 'fdm', 'hilbert', 'adversarial']

### Defaults for the learners
DEFAULT_FEATURE_DIM = 32
HILBERT_EXPECTILE = 0.9
HILBERT_POLYAK = 0.995
ADVERSARIAL_LR_SCALE = 0.2
_SAME_STATE_TOLERANCE = 1e-9
_DISTANCE_FLOOR = 1e-12


def expectile_loss(u: np.ndarray, tau: float) -> np.ndarray:
    """Asymmetric squared loss |tau - 1(u < 0)| u^2."""
    u = np.asarray(u, dtype=np.float64)
    return np.abs(tau - (u < 0)) * u * u


def expectile_loss_grad(u: np.ndarray, tau: float) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return 2 * np.abs(tau - (u < 0)) * u


def phi_network(state_dim: int, d: int, hidden: int, seed: int) -> Mlp:
    return Mlp([state_dim, hidden, hidden, d], ['layernorm-tanh', 'relu', 'l2norm'], rng_seed=seed)


def _aux_network(kind: str, state_dim: int, action_dim: int, d: int, hidden: int, seed: int):
    if kind == 'ae':
        return Mlp([d, hidden, state_dim], ['relu', 'identity'], rng_seed=seed)
    if kind == 'idm':
        return Mlp([2 * d, hidden, action_dim], ['relu', 'tanh'], rng_seed=seed)
    if kind == 'fdm':
        return Mlp([d + action_dim, hidden, hidden, state_dim], ['relu', 'relu', 'identity'], rng_seed=seed)
    return None


class FeatureLearner:
    """
    A base feature map phi together with the auxiliary head and loss that train it.

    Every kind exposes the same `update` call so the trainer never branches on the kind.
    """

    def __init__(self, kind: str, phi: Mlp, aux: Mlp = None, learning_rate: float = 5e-4, gamma: float = 0.99,
                 expectile: float = HILBERT_EXPECTILE, polyak: float = HILBERT_POLYAK, adversarial_lr_scale: float = ADVERSARIAL_LR_SCALE):
        if kind not in FEATURE_KINDS:
            raise ValueError(f'Unknown feature kind: {kind}. Choose from {FEATURE_KINDS}')
        if kind in ['ae', 'idm', 'fdm'] and aux is None:
            raise ValueError(f'Feature kind {kind} needs an auxiliary network')
        self.kind = kind
        self.phi = phi
        self.aux = aux
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.expectile = expectile
        self.adversarial_lr_scale = adversarial_lr_scale
        self.phi_target = make_target(phi.params, 'polyak', alpha=polyak) if kind == 'hilbert' else None
        self.phi_adam = AdamState(learning_rate=learning_rate)
        self.aux_adam = AdamState(learning_rate=learning_rate)

    @property
    def d(self) -> int:
        return self.phi.output_dim

    def features(self, states) -> np.ndarray:
        return self.phi.forward(states)

    def loss_and_grad(self, batch: TransitionBatch, expert_states: np.ndarray = None, rng: np.random.Generator = None):
        return feature_loss_and_grad(self, batch, expert_states, rng)

    def update(self, batch: TransitionBatch, expert_states: np.ndarray = None, rng: np.random.Generator = None,
               progress: float = 0.0) -> float:
        """
        One training step on the batch.

        :param batch: agent transitions
        :param expert_states: demonstration states, used by the adversarial kind
        :param rng: generator for hilbert goal sampling
        :param progress: fraction of the run completed, drives the adversarial learning-rate decay
        :return: the loss before the step
        """
        if self.kind == 'random':
            return 0.0
        if self.kind == 'adversarial':
            learning_rate = self.learning_rate * self.adversarial_lr_scale * max(0.0, 1.0 - progress)
            loss, _ = feature_loss_and_grad(self, batch, expert_states, rng)
            adversarial_feature_step(self, batch.states, expert_states, learning_rate)
            return loss

        loss, grads = feature_loss_and_grad(self, batch, expert_states, rng)
        self.phi.params, self.phi_adam = adam_step(self.phi_adam, self.phi.params, grads['phi'])
        if self.aux is not None:
            self.aux.params, self.aux_adam = adam_step(self.aux_adam, self.aux.params, grads['aux'])
        if self.phi_target is not None:
            self.phi_target.update(self.phi.params)
        return loss


def make_feature_learner(kind: str, state_dim: int, action_dim: int, d: int = DEFAULT_FEATURE_DIM, hidden: int = 64, seed: int = 0,
                         learning_rate: float = 5e-4, gamma: float = 0.99, expectile: float = HILBERT_EXPECTILE,
                         polyak: float = HILBERT_POLYAK, adversarial_lr_scale: float = ADVERSARIAL_LR_SCALE) -> FeatureLearner:
    if kind not in FEATURE_KINDS:
        raise ValueError(f'Unknown feature kind: {kind}. Choose from {FEATURE_KINDS}')
    phi = phi_network(state_dim, d, hidden, seed)
    aux = _aux_network(kind, state_dim, action_dim, d, hidden, seed + 1)
    return FeatureLearner(kind, phi, aux, learning_rate=learning_rate, gamma=gamma, expectile=expectile, polyak=polyak,
                          adversarial_lr_scale=adversarial_lr_scale)


def features(learner: FeatureLearner, state) -> np.ndarray:
    return learner.features(state)


def hilbert_goal_sample(states, rng: np.random.Generator) -> np.ndarray:
    """Goals drawn uniformly, with replacement, from the batch's states."""
    if isinstance(states, TransitionBatch):
        states = states.states
    states = np.atleast_2d(states)
    if len(states) == 0:
        raise ValueError('Cannot sample goals from an empty batch')
    return states[rng.integers(0, len(states), size=len(states))]


def _split_input_grad(grad: np.ndarray, d: int) -> Tuple[np.ndarray, np.ndarray]:
    return grad[:, :d], grad[:, d:]


def _reconstruction_loss(prediction: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    error = prediction - target
    loss = float(np.mean(np.sum(error * error, axis=1)))
    return loss, 2 * error / len(error)


def _require_actions(batch: TransitionBatch, kind: str):
    if not batch.has_actions:
        raise ValueError(f'actions required: feature kind {kind} cannot train on state-only transitions')


def _hilbert_loss_and_grad(learner: FeatureLearner, batch: TransitionBatch, rng: np.random.Generator):
    if rng is None:
        raise ValueError('Hilbert features need a generator for goal sampling')
    phi = learner.phi
    goals = hilbert_goal_sample(batch.states, rng)

    phi_s, cache_s = phi.forward_with_cache(batch.states)
    phi_g, cache_g = phi.forward_with_cache(goals)
    difference = phi_s - phi_g
    distance = np.linalg.norm(difference, axis=1)

    target_params = learner.phi_target.params
    target_distance = np.linalg.norm(phi.forward(batch.next_states, params=target_params) - phi.forward(goals, params=target_params), axis=1)

    not_at_goal = np.any(np.abs(batch.states - goals) > _SAME_STATE_TOLERANCE, axis=1).astype(np.float64)
    residual = -not_at_goal - learner.gamma * target_distance + distance
    loss = float(np.mean(expectile_loss(residual, learner.expectile)))

    d_residual = expectile_loss_grad(residual, learner.expectile) / len(residual)
    direction = np.where(distance[:, None] > _DISTANCE_FLOOR, difference / np.maximum(distance, _DISTANCE_FLOOR)[:, None], 0.0)
    upstream = d_residual[:, None] * direction
    grad_s, _ = phi.backward(batch.states, upstream, cache=cache_s)
    grad_g, _ = phi.backward(goals, -upstream, cache=cache_g)
    # the target term is a constant of the loss
    return loss, {'phi': grad_s + grad_g, 'aux': None, 'phi_target': np.zeros_like(target_params)}


def adversarial_gap_and_grad(learner: FeatureLearner, agent_states: np.ndarray, expert_states: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Squared distance between the mean agent and mean expert features and its gradient w.r.t. phi's parameters.
    """
    agent_states = np.atleast_2d(agent_states)
    expert_states = np.atleast_2d(expert_states)
    if len(agent_states) == 0 or len(expert_states) == 0:
        raise ValueError('Adversarial features need non-empty agent and expert batches')
    phi = learner.phi
    phi_agent, cache_agent = phi.forward_with_cache(agent_states)
    phi_expert, cache_expert = phi.forward_with_cache(expert_states)
    gap = phi_agent.mean(axis=0) - phi_expert.mean(axis=0)
    gap_sq = float(gap @ gap)
    grad_agent, _ = phi.backward(agent_states, np.tile(2 * gap / len(agent_states), (len(agent_states), 1)), cache=cache_agent)
    grad_expert, _ = phi.backward(expert_states, np.tile(-2 * gap / len(expert_states), (len(expert_states), 1)), cache=cache_expert)
    return gap_sq, grad_agent + grad_expert


def feature_loss_and_grad(learner: FeatureLearner, batch: TransitionBatch, expert_states: np.ndarray = None,
                          rng: np.random.Generator = None) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Loss of the learner's kind on a batch and its gradients, keyed by network ('phi', 'aux' and, for hilbert, 'phi_target').

    :param learner: FeatureLearner
    :param batch: TransitionBatch of agent transitions
    :param expert_states: demonstration states (adversarial kind only)
    :param rng: generator (hilbert kind only)
    :return: (loss, grads)
    """
    if len(batch) == 0:
        raise ValueError('Feature losses need a non-empty batch')
    kind = learner.kind
    phi = learner.phi
    d = learner.d

    if kind == 'random':
        loss, grads = 0.0, {'phi': np.zeros_like(phi.params), 'aux': None}

    elif kind == 'ae':
        phi_s, cache_s = phi.forward_with_cache(batch.states)
        reconstruction, cache_aux = learner.aux.forward_with_cache(phi_s)
        loss, upstream = _reconstruction_loss(reconstruction, batch.states)
        aux_grad, phi_upstream = learner.aux.backward(phi_s, upstream, cache=cache_aux)
        phi_grad, _ = phi.backward(batch.states, phi_upstream, cache=cache_s)
        grads = {'phi': phi_grad, 'aux': aux_grad}

    elif kind == 'idm':
        _require_actions(batch, kind)
        phi_s, cache_s = phi.forward_with_cache(batch.states)
        phi_next, cache_next = phi.forward_with_cache(batch.next_states)
        aux_input = np.concatenate([phi_s, phi_next], axis=1)
        prediction, cache_aux = learner.aux.forward_with_cache(aux_input)
        loss, upstream = _reconstruction_loss(prediction, batch.actions)
        aux_grad, input_grad = learner.aux.backward(aux_input, upstream, cache=cache_aux)
        grad_s, grad_next = _split_input_grad(input_grad, d)
        phi_grad = phi.backward(batch.states, grad_s, cache=cache_s)[0] + phi.backward(batch.next_states, grad_next, cache=cache_next)[0]
        grads = {'phi': phi_grad, 'aux': aux_grad}

    elif kind == 'fdm':
        _require_actions(batch, kind)
        phi_s, cache_s = phi.forward_with_cache(batch.states)
        aux_input = np.concatenate([phi_s, batch.actions], axis=1)
        prediction, cache_aux = learner.aux.forward_with_cache(aux_input)
        loss, upstream = _reconstruction_loss(prediction, batch.next_states)
        aux_grad, input_grad = learner.aux.backward(aux_input, upstream, cache=cache_aux)
        phi_grad, _ = phi.backward(batch.states, _split_input_grad(input_grad, d)[0], cache=cache_s)
        grads = {'phi': phi_grad, 'aux': aux_grad}

    elif kind == 'hilbert':
        loss, grads = _hilbert_loss_and_grad(learner, batch, rng)

    else:
        if expert_states is None:
            raise ValueError('Adversarial features need a paired batch of expert states')
        gap_sq, gap_grad = adversarial_gap_and_grad(learner, batch.states, expert_states)
        loss, grads = -gap_sq, {'phi': -gap_grad, 'aux': None}

    check_finite(loss, f'{kind} feature loss')
    return loss, grads


def adversarial_feature_step(learner: FeatureLearner, agent_states: np.ndarray, expert_states: np.ndarray,
                             learning_rate: float = None) -> FeatureLearner:
    """One Adam ascent step on the squared gap between mean agent and mean expert features."""
    if learning_rate is None:
        learning_rate = learner.learning_rate * learner.adversarial_lr_scale
    _, gap_grad = adversarial_gap_and_grad(learner, agent_states, expert_states)
    learner.phi.params, learner.phi_adam = adam_step(learner.phi_adam, learner.phi.params, -gap_grad, learning_rate=learning_rate)
    return learner


def feature_params_hash(learner: FeatureLearner) -> str:
    digest = hashlib.sha256(learner.phi.params.tobytes())
    if learner.aux is not None:
        digest.update(learner.aux.params.tobytes())
    return digest.hexdigest()


def save_feature_checkpoint(path: str, learner: FeatureLearner):
    records = [mlp_record(f'features.phi:{learner.kind}', learner.phi)]
    if learner.aux is not None:
        records.append(mlp_record(f'features.aux:{learner.kind}', learner.aux))
    write_checkpoint(path, records)
