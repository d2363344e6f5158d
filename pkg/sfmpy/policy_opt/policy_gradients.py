from typing import Tuple

import numpy as np

from sfmpy.function_approx import adam_step, check_finite
from sfmpy.policy_opt.actors import DeterministicActor, GaussianActor, softplus, softplus_grad, gaussian_entropy, STD_FLOOR
from sfmpy.sf_estimator import SfNet, sf_action_vjp, sf_predict


def _witness_vector(witness) -> np.ndarray:
    w = getattr(witness, 'w', witness)
    w = np.asarray(w, dtype=np.float64)
    check_finite(w, 'witness')
    return w


def _state_batch(states) -> np.ndarray:
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if len(states) == 0:
        raise ValueError('Policy gradient needs a non-empty state batch')
    return states


def witness_objective(actor, sf_net: SfNet, witness, states, noise: np.ndarray = None) -> float:
    """
    The ascended objective: mean_j psi(s_j, a_j)^T w, with a_j = pi(s_j) for a deterministic actor and
    a_j = h(s_j, eps_j) plus the entropy bonus for a Gaussian actor.
    """
    states = _state_batch(states)
    w = _witness_vector(witness)
    if isinstance(actor, GaussianActor):
        std = actor.std(states)
        actions = actor.mean(states) + std * noise
        return float(np.mean(sf_predict(sf_net, states, actions) @ w) + actor.entropy_coeff * np.mean(gaussian_entropy(std)))
    return float(np.mean(sf_predict(sf_net, states, actor.actions(states)) @ w))


def deterministic_pg_gradient(actor: DeterministicActor, sf_net: SfNet, witness, states) -> np.ndarray:
    """
    Ascent direction E_batch[grad_mu pi(S) grad_a psi_mean(S, a)|_{a = pi(S)} w], witness held constant.
    """
    states = _state_batch(states)
    w = _witness_vector(witness)
    actions, cache = actor.net.forward_with_cache(states)
    action_grad = sf_action_vjp(sf_net, states, actions, w)
    grad, _ = actor.net.backward(states, action_grad / len(states), cache=cache)
    check_finite(grad, 'deterministic policy gradient')
    return grad


def _ascend(actor, grad: np.ndarray) -> float:
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm > 0:
        actor.params, actor.adam = adam_step(actor.adam, actor.params, -grad)
    return grad_norm


def deterministic_pg_step(actor: DeterministicActor, sf_net: SfNet, witness, states) -> Tuple[DeterministicActor, float]:
    """One Adam ascent step; a zero gradient leaves the actor untouched. Returns (actor, grad_norm)."""
    grad = deterministic_pg_gradient(actor, sf_net, witness, states)
    return actor, _ascend(actor, grad)


def _std_forward(actor: GaussianActor, states: np.ndarray):
    if actor.fixed_std is not None:
        return np.full((len(states), actor.action_dim), actor.fixed_std), None, None
    z, cache = actor.std_head.forward_with_cache(states)
    std = softplus(z) + STD_FLOOR
    check_finite(std, 'policy std')
    if np.any(std <= 0):
        raise ValueError('Policy std underflow: std must stay strictly positive')
    return std, z, cache


def _head_gradients(actor: GaussianActor, states, mean_cache, upstream_mean, z, std_cache, upstream_std, per_sample: bool):
    mean_grad, _ = actor.mean_head.backward(states, upstream_mean, cache=mean_cache, per_sample=per_sample)
    if z is None:
        shape = (len(states), actor.std_head.n_params) if per_sample else (actor.std_head.n_params,)
        std_grad = np.zeros(shape)
    else:
        std_grad, _ = actor.std_head.backward(states, upstream_std * softplus_grad(z), cache=std_cache, per_sample=per_sample)
    grad = np.concatenate([mean_grad, std_grad], axis=-1)
    check_finite(grad, 'gaussian policy gradient')
    return grad


def _check_noise(noise, states: np.ndarray, action_dim: int) -> np.ndarray:
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    if noise.shape != (len(states), action_dim):
        raise ValueError(f'Noise batch has shape {noise.shape}, expected {(len(states), action_dim)}')
    return noise


def gaussian_pg_gradient(actor: GaussianActor, sf_net: SfNet, witness, states, noise, per_sample: bool = False) -> np.ndarray:
    """
    Reparameterised gradient of witness_objective over [mean_head, std_head] parameters.

    With per_sample=True each row is one sample's unbiased estimate (shape (B, n_params)); their mean
    equals the batch gradient.
    """
    states = _state_batch(states)
    noise = _check_noise(noise, states, actor.action_dim)
    w = _witness_vector(witness)
    mean, mean_cache = actor.mean_head.forward_with_cache(states)
    std, z, std_cache = _std_forward(actor, states)
    actions = mean + std * noise

    action_grad = sf_action_vjp(sf_net, states, actions, w)
    scale = 1.0 if per_sample else 1.0 / len(states)
    upstream_mean = action_grad * scale
    upstream_std = (action_grad * noise + actor.entropy_coeff / std) * scale
    return _head_gradients(actor, states, mean_cache, upstream_mean, z, std_cache, upstream_std, per_sample)


def gaussian_log_derivative_gradient(actor: GaussianActor, sf_net: SfNet, witness, states, noise,
                                     per_sample: bool = False) -> np.ndarray:
    """
    Score-function (REINFORCE) estimate of the same gradient as gaussian_pg_gradient, the entropy term
    differentiated in closed form.
    """
    states = _state_batch(states)
    noise = _check_noise(noise, states, actor.action_dim)
    w = _witness_vector(witness)
    mean, mean_cache = actor.mean_head.forward_with_cache(states)
    std, z, std_cache = _std_forward(actor, states)
    actions = mean + std * noise
    returns = (sf_predict(sf_net, states, actions) @ w)[:, None]

    scale = 1.0 if per_sample else 1.0 / len(states)
    upstream_mean = noise / std * returns * scale
    upstream_std = ((noise * noise - 1) / std * returns + actor.entropy_coeff / std) * scale
    return _head_gradients(actor, states, mean_cache, upstream_mean, z, std_cache, upstream_std, per_sample)


def gaussian_pg_step(actor: GaussianActor, sf_net: SfNet, witness, states, noise) -> Tuple[GaussianActor, float]:
    grad = gaussian_pg_gradient(actor, sf_net, witness, states, noise)
    return actor, _ascend(actor, grad)


def policy_gradient_step(actor, sf_net: SfNet, witness, states, rng: np.random.Generator = None) -> float:
    """Dispatch on the actor kind; Gaussian actors draw their own standard-normal noise batch from rng."""
    if isinstance(actor, GaussianActor):
        states = _state_batch(states)
        noise = rng.standard_normal(size=(len(states), actor.action_dim))
        _, grad_norm = gaussian_pg_step(actor, sf_net, witness, states, noise)
        return grad_norm
    _, grad_norm = deterministic_pg_step(actor, sf_net, witness, states)
    return grad_norm
