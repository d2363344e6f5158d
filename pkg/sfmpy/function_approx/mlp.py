from typing import List, Sequence, Tuple

import numpy as np

ACTIVATION_TAGS = ['relu', 'elu', 'tanh', 'identity', 'layernorm-tanh', 'l2norm', 'avgl1norm']

NORM_FLOOR = 1e-8
_LAYER_NORM_EPS = 1e-5


class NonFiniteError(ValueError):
    """Raised whenever a NaN or inf reaches a gradient, target, action or loss."""
    pass


def check_finite(values, what: str):
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))
        raise NonFiniteError(f'Non-finite {what}, first offending index: {tuple(bad[0])}')


def l2_normalise(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norms, NORM_FLOOR)


def avg_l1_normalise(x: np.ndarray) -> np.ndarray:
    scale = np.mean(np.abs(x), axis=-1, keepdims=True)
    return x / np.maximum(scale, NORM_FLOOR)


def _layer_norm(z: np.ndarray) -> np.ndarray:
    mu = z.mean(axis=1, keepdims=True)
    var = ((z - mu) ** 2).mean(axis=1, keepdims=True)
    return (z - mu) / np.sqrt(var + _LAYER_NORM_EPS)


def _activate(tag: str, z: np.ndarray) -> np.ndarray:
    if tag == 'relu':
        return np.maximum(z, 0.0)
    if tag == 'elu':
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    if tag == 'tanh':
        return np.tanh(z)
    if tag == 'identity':
        return z
    if tag == 'layernorm-tanh':
        return np.tanh(_layer_norm(z))
    if tag == 'l2norm':
        return l2_normalise(z)
    if tag == 'avgl1norm':
        return avg_l1_normalise(z)
    raise ValueError(f'Unknown activation tag: {tag}')


def _activation_backward(tag: str, z: np.ndarray, y: np.ndarray, g: np.ndarray) -> np.ndarray:
    """
    Pull the upstream gradient g (w.r.t. the activation output y) back to the pre-activation z.
    The last three tags act on whole rows so their Jacobians are not diagonal.
    """
    if tag == 'relu':
        return g * (z > 0)
    if tag == 'elu':
        return g * np.where(z > 0, 1.0, y + 1.0)
    if tag == 'tanh':
        return g * (1.0 - y * y)
    if tag == 'identity':
        return g
    if tag == 'layernorm-tanh':
        gh = g * (1.0 - y * y)
        mu = z.mean(axis=1, keepdims=True)
        var = ((z - mu) ** 2).mean(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + _LAYER_NORM_EPS)
        xhat = (z - mu) * inv_std
        return inv_std * (gh - gh.mean(axis=1, keepdims=True) - xhat * (gh * xhat).mean(axis=1, keepdims=True))
    if tag == 'l2norm':
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        active = norms > NORM_FLOOR
        safe_norms = np.maximum(norms, NORM_FLOOR)
        projected = (g - y * np.sum(y * g, axis=1, keepdims=True)) / safe_norms
        return np.where(active, projected, g / NORM_FLOOR)
    if tag == 'avgl1norm':
        width = z.shape[1]
        scale = np.mean(np.abs(z), axis=1, keepdims=True)
        active = scale > NORM_FLOOR
        safe_scale = np.maximum(scale, NORM_FLOOR)
        through = g / safe_scale - np.sign(z) * np.sum(z * g, axis=1, keepdims=True) / (width * safe_scale ** 2)
        return np.where(active, through, g / NORM_FLOOR)
    raise ValueError(f'Unknown activation tag: {tag}')


class Mlp:
    """
    Feed-forward network with a flat float64 parameter vector and analytic gradients.

    Parameters are laid out layer by layer as the row-major weight matrix (fan_in x fan_out)
    followed by the bias, so the parameter count is sum((fan_in + 1) * fan_out).

    :param layer_sizes: [input_dim, hidden..., output_dim]
    :param activations: one tag from ACTIVATION_TAGS per layer (applied after the affine map)
    :param rng_seed: seed of the uniform fan-in initialisation
    :param final_layer_scale: multiplies the last layer's initial weights and bias
    :param params: optional parameter vector to use instead of the initialisation
    """

    def __init__(self, layer_sizes: Sequence[int], activations: Sequence[str], rng_seed: int = 0,
                 final_layer_scale: float = 1.0, params: np.ndarray = None):
        layer_sizes = [int(n) for n in layer_sizes]
        activations = list(activations)
        if len(layer_sizes) < 2:
            raise ValueError(f'An Mlp needs at least an input and an output size, got {layer_sizes}')
        if any(n < 1 for n in layer_sizes):
            raise ValueError(f'Layer sizes must be positive: {layer_sizes}')
        if len(activations) != len(layer_sizes) - 1:
            raise ValueError(f'Expected {len(layer_sizes) - 1} activation tags, got {len(activations)}')
        for tag in activations:
            if tag not in ACTIVATION_TAGS:
                raise ValueError(f'Unknown activation tag: {tag}')

        self.layer_sizes = layer_sizes
        self.activations = activations
        self.rng_seed = rng_seed

        if params is None:
            self.params = self._initial_params(final_layer_scale)
        else:
            params = np.array(params, dtype=np.float64)
            if params.shape != (self.n_params,):
                raise ValueError(f'Parameter vector has shape {params.shape}, expected ({self.n_params},)')
            self.params = params

    @property
    def n_params(self) -> int:
        return int(sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])))

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def _initial_params(self, final_layer_scale: float) -> np.ndarray:
        rng = np.random.default_rng(self.rng_seed)
        chunks = []
        n_layers = len(self.layer_sizes) - 1
        for layer, (fan_in, fan_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            weights = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            bias = rng.uniform(-bound, bound, size=fan_out)
            if layer == n_layers - 1:
                weights = weights * final_layer_scale
                bias = bias * final_layer_scale
            chunks.append(weights.ravel())
            chunks.append(bias)
        return np.concatenate(chunks).astype(np.float64)

    def layers(self, params: np.ndarray = None) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(weights, bias) views into the parameter vector."""
        if params is None:
            params = self.params
        views = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            weights = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            bias = params[offset:offset + fan_out]
            offset += fan_out
            views.append((weights, bias))
        return views

    def _as_batch(self, x) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = np.atleast_2d(x)
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ValueError(f'Input has shape {x.shape}, expected last dimension {self.input_dim}')
        return batch, single

    def forward_with_cache(self, x, params: np.ndarray = None):
        batch, single = self._as_batch(x)
        cache = []
        activation = batch
        for (weights, bias), tag in zip(self.layers(params), self.activations):
            z = activation @ weights + bias
            y = _activate(tag, z)
            cache.append((activation, z, y))
            activation = y
        return (activation[0] if single else activation), cache

    def forward(self, x, params: np.ndarray = None) -> np.ndarray:
        output, _ = self.forward_with_cache(x, params)
        return output

    def backward(self, x, upstream_grad, params: np.ndarray = None, per_sample: bool = False, cache=None):
        """
        Gradients of <upstream_grad, forward(x)> with respect to the parameters and the input.

        For a batch the parameter gradient is summed over rows, or returned row by row with
        per_sample=True (shape (B, n_params)).

        :return: (param_grad, input_grad)
        """
        batch, single = self._as_batch(x)
        upstream = np.atleast_2d(np.asarray(upstream_grad, dtype=np.float64))
        if upstream.shape != (batch.shape[0], self.output_dim):
            raise ValueError(f'Upstream gradient has shape {np.shape(upstream_grad)}, expected output dimension {self.output_dim}')
        check_finite(upstream, 'upstream gradient')

        if cache is None:
            _, cache = self.forward_with_cache(batch, params)

        layer_views = self.layers(params)
        grads = []
        delta = upstream
        for (weights, _), tag, (a_prev, z, y) in reversed(list(zip(layer_views, self.activations, cache))):
            dz = _activation_backward(tag, z, y, delta)
            if per_sample:
                weight_grad = np.einsum('bi,bj->bij', a_prev, dz).reshape(batch.shape[0], -1)
                grads.append(np.concatenate([weight_grad, dz], axis=1))
            else:
                grads.append(np.concatenate([(a_prev.T @ dz).ravel(), dz.sum(axis=0)]))
            delta = dz @ weights.T

        grads.reverse()
        param_grad = np.concatenate(grads, axis=-1)
        input_grad = delta[0] if single else delta
        if single and per_sample:
            param_grad = param_grad[0]
        return param_grad, input_grad

    def copy(self) -> 'Mlp':
        return Mlp(self.layer_sizes, self.activations, rng_seed=self.rng_seed, params=self.params.copy())


def forward(net: Mlp, x, params: np.ndarray = None) -> np.ndarray:
    return net.forward(x, params)


def backward(net: Mlp, x, upstream_grad, params: np.ndarray = None, per_sample: bool = False):
    return net.backward(x, upstream_grad, params=params, per_sample=per_sample)
