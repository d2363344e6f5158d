from dataclasses import dataclass
from typing import Tuple

import numpy as np

from sfmpy.function_approx.mlp import check_finite


@dataclass
class AdamState:
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: np.ndarray = None
    second_moment: np.ndarray = None


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, learning_rate: float = None) -> Tuple[np.ndarray, AdamState]:
    """
    One bias-corrected Adam descent step. Callers maximising an objective pass the negated gradient.

    :param state: optimiser state, moments are created on the first call and updated in place
    :param params: current parameter vector
    :param grad: gradient of the minimised loss
    :param learning_rate: overrides state.learning_rate for this step (used by decay schedules)
    :return: the new parameter vector and the state
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ValueError(f'Parameter shape {params.shape} does not match gradient shape {grad.shape}')
    check_finite(grad, 'gradient passed to Adam')

    if state.first_moment is None:
        state.first_moment = np.zeros_like(params)
        state.second_moment = np.zeros_like(params)
    elif state.first_moment.shape != params.shape:
        raise ValueError(f'Adam moments have shape {state.first_moment.shape}, parameters have shape {params.shape}')

    lr = state.learning_rate if learning_rate is None else learning_rate
    state.step += 1
    state.first_moment = state.beta1 * state.first_moment + (1 - state.beta1) * grad
    state.second_moment = state.beta2 * state.second_moment + (1 - state.beta2) * grad * grad
    bias_correction1 = 1 - state.beta1 ** state.step
    bias_correction2 = 1 - state.beta2 ** state.step
    m_hat = state.first_moment / bias_correction1
    v_hat = state.second_moment / bias_correction2

    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, state
