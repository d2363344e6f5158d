from typing import Callable

import numpy as np

FINITE_DIFFERENCE_STEP = 1e-5


def central_difference_gradient(objective: Callable[[np.ndarray], float], point: np.ndarray,
                                step: float = FINITE_DIFFERENCE_STEP) -> np.ndarray:
    """
    Central finite-difference gradient of a scalar objective.

    :param objective: maps a vector shaped like point to a float
    :param point: where the gradient is taken
    :param step: h in (f(x + h e_i) - f(x - h e_i)) / 2h
    :return: gradient vector shaped like point
    """
    point = np.array(point, dtype=np.float64)
    flat = point.ravel()
    grad = np.zeros_like(flat)
    for i in range(len(flat)):
        original = flat[i]
        flat[i] = original + step
        upper = objective(flat.reshape(point.shape))
        flat[i] = original - step
        lower = objective(flat.reshape(point.shape))
        flat[i] = original
        grad[i] = (upper - lower) / (2 * step)
    return grad.reshape(point.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """Max-norm error scaled by the larger of the two max-norms."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)
