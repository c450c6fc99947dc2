import numpy as np

from typing import Callable

from app.errors import OracleError


def finite_difference_gradient(
    f: Callable[[np.ndarray], float],
    at: np.ndarray,
    h: float = 1e-5,
) -> np.ndarray:
    """
    Central finite-difference gradient of a scalar function.

    Each coordinate i is estimated as (f(x + h*e_i) - f(x - h*e_i)) / (2h).
    `at` itself is never modified.

    Args:
        f (Callable): Scalar-valued function of an array.
        at (np.ndarray): Evaluation point.
        h (float): Step size, must be positive.

    Returns:
        np.ndarray: Gradient estimate with the shape of `at`.

    Raises:
        ValueError: If h is not positive.
        OracleError: If f returns a non-finite value at a perturbed point.
    """
    if h <= 0:
        raise ValueError(f"Step size must be positive, got {h}")

    point = np.array(at, dtype=np.float64, copy=True)
    grad = np.zeros_like(point)

    for index in np.ndindex(point.shape):
        original = point[index]
        point[index] = original + h
        forward = float(f(point))
        point[index] = original - h
        backward = float(f(point))
        point[index] = original
        if not (np.isfinite(forward) and np.isfinite(backward)):
            raise OracleError(f"Non-finite function value near coordinate {index}")
        grad[index] = (forward - backward) / (2.0 * h)

    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """
    Largest |analytic - numeric| / max(1, |numeric|) over all coordinates.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
