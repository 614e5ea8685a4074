"""Binary iterative hard thresholding (BIHT) for complex one-bit CS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import RealStackedModel, unstack_vector


@dataclass(frozen=True)
class BihtConfig:
    """``K`` counts complex components; ``tau`` is the step size."""

    K: int
    tau: float = 1.0
    iters: int = 100

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.iters < 1:
            raise ValueError("iters must be at least 1")


def _sgn(r):
    return np.where(r >= 0, 1.0, -1.0)


def hard_threshold_complex(x_bar: np.ndarray, K: int) -> np.ndarray:
    """Keep the ``K`` complex components of largest modulus in a stacked vector."""
    n = x_bar.shape[0] // 2
    mag2 = x_bar[:n] ** 2 + x_bar[n:] ** 2
    keep = np.argsort(-mag2, kind="stable")[:K]
    out = np.zeros_like(x_bar)
    out[keep] = x_bar[keep]
    out[keep + n] = x_bar[keep + n]
    return out


def biht_run(model: RealStackedModel, y_bar, config: BihtConfig, x0=None,
             return_trace: bool = False):
    """Run BIHT and return a unit-norm complex estimate with ``K`` nonzeros.

    With ``return_trace`` the Hamming distance between ``sgn(A_bar x)`` and
    ``y_bar`` after every iteration is returned as a second value.
    """
    A = model.A_bar
    y = np.asarray(y_bar, dtype=float).reshape(-1)
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("y_bar entries must be +/-1")
    n = A.shape[1] // 2
    if config.K > n:
        raise ValueError(f"K={config.K} exceeds the number of components {n}")
    if x0 is None:
        # a unit start on one atom traps the iterate in coherent dictionaries
        x = np.zeros(2 * n)
    else:
        x = np.asarray(x0, dtype=float).copy()

    step = 0.5 * config.tau
    hamming = []
    for _ in range(config.iters):
        x = hard_threshold_complex(x + step * (A.T @ (y - _sgn(A @ x))), config.K)
        if return_trace:
            hamming.append(int(np.count_nonzero(_sgn(A @ x) != y)))

    if not np.any(x):
        # only when y is consistent with x = 0 (all +1); fall back to the matched filter
        x = hard_threshold_complex(A.T @ y, config.K)
    x = x / np.linalg.norm(x)
    x_hat = unstack_vector(x)
    if return_trace:
        return x_hat, hamming
    return x_hat
