"""Complex one-bit observation model and its real-valued stacked form.

A complex measurement ``y = csgn(A x + w)`` with circular Gaussian noise
``w ~ CN(0, C_w)`` is equivalent to the real model
``y_bar = sgn(A_bar x_bar + w_bar)`` where

    A_bar   = [[Re A, -Im A], [Im A, Re A]]
    C_w_bar = 0.5 * [[Re C_w, -Im C_w], [Im C_w, Re C_w]]

and vectors are stacked as ``[Re x; Im x]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12


def _sgn(r: np.ndarray) -> np.ndarray:
    # sgn(0) := +1 so that synthesis is deterministic
    return np.where(r >= 0, 1.0, -1.0)


def csgn(r) -> np.ndarray:
    """Complex sign: ``sgn(Re r) + 1j * sgn(Im r)`` with ``sgn(0) = +1``."""
    r = np.asarray(r)
    return _sgn(r.real) + 1j * _sgn(np.imag(r))


def stack_vector(x) -> np.ndarray:
    """Stack a complex vector (or the columns of a matrix) as ``[Re x; Im x]``."""
    x = np.asarray(x)
    return np.concatenate([x.real, np.imag(x)], axis=0).astype(float)


def unstack_vector(x_bar) -> np.ndarray:
    """Inverse of :func:`stack_vector`."""
    x_bar = np.asarray(x_bar, dtype=float)
    n2 = x_bar.shape[0]
    if n2 % 2:
        raise ValueError(f"cannot unstack odd-length input (length {n2})")
    n = n2 // 2
    return x_bar[:n] + 1j * x_bar[n:]


def _stack_block(m: np.ndarray) -> np.ndarray:
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


@dataclass(frozen=True)
class ComplexLinearModel:
    """Complex measurement matrix ``A`` (M x N) and noise covariance ``C_w`` (M x M)."""

    A: np.ndarray
    C_w: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        C_w = np.atleast_2d(np.asarray(self.C_w, dtype=complex))
        if A.ndim != 2:
            raise ValueError("A must be a matrix")
        M = A.shape[0]
        if C_w.shape != (M, M):
            raise ValueError(f"C_w has shape {C_w.shape}, expected {(M, M)}")
        if not np.allclose(C_w, C_w.conj().T, rtol=0, atol=HERMITIAN_TOL):
            raise ValueError("C_w is not Hermitian")
        A.setflags(write=False)
        C_w.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C_w", C_w)

    @classmethod
    def white(cls, A, sigma2: float) -> "ComplexLinearModel":
        """Model with uncorrelated noise ``C_w = sigma2 * I``."""
        A = np.atleast_2d(np.asarray(A, dtype=complex))
        return cls(A, sigma2 * np.eye(A.shape[0]))

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class RealStackedModel:
    """Real-valued model ``y_bar = sgn(A_bar x_bar + w_bar)``, ``w_bar ~ N(0, C_w_bar)``.

    Usually built with :func:`stack_model`; constructing it directly is allowed
    for real-valued problems of any shape.
    """

    A_bar: np.ndarray
    C_w_bar: np.ndarray

    def __post_init__(self):
        # column-major so the solver's BLAS calls need no copies
        A_bar = np.asfortranarray(np.atleast_2d(np.asarray(self.A_bar, dtype=float)))
        C = np.atleast_2d(np.asarray(self.C_w_bar, dtype=float))
        m = A_bar.shape[0]
        if C.shape != (m, m):
            raise ValueError(f"C_w_bar has shape {C.shape}, expected {(m, m)}")
        if not np.allclose(C, C.T, rtol=0, atol=HERMITIAN_TOL):
            raise ValueError("C_w_bar is not symmetric")
        A_bar.setflags(write=False)
        C.setflags(write=False)
        object.__setattr__(self, "A_bar", A_bar)
        object.__setattr__(self, "C_w_bar", C)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A_bar.shape

    def with_noise(self, C_w_bar) -> "RealStackedModel":
        """Same matrix, different noise covariance (e.g. a mismatched variance)."""
        return RealStackedModel(self.A_bar, C_w_bar)


def stack_model(m: ComplexLinearModel) -> RealStackedModel:
    """Real stacked equivalent of a complex one-bit model."""
    return RealStackedModel(_stack_block(m.A), 0.5 * _stack_block(m.C_w))


@dataclass(frozen=True)
class OneBitMeasurements:
    """Stacked sign measurements, one column of length 2M per snapshot."""

    y_bar: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y_bar, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[1] < 1:
            raise ValueError("y_bar must be a vector or a 2M x L matrix")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("one-bit measurements must be exactly +/-1")
        y.setflags(write=False)
        object.__setattr__(self, "y_bar", y)

    @property
    def L(self) -> int:
        return self.y_bar.shape[1]

    @property
    def complex(self) -> np.ndarray:
        """Measurements as complex values in ``{+-1 +-1j}``, shape M x L."""
        return unstack_vector(self.y_bar)


def _noise_factor(C_w: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Square-root factor ``F`` with ``F F^H = C_w``; rejects indefinite input."""
    w, V = np.linalg.eigh(C_w)
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if np.min(w) < -tol * scale:
        raise ValueError("noise covariance is not positive semidefinite")
    return V * np.sqrt(np.clip(w, 0.0, None))


def synthesize(m: ComplexLinearModel, X, rng: np.random.Generator) -> OneBitMeasurements:
    """Draw ``Y = csgn(A X + W)`` with ``W`` iid ``CN(0, C_w)`` across snapshots.

    ``X`` may be a length-N vector (one snapshot) or an N x L matrix.
    """
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != m.N:
        raise ValueError(f"X has {X.shape[0]} rows, model expects {m.N}")
    F = _noise_factor(m.C_w)
    L = X.shape[1]
    g = rng.standard_normal((m.M, L)) + 1j * rng.standard_normal((m.M, L))
    W = F @ g / np.sqrt(2.0)
    return OneBitMeasurements(stack_vector(csgn(m.A @ X + W)))
