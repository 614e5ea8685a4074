"""Binary sparse Bayesian learning (BSBL) for one-bit measurements.

Each iteration linearizes the sign nonlinearity around the current Gaussian
prior ``x_bar ~ N(0, diag(1/alpha))`` (Bussgang decomposition), computes the
resulting linear-MMSE posterior, damps it, and re-estimates ``alpha`` by EM.
The covariance of the sign outputs follows the arcsine law.

Only the diagonal of the posterior covariance enters the M-step, so the
iteration drivers track just that diagonal unless ``full_covariance`` is set;
both paths give the same ``alpha`` and mean trajectories.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg import blas

from .model import OneBitMeasurements, RealStackedModel, unstack_vector

log = logging.getLogger(__name__)

# (2/pi) arcsin(rho) is the correlation of sign(z1), sign(z2) for unit-variance z
ARCSINE_GAIN = 2.0 / np.pi
# E[sign(z) z] / Var(z) for a unit-variance Gaussian
BUSSGANG_GAIN = np.sqrt(2.0 / np.pi)


class NumericalBreakdown(RuntimeError):
    """Raised when the sign-output covariance cannot be factorized."""

    def __init__(self, message, iteration=None, condition=None):
        super().__init__(message)
        self.iteration = iteration
        self.condition = condition


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters and iteration controls for BSBL.

    ``a``, ``b`` are the Gamma shape/rate of the precision hyperprior
    (``a=1, b=0`` is uninformative). ``gamma`` damps the posterior
    statistics, ``T`` is the fixed iteration count. ``tol`` enables an
    optional early stop on the relative change of the damped mean.
    """

    a: float = 1.0
    b: float = 0.0
    gamma: float = 0.6
    T: int = 500
    alpha_init: np.ndarray | float | None = None
    alpha_max: float = 1e12
    jitter: float = 1e-9
    tol: float | None = None
    full_covariance: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        if self.b < 0:
            raise ValueError("b must be non-negative")
        if self.alpha_max <= 0:
            raise ValueError("alpha_max must be positive")
        if self.alpha_init is not None and np.any(np.asarray(self.alpha_init) <= 0):
            raise ValueError("alpha_init must be positive")

    def initial_alpha(self, n2: int) -> np.ndarray:
        if self.alpha_init is None:
            return np.ones(n2)
        alpha = np.broadcast_to(np.asarray(self.alpha_init, dtype=float), (n2,))
        return alpha.copy()


@dataclass
class SolverState:
    """Iterate of a BSBL run.

    ``Sigma_bar`` is the full 2N x 2N damped covariance, or just its diagonal
    when the run does not track the full matrix.
    """

    alpha: np.ndarray
    mu_bar: np.ndarray
    Sigma_bar: np.ndarray
    t: int = 0


@dataclass
class EStepOutput:
    mu_post: np.ndarray  # 2N x L
    Sigma_post: np.ndarray  # 2N x 2N, or its diagonal
    C_z_bar: np.ndarray
    C_y_bar: np.ndarray
    E: np.ndarray


@dataclass
class Trace:
    """Per-iteration diagnostics of a solver run."""

    mu_norm: list = field(default_factory=list)
    alpha_min: list = field(default_factory=list)
    alpha_max: list = field(default_factory=list)
    q: list = field(default_factory=list)
    state: SolverState | None = None

    @property
    def iterations(self) -> int:
        return len(self.mu_norm)


def arcsine_law(C_z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Covariance of ``sgn(z)`` for ``z ~ N(0, C_z)``.

    Returns ``(C_y, d)`` where ``d = diag(C_z)**-0.5``.
    """
    d = 1.0 / np.sqrt(np.diag(C_z))
    R = d[:, None] * C_z * d[None, :]
    np.clip(R, -1.0, 1.0, out=R)
    # rounding in d_i**2 * C_ii would shift arcsin(1) by ~1e-8
    np.fill_diagonal(R, 1.0)
    C_y = ARCSINE_GAIN * np.arcsin(R)
    return 0.5 * (C_y + C_y.T), d


def _cholesky(C: np.ndarray, jitter: float, iteration) -> np.ndarray:
    try:
        return linalg.cholesky(C, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    ridge = jitter * float(np.mean(np.diag(C)))
    log.debug("C_y factorization failed at iteration %s; retrying with ridge %g", iteration, ridge)
    try:
        return linalg.cholesky(C + ridge * np.eye(C.shape[0]), lower=True, check_finite=False)
    except linalg.LinAlgError:
        cond = float(np.linalg.cond(C))
        raise NumericalBreakdown(
            f"sign covariance not positive definite at iteration {iteration} "
            f"(condition estimate {cond:.3g})",
            iteration=iteration,
            condition=cond,
        ) from None


def _gram(B: np.ndarray) -> np.ndarray:
    """Exactly symmetric ``B @ B.T`` via a rank-k update."""
    U = blas.dsyrk(1.0, np.asfortranarray(B))  # upper triangle only
    C = U + U.T
    C[np.diag_indices_from(C)] = np.diag(U)
    return C


def _as_columns(Y) -> np.ndarray:
    if isinstance(Y, OneBitMeasurements):
        return Y.y_bar
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def e_step(
    model: RealStackedModel,
    alpha,
    Y,
    *,
    full_covariance: bool = True,
    jitter: float = 1e-9,
    iteration=None,
) -> EStepOutput:
    """Linearized posterior of ``x_bar`` given sign measurements.

    Parameters
    ----------
    model : RealStackedModel
    alpha : array, length 2N
        Prior precisions; the prior covariance is ``diag(1/alpha)``.
    Y : OneBitMeasurements or array
        One column per snapshot. All snapshots share the covariance.
    full_covariance : bool
        Return the full posterior covariance; otherwise only its diagonal.
    """
    A = model.A_bar
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("alpha must be positive")
    Y = _as_columns(Y)
    if Y.shape[0] != A.shape[0] or alpha.shape != (A.shape[1],):
        raise ValueError("dimension mismatch between model, alpha and measurements")

    var = 1.0 / alpha
    C_z = _gram(A * np.sqrt(var)[None, :]) + model.C_w_bar
    C_y, d = arcsine_law(C_z)
    E = (BUSSGANG_GAIN * d)[:, None] * A * var[None, :]

    chol = _cholesky(C_y, jitter, iteration)
    W = blas.dtrsm(1.0, chol, E, lower=1)
    V = linalg.solve_triangular(chol, Y, lower=True, check_finite=False)
    mu = W.T @ V
    if full_covariance:
        Sigma = -(W.T @ W)
        Sigma = 0.5 * (Sigma + Sigma.T)
        Sigma[np.diag_indices_from(Sigma)] += var
    else:
        Sigma = var - np.einsum("ij,ij->j", W, W)
    return EStepOutput(mu_post=mu, Sigma_post=Sigma, C_z_bar=C_z, C_y_bar=C_y, E=E)


def damp(new: EStepOutput, prev_mu_bar, prev_Sigma_bar, gamma: float):
    """Convex combination ``gamma * new + (1 - gamma) * prev``.

    Pass ``None`` for the previous values on the first iteration; the new
    posterior is then returned unchanged.
    """
    if prev_mu_bar is None or prev_Sigma_bar is None:
        return new.mu_post, new.Sigma_post
    mu = gamma * new.mu_post + (1.0 - gamma) * np.asarray(prev_mu_bar)
    Sigma = gamma * new.Sigma_post + (1.0 - gamma) * np.asarray(prev_Sigma_bar)
    return mu, Sigma


def _diag(Sigma) -> np.ndarray:
    Sigma = np.asarray(Sigma, dtype=float)
    return np.diag(Sigma) if Sigma.ndim == 2 else Sigma


def _clip_alpha(num, den, alpha_max):
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(den > 0, num / den, alpha_max)
    return np.clip(alpha, 1.0 / alpha_max, alpha_max)


def m_step_smv(mu_bar, Sigma_bar, a: float, b: float, alpha_max: float = 1e12) -> np.ndarray:
    """EM precision update for a single snapshot."""
    mu_bar = np.asarray(mu_bar, dtype=float).reshape(-1)
    den = 2.0 * b + _diag(Sigma_bar) + mu_bar**2
    return _clip_alpha(2.0 * a - 1.0, den, alpha_max)


def m_step_mmv(mu_bars, Sigma_bar, a: float, b: float, L: int | None = None,
               alpha_max: float = 1e12) -> np.ndarray:
    """EM precision update shared by ``L`` snapshots (columns of ``mu_bars``)."""
    mu_bars = np.asarray(mu_bars, dtype=float)
    if mu_bars.ndim == 1:
        mu_bars = mu_bars[:, None]
    if L is None:
        L = mu_bars.shape[1]
    if L < 1:
        raise ValueError("L must be at least 1")
    den = 2.0 * b + L * _diag(Sigma_bar) + np.sum(mu_bars**2, axis=1)
    # (2a - 1) + (L - 1): bit-identical to the single-snapshot update at L = 1
    return _clip_alpha((2.0 * a - 1.0) + (L - 1.0), den, alpha_max)


def q_value(alpha, mu_bars, Sigma_bar, a: float, b: float, L: int | None = None) -> float:
    """Expected complete-data log-likelihood of ``alpha``, up to a constant."""
    alpha = np.asarray(alpha, dtype=float)
    mu_bars = np.asarray(mu_bars, dtype=float)
    if mu_bars.ndim == 1:
        mu_bars = mu_bars[:, None]
    if L is None:
        L = mu_bars.shape[1]
    second_moment = L * _diag(Sigma_bar) + np.sum(mu_bars**2, axis=1)
    log_alpha = np.log(alpha)
    return float(
        -0.5 * np.dot(alpha, second_moment)
        + (0.5 * L + a - 1.0) * np.sum(log_alpha)
        - b * np.sum(alpha)
    )


def _iterate(model: RealStackedModel, Y: np.ndarray, config: SolverConfig, m_step) -> Trace:
    n2 = model.A_bar.shape[1]
    L = Y.shape[1]
    if L + 2.0 * config.a - 2.0 < 0:
        raise ValueError("hyperprior shape too small: L + 2a - 2 must be non-negative")
    alpha = config.initial_alpha(n2)
    mu_bar = Sigma_bar = None
    trace = Trace()
    for t in range(1, config.T + 1):
        out = e_step(model, alpha, Y, full_covariance=config.full_covariance,
                     jitter=config.jitter, iteration=t)
        prev_mu = mu_bar
        mu_bar, Sigma_bar = damp(out, mu_bar, Sigma_bar, config.gamma)
        alpha = m_step(mu_bar, Sigma_bar)

        trace.mu_norm.append(float(np.linalg.norm(mu_bar)))
        trace.alpha_min.append(float(alpha.min()))
        trace.alpha_max.append(float(alpha.max()))
        trace.q.append(q_value(alpha, mu_bar, Sigma_bar, config.a, config.b, L))
        if config.tol is not None and prev_mu is not None:
            scale = np.linalg.norm(prev_mu)
            if scale > 0 and np.linalg.norm(mu_bar - prev_mu) <= config.tol * scale:
                log.debug("early stop at iteration %d", t)
                break
    trace.state = SolverState(alpha=alpha, mu_bar=mu_bar, Sigma_bar=Sigma_bar, t=t)
    return trace


def run_smv(model: RealStackedModel, y_bar, config: SolverConfig = SolverConfig()):
    """BSBL for a single snapshot.

    Returns
    -------
    x_hat : complex array, length N
        Unstacked damped posterior mean after the last iteration.
    trace : Trace
    """
    Y = _as_columns(y_bar)
    if Y.shape[1] != 1:
        raise ValueError("run_smv expects a single snapshot; use run_mmv")
    if config.b == 0 and config.a < 0.5:
        raise ValueError("a must be at least 1/2 when b = 0")
    trace = _iterate(
        model, Y, config,
        lambda mu, S: m_step_smv(mu, S, config.a, config.b, config.alpha_max),
    )
    return unstack_vector(trace.state.mu_bar[:, 0]), trace


def run_mmv(model: RealStackedModel, Y_bar, config: SolverConfig = SolverConfig()):
    """BSBL for ``L`` snapshots sharing a row-sparse support.

    Returns
    -------
    X_hat : complex array, N x L
    trace : Trace
    """
    Y = _as_columns(Y_bar)
    L = Y.shape[1]
    trace = _iterate(
        model, Y, config,
        lambda mu, S: m_step_mmv(mu, S, config.a, config.b, L, config.alpha_max),
    )
    return unstack_vector(trace.state.mu_bar), trace
