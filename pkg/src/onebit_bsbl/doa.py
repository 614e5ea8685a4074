"""Direction-of-arrival benchmark on a uniform linear array.

Sources sit on an angular grid; the dictionary columns are ULA steering
vectors. Each Monte-Carlo trial draws fresh source phases and noise, runs
every algorithm on the same one-bit data, and scores the estimate by
debiased NMSE and by exact top-K support recovery.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import BihtConfig, biht_run
from .bsbl import NumericalBreakdown, SolverConfig, run_mmv, run_smv
from .model import ComplexLinearModel, stack_model, synthesize

log = logging.getLogger(__name__)

NMSE_FLOOR_DB = -300.0
# residual ratios this small are rounding noise of an exact fit
_EXACT_RATIO = 1e-13
DEFAULT_GRID = np.linspace(-90.0, 90.0, 361)


@dataclass(frozen=True)
class Scenario:
    """Sources on a ULA grid. Angles in degrees, amplitudes in dB."""

    M: int = 64
    L: int = 1
    snr_db: float = 10.0
    true_doas: tuple = (-3.0, 2.0, 75.0)
    amplitudes_db: tuple = (12.0, 22.0, 20.0)
    grid: np.ndarray = field(default_factory=lambda: DEFAULT_GRID.copy())
    d_over_lambda: float = 0.5
    seed: int = 0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "true_doas", tuple(float(t) for t in self.true_doas))
        object.__setattr__(self, "amplitudes_db", tuple(float(a) for a in self.amplitudes_db))
        if self.M < 1 or self.L < 1:
            raise ValueError("M and L must be at least 1")
        if grid.ndim != 1 or grid.size < 1 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if len(self.true_doas) != len(self.amplitudes_db):
            raise ValueError("true_doas and amplitudes_db differ in length")
        if len(self.true_doas) == 0:
            raise ValueError("at least one source is required")
        self.true_indices  # validates membership

    @property
    def K(self) -> int:
        return len(self.true_doas)

    @property
    def true_indices(self) -> np.ndarray:
        idx = []
        for theta in self.true_doas:
            hit = np.flatnonzero(np.isclose(self.grid, theta, rtol=0, atol=1e-9))
            if hit.size == 0:
                raise ValueError(f"true DOA {theta} deg is not on the grid")
            idx.append(int(hit[0]))
        return np.array(idx)

    def replace(self, **changes) -> "Scenario":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return Scenario(**kw)


def steering_vector(theta, M: int, d_over_lambda: float = 0.5) -> np.ndarray:
    """Unit-norm ULA response ``exp(-j 2 pi m d/lambda sin(theta)) / sqrt(M)``."""
    m = np.arange(M)
    phase = -2j * np.pi * d_over_lambda * np.sin(np.deg2rad(theta))
    return np.exp(phase * m) / np.sqrt(M)


def build_dictionary(grid, M: int, d_over_lambda: float = 0.5) -> np.ndarray:
    """M x len(grid) matrix of steering vectors."""
    grid = np.asarray(grid, dtype=float)
    m = np.arange(M)[:, None]
    phase = -2j * np.pi * d_over_lambda * np.sin(np.deg2rad(grid))[None, :]
    return np.exp(phase * m) / np.sqrt(M)


def draw_sources(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Row-sparse source matrix with iid uniform phases per source and snapshot."""
    X = np.zeros((scenario.grid.size, scenario.L), dtype=complex)
    mags = 10.0 ** (np.asarray(scenario.amplitudes_db) / 20.0)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(scenario.K, scenario.L))
    X[scenario.true_indices] = mags[:, None] * np.exp(1j * phases)
    return X


def calibrate_noise_variance(A, amplitudes_db, snr_db: float, L: int = 1) -> float:
    """Per-entry complex noise variance giving the requested SNR.

    The expected signal energy is ``L * sum(10**(dB/10))`` for unit-norm
    columns and independent uniform phases.
    """
    A = np.asarray(A)
    if not np.allclose(np.linalg.norm(A, axis=0), 1.0, atol=1e-9):
        raise ValueError("dictionary columns must have unit norm")
    M = A.shape[0]
    energy = L * np.sum(10.0 ** (np.asarray(amplitudes_db, dtype=float) / 10.0))
    return float(energy / (M * L * 10.0 ** (snr_db / 10.0)))


def _to_db(ratio: float) -> float:
    if ratio <= _EXACT_RATIO:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(ratio), NMSE_FLOOR_DB)


def debiased_nmse_smv(x_true, x_hat) -> float:
    """``min_c 10 log10(||x - c x_hat|| / ||x||)`` over a complex scalar ``c``.

    Note the ratio of norms (not squared norms) inside the logarithm.
    """
    x = np.asarray(x_true, dtype=complex).reshape(-1)
    xh = np.asarray(x_hat, dtype=complex).reshape(-1)
    nx = np.linalg.norm(x)
    if nx == 0:
        raise ValueError("x_true is all zero")
    den = np.vdot(xh, xh).real
    c = np.vdot(xh, x) / den if den > 0 else 0.0
    return _to_db(np.linalg.norm(x - c * xh) / nx)


def debiased_nmse_mmv(X_true, X_hat) -> float:
    """Debiased NMSE with a separate complex scale per row of ``X_hat``."""
    X = np.asarray(X_true, dtype=complex)
    Xh = np.asarray(X_hat, dtype=complex)
    if X.ndim == 1:
        X, Xh = X[:, None], Xh[:, None]
    nX = np.linalg.norm(X)
    if nX == 0:
        raise ValueError("X_true is all zero")
    den = np.sum(np.abs(Xh) ** 2, axis=1)
    num = np.sum(Xh.conj() * X, axis=1)
    c = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return _to_db(np.linalg.norm(X - c[:, None] * Xh) / nX)


def top_k_support(x_hat, K: int) -> np.ndarray:
    """Sorted indices of the ``K`` largest magnitudes (row norms for a matrix).

    Ties go to the lower index.
    """
    x_hat = np.asarray(x_hat)
    mag = np.linalg.norm(x_hat, axis=1) if x_hat.ndim == 2 else np.abs(x_hat)
    if K > mag.size:
        raise ValueError(f"K={K} exceeds the number of components {mag.size}")
    return np.sort(np.argsort(-mag, kind="stable")[:K])


def detection_success(support, scenario: Scenario) -> bool:
    """True iff the support equals the true-DOA grid indices exactly."""
    support = np.asarray(support).reshape(-1)
    if support.size != scenario.K:
        raise ValueError(f"support has {support.size} entries, expected K={scenario.K}")
    return set(support.tolist()) == set(scenario.true_indices.tolist())


@dataclass(frozen=True)
class Algorithm:
    """An estimator entry in a benchmark.

    ``kind`` is ``"bsbl"`` or ``"biht"``. ``mismatched`` feeds BSBL a unit
    noise variance instead of the true one. ``top_k`` zeroes everything
    outside the estimated top-K support before scoring. Entries differing
    only in ``name``/``top_k`` share one solver run per trial.
    """

    name: str
    kind: str = "bsbl"
    config: object = None
    mismatched: bool = False
    top_k: bool = False

    def __post_init__(self):
        if self.kind not in ("bsbl", "biht"):
            raise ValueError(f"unknown algorithm kind {self.kind!r}")

    @property
    def solve_key(self):
        return (self.kind, repr(self.config), self.mismatched)


@dataclass
class TrialResult:
    algorithm: str
    trial: int
    snr_db: float
    x_hat: np.ndarray | None
    nmse_db: float
    detected: bool
    support: np.ndarray | None
    runtime: float
    failed: bool = False
    error: str = ""


def _solve(alg: Algorithm, A: np.ndarray, sigma2: float, y_bar: np.ndarray, K: int):
    if alg.kind == "biht":
        if y_bar.shape[1] != 1:
            raise ValueError("BIHT is single-snapshot only")
        cfg = alg.config if alg.config is not None else BihtConfig(K=K)
        real = stack_model(ComplexLinearModel.white(A, 1.0))
        return biht_run(real, y_bar[:, 0], cfg)[:, None]
    noise = 1.0 if alg.mismatched else sigma2
    real = stack_model(ComplexLinearModel.white(A, noise))
    cfg = alg.config if alg.config is not None else SolverConfig()
    if y_bar.shape[1] == 1:
        return run_smv(real, y_bar, cfg)[0][:, None]
    return run_mmv(real, y_bar, cfg)[0]


def run_trial(scenario: Scenario, algorithms, rng: np.random.Generator, trial: int = 0,
              A: np.ndarray | None = None):
    """One realization: draw sources and noise, run and score every algorithm."""
    if A is None:
        A = build_dictionary(scenario.grid, scenario.M, scenario.d_over_lambda)
    X = draw_sources(scenario, rng)
    sigma2 = calibrate_noise_variance(A, scenario.amplitudes_db, scenario.snr_db, scenario.L)
    y_bar = synthesize(ComplexLinearModel.white(A, sigma2), X, rng).y_bar

    cache = {}
    results = []
    for alg in algorithms:
        key = alg.solve_key
        if key not in cache:
            t0 = time.perf_counter()
            try:
                cache[key] = (_solve(alg, A, sigma2, y_bar, scenario.K), None)
            except NumericalBreakdown as exc:
                log.warning("trial %d, %s: %s", trial, alg.name, exc)
                cache[key] = (None, str(exc))
            cache[key] += (time.perf_counter() - t0,)
        X_hat, err, runtime = cache[key]
        if X_hat is None:
            results.append(TrialResult(alg.name, trial, scenario.snr_db, None, float("nan"),
                                       False, None, runtime, failed=True, error=err))
            continue
        support = top_k_support(X_hat, scenario.K)
        if alg.top_k:
            masked = np.zeros_like(X_hat)
            masked[support] = X_hat[support]
            X_hat = masked
        if scenario.L == 1:
            nmse = debiased_nmse_smv(X[:, 0], X_hat[:, 0])
            X_hat = X_hat[:, 0]
        else:
            nmse = debiased_nmse_mmv(X, X_hat)
        results.append(TrialResult(alg.name, trial, scenario.snr_db, X_hat, nmse,
                                   detection_success(support, scenario), support, runtime))
    return results


@dataclass
class MonteCarloResult:
    scenario: Scenario
    trials: list
    bins: dict
    summary: list


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent, reproducible stream for one trial."""
    return np.random.default_rng([int(seed), int(trial)])


def run_monte_carlo(scenario: Scenario, algorithms, n_trials: int, seed: int | None = None,
                    threads: int = 1, keep_estimates: bool = True) -> MonteCarloResult:
    """Run ``n_trials`` independent trials and aggregate per algorithm.

    Trials may run on a thread pool; results are always reduced in trial
    order, so the output does not depend on ``threads``.
    """
    algorithms = list(algorithms)
    if not algorithms:
        raise ValueError("no algorithms given")
    names = [a.name for a in algorithms]
    if len(set(names)) != len(names):
        raise ValueError("algorithm names must be unique")
    seed = scenario.seed if seed is None else seed
    A = build_dictionary(scenario.grid, scenario.M, scenario.d_over_lambda)

    def one(t):
        res = run_trial(scenario, algorithms, trial_rng(seed, t), trial=t, A=A)
        if not keep_estimates:
            for r in res:
                r.x_hat = None
        return res

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_trial = list(pool.map(one, range(n_trials)))
    else:
        per_trial = [one(t) for t in range(n_trials)]
    trials = [r for res in per_trial for r in res]

    bins = {name: np.zeros(scenario.grid.size, dtype=int) for name in names}
    summary = []
    for name in names:
        rows = [r for r in trials if r.algorithm == name]
        ok = [r for r in rows if not r.failed]
        for r in ok:
            bins[name][r.support] += 1
        summary.append({
            "algorithm": name,
            "snr_db": scenario.snr_db,
            "mean_nmse_db": float(np.mean([r.nmse_db for r in ok])) if ok else float("nan"),
            "detection_rate": float(np.mean([r.detected for r in ok])) if ok else float("nan"),
            "mean_runtime_s": float(np.mean([r.runtime for r in ok])) if ok else float("nan"),
            "n_failed": len(rows) - len(ok),
        })
    return MonteCarloResult(scenario, trials, bins, summary)
