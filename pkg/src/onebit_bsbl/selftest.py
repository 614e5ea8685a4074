"""Quick numerical self-checks of the BSBL core against closed-form oracles."""

from __future__ import annotations

import math

import numpy as np

from . import bsbl
from .model import ComplexLinearModel, RealStackedModel, stack_model, synthesize


def _scalar_oracle():
    # x, w iid N(0, 1), y = sgn(x + w) = +1: E[x | y] = 1/sqrt(pi), Var = 1 - 1/pi
    out = bsbl.e_step(RealStackedModel([[1.0]], [[1.0]]), [1.0], [1.0])
    err = max(abs(out.mu_post[0, 0] - 1 / math.sqrt(math.pi)),
              abs(out.Sigma_post[0, 0] - (1 - 1 / math.pi)))
    return err <= 1e-12, f"max error {err:.2e}"


def _arcsine():
    out = bsbl.e_step(RealStackedModel([[1.0], [1.0]], 0.5 * np.eye(2)), [2.0], [1.0, 1.0])
    expected = np.array([[1.0, 1.0 / 3.0], [1.0 / 3.0, 1.0]])
    err = float(np.max(np.abs(out.C_y_bar - expected)))
    return err <= 1e-12, f"max error {err:.2e}"


def _small_problem(seed=0, L=1):
    rng = np.random.default_rng(seed)
    M, N = 16, 24
    A = (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) / math.sqrt(2 * M)
    X = np.zeros((N, L), complex)
    X[[2, 11, 19]] = 3.0 * np.exp(2j * math.pi * rng.random((3, L)))
    m = ComplexLinearModel.white(A, 0.2)
    return stack_model(m), synthesize(m, X, rng).y_bar


def _rescaling():
    model, y = _small_problem(1)
    s = 4.0
    cfg = bsbl.SolverConfig(T=40)
    x1, _ = bsbl.run_smv(model, y, cfg)
    x2, _ = bsbl.run_smv(model.with_noise(model.C_w_bar / s), y,
                         bsbl.SolverConfig(T=40, alpha_init=s))
    err = float(np.max(np.abs(x2 * math.sqrt(s) - x1)) / np.max(np.abs(x1)))
    return err <= 1e-8, f"relative error {err:.2e}"


def _mmv_single_snapshot():
    model, y = _small_problem(2)
    cfg = bsbl.SolverConfig(T=40)
    x_s, _ = bsbl.run_smv(model, y, cfg)
    x_m, _ = bsbl.run_mmv(model, y, cfg)
    err = float(np.max(np.abs(x_m[:, 0] - x_s)))
    return err <= 1e-12, f"max error {err:.2e}"


def _em_fixed_point():
    rng = np.random.default_rng(3)
    L, n2 = 4, 5
    mu = rng.standard_normal((n2, L))
    S = rng.uniform(0.1, 1.0, n2)
    alpha = bsbl.m_step_mmv(mu, S, 1.0, 0.0, L)
    q0 = bsbl.q_value(alpha, mu, S, 1.0, 0.0, L)
    worse = all(
        bsbl.q_value(alpha * np.where(np.arange(n2) == i, f, 1.0), mu, S, 1.0, 0.0, L) < q0
        for i in range(n2) for f in (0.999, 1.001)
    )
    return worse, "perturbations lower Q" if worse else "a perturbation raised Q"


CHECKS = [
    ("scalar E-step oracle", _scalar_oracle),
    ("arcsine law", _arcsine),
    ("joint rescaling", _rescaling),
    ("MMV at L=1 equals SMV", _mmv_single_snapshot),
    ("EM fixed point", _em_fixed_point),
]


def run_selftest(stream=None) -> int:
    """Run every check, print one line each; return the number of failures."""
    failures = 0
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failed check, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}", file=stream)
    return failures
