import numpy as np
import pytest

from onebit_bsbl.baselines import BihtConfig, biht_run, hard_threshold_complex
from onebit_bsbl.model import ComplexLinearModel, RealStackedModel, csgn, stack_model, stack_vector, synthesize


def gaussian_instance(seed, M=100, N=40, sigma2=0.0):
    rng = np.random.default_rng(seed)
    A = (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) / np.sqrt(2 * M)
    x = np.zeros(N, complex)
    x[[3, 17, 30]] = [1 + 1j, -2 + 0.5j, 0.7j]
    m = ComplexLinearModel.white(A, sigma2)
    return stack_model(m), synthesize(m, x, rng).y_bar[:, 0], x


def test_threshold_pairs_real_and_imaginary():
    x = stack_vector(np.array([3 + 0j, 0 + 2.5j, 1 + 1j, 2 + 2j]))
    out = hard_threshold_complex(x, 2)
    np.testing.assert_array_equal(out, stack_vector(np.array([3, 0, 0, 2 + 2j])))


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("K", [1, 3, 5])
def test_sparsity_and_unit_norm(seed, K):
    model, y, _ = gaussian_instance(seed, sigma2=0.5)
    x_hat = biht_run(model, y, BihtConfig(K=K))
    assert np.count_nonzero(x_hat) == K
    assert np.linalg.norm(x_hat) == pytest.approx(1.0, abs=1e-12)


def test_identity_one_sparse():
    # A = I_2, x = e_1: y = csgn(x) = [1+1j, 1+1j] is consistent with x = 0, so the
    # first residual vanishes and the matched filter (tie -> lower index) decides
    model = stack_model(ComplexLinearModel(np.eye(2), np.zeros((2, 2))))
    y = stack_vector(csgn(np.array([1.0, 0.0])))
    x_hat = biht_run(model, y, BihtConfig(K=1, iters=10))
    assert np.flatnonzero(x_hat).tolist() == [0]


def test_noiseless_support_recovery():
    model, y, x = gaussian_instance(4)
    x_hat = biht_run(model, y, BihtConfig(K=3))
    assert set(np.flatnonzero(x_hat)) == {3, 17, 30}


def test_hamming_nonincreasing_at_end():
    model, y, _ = gaussian_instance(0)
    _, hamming = biht_run(model, y, BihtConfig(K=3, iters=100), return_trace=True)
    tail = hamming[-10:]
    assert all(b <= a for a, b in zip(tail, tail[1:]))


def test_scale_invariance():
    model, y, _ = gaussian_instance(5, sigma2=0.3)
    s = 2.0
    scaled = RealStackedModel(s * model.A_bar, model.C_w_bar)
    x1 = biht_run(model, y, BihtConfig(K=3, tau=1.0))
    x2 = biht_run(scaled, y, BihtConfig(K=3, tau=1.0 / s))
    np.testing.assert_allclose(x1, x2, rtol=0, atol=1e-12)


def test_all_plus_measurements():
    model = stack_model(ComplexLinearModel(np.eye(2), np.zeros((2, 2))))
    x_hat = biht_run(model, np.ones(4), BihtConfig(K=1))
    assert np.count_nonzero(x_hat) == 1


@pytest.mark.parametrize("kw", [dict(K=0), dict(K=1, tau=0), dict(K=1, iters=0)])
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        BihtConfig(**kw)


def test_rejects_non_binary():
    model, y, _ = gaussian_instance(0)
    with pytest.raises(ValueError):
        biht_run(model, 0.5 * y, BihtConfig(K=1))
