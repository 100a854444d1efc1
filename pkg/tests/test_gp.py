import math

import numpy as np
import pytest

from llinbo.gp import (
    _factorize,
    as_design,
    Dataset,
    GPFitError,
    KernelSpec,
    fantasy_models,
    fantasy_update,
    fit_gp,
    kernel_eval,
    kernel_matrix,
    posterior,
    sample_at,
    with_data,
)


def dense_posterior(spec, noise, X, y, Xs):
    # textbook formulas with an explicit inverse
    K = kernel_matrix(spec, X, X) + noise * np.eye(len(X))
    Ks = kernel_matrix(spec, X, Xs)
    Kinv = np.linalg.inv(K)
    mean = spec.mean_constant + Ks.T @ Kinv @ (y - spec.mean_constant)
    var = spec.signal_variance - np.einsum("ij,ik,kj->j", Ks, Kinv, Ks)
    return mean, var


def test_matern_unit_distance():
    spec = KernelSpec("Matern52ARD", [1.0])
    expected = (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))
    assert kernel_eval(spec, [0.0], [1.0]) == pytest.approx(expected, abs=1e-15)
    assert kernel_eval(spec, [0.3], [0.3]) == 1.0


def test_rbf_ard_uses_each_lengthscale():
    spec = KernelSpec("RBFARD", [0.5, 2.0], signal_variance=2.0)
    expected = 2.0 * math.exp(-0.5 * ((0.4 / 0.5) ** 2 + (0.6 / 2.0) ** 2))
    assert kernel_eval(spec, [0.1, 0.2], [0.5, 0.8]) == pytest.approx(expected, rel=1e-14)


def test_kernel_dimension_mismatch():
    with pytest.raises(ValueError):
        kernel_eval(KernelSpec("RBFARD", [1.0, 1.0]), [0.1], [0.2, 0.3])


def test_gram_is_psd(rng):
    X = rng.random((30, 3))
    for fam in ("Matern52ARD", "RBFARD"):
        K = kernel_matrix(KernelSpec(fam, [0.2, 0.4, 0.9]), X, X)
        np.testing.assert_allclose(K, K.T, atol=0)
        assert np.linalg.eigvalsh(K).min() > -1e-10


def test_cholesky_path_matches_dense_inverse(small_model, rng):
    Xs = rng.random((25, 2))
    m, v = small_model.predict(Xs)
    dm, dv = dense_posterior(small_model.spec, 1e-4, small_model.data.X, small_model.data.y, Xs)
    np.testing.assert_allclose(m, dm, atol=1e-8)
    np.testing.assert_allclose(v, dv, atol=1e-8)


def test_empty_model_is_prior():
    spec = KernelSpec("Matern52ARD", [0.5], 2.5, -1.0)
    model = fit_gp(Dataset.empty(1), spec=spec)
    assert posterior(model, [0.4]) == (-1.0, 2.5)


def test_variance_shrinks_with_data(small_model, rng):
    Xs = rng.random((40, 2))
    _, v0 = small_model.predict(Xs)
    bigger = with_data(small_model, small_model.data.append([0.5, 0.5], 0.1))
    _, v1 = bigger.predict(Xs)
    assert np.all(v1 <= v0 + 1e-12)
    assert np.all(v1 >= 0)


def test_mle_fit_is_reasonable(rng):
    X = rng.random((15, 2))
    y = np.sin(5 * X[:, 0]) * np.cos(3 * X[:, 1])
    model = fit_gp(Dataset(X, y))
    assert np.all((model.spec.lengthscales >= 1e-2 - 1e-12) & (model.spec.lengthscales <= 1e2 + 1e-12))
    # near-interpolation at the training inputs
    np.testing.assert_allclose(model.mean(X), y, atol=1e-2)


def test_mle_needs_data():
    with pytest.raises(ValueError):
        fit_gp(Dataset.empty(2))


def test_duplicate_points_factorize():
    X = np.array([[0.2, 0.2]] * 4)
    model = fit_gp(Dataset(X, np.ones(4)), 1e-12, KernelSpec("RBFARD", [0.3, 0.3]))
    assert np.all(np.isfinite(model.alpha))
    assert posterior(model, [0.2, 0.2])[0] == pytest.approx(1.0, abs=1e-3)


def test_jitter_escalation():
    K = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-7]])
    L, jitter = _factorize(K, 1e-12)
    assert 1e-10 <= jitter <= 1e-4
    np.testing.assert_allclose(L @ L.T, K + (1e-12 + jitter) * np.eye(2), atol=1e-12)


def test_indefinite_beyond_jitter_raises():
    with pytest.raises(GPFitError):
        _factorize(np.array([[1.0, 2.0], [2.0, 1.0]]), 1e-6)


def test_fantasy_batch_matches_sequential(small_model):
    x = np.array([0.61, 0.27])
    outs = [-0.5, 0.3, 2.0]
    batch = fantasy_models(small_model, x, outs)
    probes = np.random.default_rng(0).random((10, 2))
    for y, fm in zip(outs, batch):
        ref = with_data(small_model, small_model.data.append(x, y))
        np.testing.assert_allclose(fm.predict(probes)[0], ref.predict(probes)[0], atol=1e-9)
        np.testing.assert_allclose(fm.predict(probes)[1], ref.predict(probes)[1], atol=1e-9)


def test_fantasy_variance_independent_of_outcome(small_model):
    x = [0.1, 0.9]
    a, b = fantasy_update(small_model, x, -3.0), fantasy_update(small_model, x, 4.0)
    probes = np.random.default_rng(1).random((20, 2))
    np.testing.assert_array_equal(a.variance(probes), b.variance(probes))


def test_fantasy_on_existing_design(small_model):
    x = small_model.data.X[0]
    fm = fantasy_update(small_model, x, 0.0)
    assert fm.n == small_model.n + 1


def test_sampling_moments(small_model):
    x = [0.33, 0.66]
    m, v = posterior(small_model, x)
    s = np.array(sample_at(small_model, x, 20000, 5))
    assert abs(s.mean() - m) < 5 * math.sqrt(v / 20000)
    assert s.std() == pytest.approx(math.sqrt(v), rel=0.05)
    assert sample_at(small_model, x, 3, 9) == sample_at(small_model, x, 3, 9)


def test_design_outside_domain_rejected():
    with pytest.raises(ValueError):
        as_design([1.2, 0.0])
    with pytest.raises(ValueError):
        Dataset.empty(2).append([0.5, -0.1], 0.0)
