"""Unit tests for the four posterior targets.

Analytic gradients are checked against finite differences of the log
density, and every analytic divergence against the FD divergence oracle;
Kronecker-structured operators are checked against dense np.kron forms.
"""

import itertools

import numpy as np
import pytest

from geolangevin.datasets import gen_gaussian_dataset, gen_ica_sources, gen_logistic_dataset
from geolangevin.geometry import matrix_divergence_fd
from geolangevin.targets import (
    DomainError,
    GaussianLinearTarget,
    IcaTarget,
    LogisticRegressionTarget,
    NormalParamsTarget,
)


def fd_grad(fn, theta, eps=1e-6):
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = eps
        out[j] = (fn(theta + step) - fn(theta - step)) / (2.0 * eps)
    return out


@pytest.fixture(scope="module")
def gaussian_target():
    rng = np.random.default_rng(0)
    prior = np.diag([0.2, 0.5, 1.0])
    gx = 0.1 * np.eye(3)
    data = rng.standard_normal((10, 3))
    return GaussianLinearTarget(prior, gx, data)


@pytest.fixture(scope="module")
def normalparams_target():
    return NormalParamsTarget(np.random.default_rng(1).normal(0.0, 10.0, size=30))


@pytest.fixture(scope="module")
def logistic_target():
    data = gen_logistic_dataset(2, 40, 4)
    return LogisticRegressionTarget(data.features, data.labels, alpha=1.0)


@pytest.fixture(scope="module")
def ica_target():
    _, mixed, _ = gen_ica_sources(3, m=3, n=60)
    return IcaTarget(mixed.T)


# ---------------------------------------------------------------- gaussian

def test_gaussian_posterior_moments(gaussian_target):
    t = gaussian_target
    mu, prec = t.posterior_moments()
    expect_prec = t.prior_precision + t.data_size * t.data_precision
    assert np.allclose(prec, expect_prec)
    expect_mu = np.linalg.solve(expect_prec, t.data_precision @ t.data.sum(axis=0))
    assert np.allclose(mu, expect_mu)
    # gradient vanishes at the posterior mean
    assert np.allclose(t.grad_log(mu), 0.0, atol=1e-12)


def test_gaussian_grad_matches_fd(gaussian_target):
    theta = np.array([0.4, -1.0, 0.3])
    assert np.allclose(
        gaussian_target.grad_log(theta), fd_grad(gaussian_target.log_density, theta), atol=1e-5
    )


def test_gaussian_stacked_states(gaussian_target):
    thetas = np.random.default_rng(4).standard_normal((7, 3))
    stacked = gaussian_target.grad_log(thetas)
    assert stacked.shape == (7, 3)
    for i in range(7):
        assert np.array_equal(stacked[i], gaussian_target.grad_log(thetas[i]))


def test_gaussian_full_index_minibatch_equals_full(gaussian_target):
    theta = np.array([0.4, -1.0, 0.3])
    full = gaussian_target.grad_log(theta)
    batched = gaussian_target.grad_log(theta, batch=np.arange(gaussian_target.data_size))
    assert np.allclose(full, batched, atol=1e-12)


def test_gaussian_minibatch_unbiased_exhaustive(gaussian_target):
    theta = np.array([0.2, 0.1, -0.5])
    subsets = list(itertools.combinations(range(gaussian_target.data_size), 3))
    grads = np.array([gaussian_target.grad_log(theta, batch=np.array(s)) for s in subsets])
    assert np.allclose(grads.mean(axis=0), gaussian_target.grad_log(theta), atol=1e-12)


def test_gaussian_minibatch_validation(gaussian_target):
    theta = np.zeros(3)
    with pytest.raises(ValueError):
        gaussian_target.grad_log(theta, batch=np.array([], dtype=int))
    with pytest.raises(ValueError):
        gaussian_target.grad_log(theta, batch=np.array([99]))


def test_gaussian_metric_bundle_is_posterior_covariance(gaussian_target):
    t = gaussian_target
    bundle = t.metric_bundle()
    assert bundle.constant
    assert np.allclose(bundle.matrix(np.zeros(3)) @ t.posterior_precision, np.eye(3))
    assert np.array_equal(bundle.divergence(np.zeros(3)), np.zeros(3))


def test_gaussian_giirr_field_constant(gaussian_target):
    j = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.5], [0.0, -0.5, 0.0]])
    field = gaussian_target.giirr_field(j)
    c = field.matrix(np.zeros(3))
    assert np.allclose(c, 0.5 * (j @ gaussian_target.metric + gaussian_target.metric @ j))
    assert np.allclose(c, -c.T)
    assert np.array_equal(field.divergence(np.zeros(3)), np.zeros(3))


# ------------------------------------------------------------ normalparams

def test_normalparams_grad_matches_fd(normalparams_target):
    theta = np.array([1.2, 8.0])
    assert np.allclose(
        normalparams_target.grad_log(theta),
        fd_grad(normalparams_target.log_density, theta, eps=1e-5),
        rtol=1e-5,
    )


def test_normalparams_domain(normalparams_target):
    assert normalparams_target.in_domain(np.array([0.0, 1.0]))
    assert not normalparams_target.in_domain(np.array([0.0, -1.0]))
    with pytest.raises(DomainError):
        normalparams_target.log_density(np.array([0.0, -1.0]))
    with pytest.raises(DomainError):
        normalparams_target.grad_log(np.array([0.0, 0.0]))


def test_normalparams_metric_bundle(normalparams_target):
    t = normalparams_target
    bundle = t.metric_bundle()
    theta = np.array([0.5, 3.0])
    expect = (3.0**2 / t.data_size) * np.diag([1.0, 0.5])
    assert np.allclose(bundle.matrix(theta), expect)
    # analytic square-root factor satisfies S S^T = 2 beta B
    for beta in (0.5, 1.0):
        s = bundle.factor(theta, beta)
        assert np.allclose(s @ s.T, 2.0 * beta * expect)
    assert np.allclose(
        bundle.divergence(theta), matrix_divergence_fd(bundle.matrix, theta), atol=1e-6
    )


def test_normalparams_giirr_field(normalparams_target):
    t = normalparams_target
    skew = 2.0 * np.array([[0.0, 1.0], [-1.0, 0.0]])
    field = t.giirr_field(skew)
    theta = np.array([0.5, 3.0])
    c = field.matrix(theta)
    assert np.allclose(c, -c.swapaxes(-1, -2))
    # C = (J B + B J) / 2 for the Fisher metric B
    b = t.metric_bundle().matrix(theta)
    assert np.allclose(c, 0.5 * (skew @ b + b @ skew))
    assert np.allclose(field.divergence(theta), matrix_divergence_fd(field.matrix, theta), atol=1e-6)


def test_normalparams_minibatch_matches_fd(normalparams_target):
    t = normalparams_target
    theta = np.array([-0.3, 5.0])
    batch = np.array([0, 5, 7])
    # rescaled data sums computed by hand
    scale = t.data_size / batch.size
    resid = t.data[batch] - theta[0]
    expect = np.array(
        [scale * resid.sum() / theta[1] ** 2,
         -t.data_size / theta[1] + scale * (resid**2).sum() / theta[1] ** 3]
    )
    assert np.allclose(t.grad_log(theta, batch=batch), expect)


# ---------------------------------------------------------------- logistic

def test_logistic_grad_matches_fd(logistic_target):
    theta = 0.1 * np.arange(4) - 0.2
    assert np.allclose(
        logistic_target.grad_log(theta), fd_grad(logistic_target.log_density, theta), atol=1e-5
    )


def test_logistic_metric_shifted_positive(logistic_target):
    theta = np.array([0.3, -0.1, 0.2, 0.0])
    bundle = logistic_target.metric_bundle()
    b = bundle.matrix(theta)
    assert np.allclose(b, b.T)
    # B - I = G^{-1} is positive definite everywhere
    assert np.all(np.linalg.eigvalsh(b - np.eye(4)) > 0)


def test_logistic_metric_divergence_fd(logistic_target):
    bundle = logistic_target.metric_bundle()
    theta = np.array([0.2, 0.4, -0.3, 0.1])
    assert np.allclose(
        bundle.divergence(theta), matrix_divergence_fd(bundle.matrix, theta), atol=1e-5
    )


def test_logistic_giirr_divergence_fd(logistic_target):
    skew = np.array(
        [[0.0, 1.0, -0.5, 0.2], [-1.0, 0.0, 0.3, 0.0], [0.5, -0.3, 0.0, 1.0], [-0.2, 0.0, -1.0, 0.0]]
    )
    field = logistic_target.giirr_field(skew)
    theta = np.array([0.1, -0.2, 0.3, 0.05])
    assert np.allclose(field.matrix(theta), -field.matrix(theta).T)
    assert np.allclose(
        field.divergence(theta), matrix_divergence_fd(field.matrix, theta), atol=1e-5
    )


def test_logistic_fisher_metric_manual(logistic_target):
    t = logistic_target
    theta = np.zeros(4)
    p = 1.0 / (1.0 + np.exp(-t.features @ theta))
    lam = p * (1.0 - p)
    expect = np.eye(4) / t.alpha + (t.features.T * lam) @ t.features
    assert np.allclose(t.fisher_metric(theta), expect)


def test_logistic_minibatch_full_equality(logistic_target):
    theta = 0.05 * np.ones(4)
    full = logistic_target.grad_log(theta)
    batched = logistic_target.grad_log(theta, batch=np.arange(logistic_target.data_size))
    assert np.allclose(full, batched, atol=1e-12)


def test_logistic_rejects_bad_alpha():
    with pytest.raises(ValueError):
        LogisticRegressionTarget(np.ones((4, 2)), np.zeros(4), alpha=0.0)
    with pytest.raises(ValueError):
        LogisticRegressionTarget(np.ones((4, 2)), np.zeros(3))


# --------------------------------------------------------------------- ica

def test_ica_vec_roundtrip_column_major(ica_target):
    w = np.arange(9.0).reshape(3, 3)
    v = ica_target.to_vec(w)
    assert np.array_equal(v, w.flatten(order="F"))
    assert np.array_equal(ica_target.to_matrix(v), w)


def test_ica_grad_matches_fd(ica_target):
    rng = np.random.default_rng(6)
    theta = ica_target.to_vec(np.eye(3) + 0.1 * rng.standard_normal((3, 3)))
    assert np.allclose(
        ica_target.grad_log(theta), fd_grad(ica_target.log_density, theta, eps=1e-5), rtol=1e-4
    )


def test_ica_metric_is_kron(ica_target):
    rng = np.random.default_rng(7)
    w = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
    theta = ica_target.to_vec(w)
    s = np.eye(3) + w.T @ w
    bundle = ica_target.metric_bundle()
    # (S kron I) acting on column-major vec(W) is vec(W S)
    assert np.allclose(bundle.matrix(theta), np.kron(s, np.eye(3)))
    assert np.allclose(bundle.matrix(theta) @ theta, ica_target.to_vec(w @ s))
    assert np.allclose(bundle.divergence(theta), 4.0 * theta)
    factor = bundle.factor(theta, 0.5)
    assert np.allclose(factor @ factor.T, bundle.matrix(theta))


def test_ica_metric_divergence_fd(ica_target):
    bundle = ica_target.metric_bundle()
    theta = ica_target.to_vec(np.eye(3) + 0.1 * np.random.default_rng(8).standard_normal((3, 3)))
    assert np.allclose(
        bundle.divergence(theta), matrix_divergence_fd(bundle.matrix, theta), atol=1e-5
    )


def test_ica_scaled_skew_norm(ica_target):
    for delta in (0.5, 1.0, 3.0):
        c0 = ica_target.scaled_skew(delta)
        j = ica_target.kron_skew(c0)
        assert np.allclose(j, -j.T)
        assert np.isclose(np.linalg.norm(j, ord=2), delta)


def test_ica_kron_skew_dense(ica_target):
    c0 = ica_target.scaled_skew(1.0)
    expect = np.kron(np.eye(3), c0) + np.kron(c0, np.eye(3))
    assert np.allclose(ica_target.kron_skew(c0), expect)


def test_ica_giirr_field(ica_target):
    c0 = ica_target.scaled_skew(1.0)
    field = ica_target.giirr_field(c0)
    rng = np.random.default_rng(9)
    w = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
    theta = ica_target.to_vec(w)
    c = field.matrix(theta)
    assert np.allclose(c, -c.T)
    # C = (J B + B J) / 2 with B = S kron I and J the Kronecker skew
    b = ica_target.metric_bundle().matrix(theta)
    j = ica_target.kron_skew(c0)
    assert np.allclose(c, 0.5 * (j @ b + b @ j))
    assert np.allclose(field.divergence(theta), matrix_divergence_fd(field.matrix, theta), atol=1e-5)


def test_ica_domain(ica_target):
    assert ica_target.domain_policy == "abort"
    singular = ica_target.to_vec(np.zeros((3, 3)))
    assert not ica_target.in_domain(singular)
    with pytest.raises(DomainError):
        ica_target.grad_log(singular)
    assert ica_target.in_domain(ica_target.to_vec(np.eye(3)))


def test_ica_minibatch_full_equality(ica_target):
    theta = ica_target.to_vec(np.eye(3))
    full = ica_target.grad_log(theta)
    batched = ica_target.grad_log(theta, batch=np.arange(ica_target.data_size))
    assert np.allclose(full, batched, atol=1e-10)
