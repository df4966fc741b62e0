"""Posterior models: Gaussian-linear, normal parameters, logistic regression, ICA.

Every target exposes the same surface: an unnormalized ``log_density``,
a ``grad_log`` that optionally takes minibatch indices (prior terms are
never subsampled; data sums are rescaled by N/n), and, where a geometry
is defined, a :class:`~geolangevin.geometry.MetricBundle` plus the
geometry-informed skew field used by the GiIrr dynamics.  All evaluation
functions accept stacked states with leading batch axes, which is what
lets ensembles of chains step in lockstep.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .geometry import (
    DecompositionError,
    IrrField,
    MetricBundle,
    giirr_matrix,
    metric_factor,
    validate_divergence,
)


class DomainError(ValueError):
    """Evaluation requested outside the target's support."""


def _sigmoid(y):
    return 0.5 * (1.0 + np.tanh(0.5 * y))


class TargetModel:
    """Common surface for all posterior models."""

    dim: int
    data_size: int

    def log_density(self, theta):
        raise NotImplementedError

    def grad_log(self, theta, batch=None):
        raise NotImplementedError

    def in_domain(self, theta):
        """Boolean mask over leading axes; True where the state is admissible."""
        theta = np.asarray(theta)
        return np.ones(theta.shape[:-1], dtype=bool)

    def metric_bundle(self) -> MetricBundle:
        raise NotImplementedError(f"{type(self).__name__} has no geometry bundle")

    def giirr_field(self, skew) -> IrrField:
        raise NotImplementedError(f"{type(self).__name__} has no geometry bundle")

    def _check_batch(self, batch):
        batch = np.asarray(batch)
        if batch.size == 0:
            raise ValueError("minibatch must be nonempty")
        if batch.min() < 0 or batch.max() >= self.data_size:
            raise ValueError("minibatch indices out of range")
        return batch


class GaussianLinearTarget(TargetModel):
    """Conjugate Gaussian posterior for the mean of normal data.

    Data X_1..X_N with known precision ``data_precision``, zero-mean
    Gaussian prior with precision ``prior_precision``.  The posterior is
    Gaussian with precision Gamma_p = Gamma_theta + N Gamma_X, and the
    default metric is the posterior covariance Gamma_p^{-1} (constant).
    """

    def __init__(self, prior_precision, data_precision, data, metric=None):
        self.prior_precision = np.asarray(prior_precision, dtype=float)
        self.data_precision = np.asarray(data_precision, dtype=float)
        self.data = np.atleast_2d(np.asarray(data, dtype=float))
        self.dim = self.prior_precision.shape[0]
        self.data_size = self.data.shape[0]
        self.posterior_precision = self.prior_precision + self.data_size * self.data_precision
        try:
            np.linalg.cholesky(self.posterior_precision)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError("posterior precision is not SPD") from exc
        self._data_sum = self.data.sum(axis=0)
        self._lin = self.data_precision @ self._data_sum
        if metric is None:
            metric = np.linalg.inv(self.posterior_precision)
        self.metric = np.asarray(metric, dtype=float)

    def posterior_moments(self):
        """Exact posterior mean and precision."""
        mu = np.linalg.solve(self.posterior_precision, self._lin)
        return mu, self.posterior_precision.copy()

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        quad = np.einsum("...i,ij,...j->...", theta, self.posterior_precision, theta)
        return -0.5 * quad + theta @ self._lin

    def grad_log(self, theta, batch=None):
        # einsum keeps per-chain arithmetic identical for any stacking,
        # which the bitwise determinism contract relies on
        theta = np.asarray(theta, dtype=float)
        grad = -np.einsum("ij,...j->...i", self.posterior_precision, theta)
        if batch is None:
            return grad + self._lin
        batch = self._check_batch(batch)
        scale = self.data_size / batch.shape[-1]
        sub = self.data[batch].sum(axis=-2) * scale
        return grad + np.einsum("ij,...j->...i", self.data_precision, sub)

    def metric_bundle(self) -> MetricBundle:
        b = self.metric
        zero = np.zeros(self.dim)
        return MetricBundle(
            matrix=lambda theta: b,
            divergence=lambda theta: zero,
            constant=True,
        )

    def giirr_field(self, skew) -> IrrField:
        c = giirr_matrix(self.metric, np.asarray(skew, dtype=float))
        zero = np.zeros(self.dim)
        return IrrField(matrix=lambda theta: c, divergence=lambda theta: zero, constant=True)


class NormalParamsTarget(TargetModel):
    """Posterior over (mu, sigma) of scalar normal data under a flat prior.

    State theta = [mu, sigma] with sigma > 0.  The metric is the inverse
    expected Fisher information, B = (sigma^2/N) diag(1, 1/2), with
    div B = [0, sigma/N].
    """

    dim = 2

    def __init__(self, data):
        self.data = np.asarray(data, dtype=float).ravel()
        self.data_size = self.data.shape[0]

    def _split(self, theta):
        theta = np.asarray(theta, dtype=float)
        return theta[..., 0], theta[..., 1]

    def in_domain(self, theta):
        return np.asarray(theta)[..., 1] > 0.0

    def log_density(self, theta):
        mu, sigma = self._split(theta)
        if np.any(sigma <= 0):
            raise DomainError("sigma must be positive")
        m2 = ((self.data - mu[..., None]) ** 2).sum(axis=-1)
        return -self.data_size * np.log(sigma) - m2 / (2.0 * sigma**2)

    def grad_log(self, theta, batch=None):
        mu, sigma = self._split(theta)
        if np.any(sigma <= 0):
            raise DomainError("sigma must be positive")
        if batch is None:
            resid = self.data - mu[..., None]
            m1 = resid.sum(axis=-1)
            m2 = (resid**2).sum(axis=-1)
        else:
            batch = self._check_batch(batch)
            scale = self.data_size / batch.shape[-1]
            resid = self.data[batch] - mu[..., None]
            m1 = scale * resid.sum(axis=-1)
            m2 = scale * (resid**2).sum(axis=-1)
        grad_mu = m1 / sigma**2
        grad_sigma = -self.data_size / sigma + m2 / sigma**3
        return np.stack([grad_mu, grad_sigma], axis=-1)

    def metric_bundle(self) -> MetricBundle:
        n = self.data_size
        diag = np.array([1.0, 0.5])
        sqrt_diag = np.array([1.0, 1.0 / np.sqrt(2.0)])

        def matrix(theta):
            sigma = np.asarray(theta)[..., 1]
            return (sigma[..., None, None] ** 2 / n) * np.eye(2) * diag

        def divergence(theta):
            sigma = np.asarray(theta)[..., 1]
            zeros = np.zeros_like(sigma)
            return np.stack([zeros, sigma / n], axis=-1)

        def sqrt_factor(theta, beta):
            sigma = np.asarray(theta)[..., 1]
            scale = np.sqrt(2.0 * beta / n) * sigma
            return scale[..., None, None] * np.eye(2) * sqrt_diag

        bundle = MetricBundle(matrix=matrix, divergence=divergence, sqrt_factor=sqrt_factor)
        validate_divergence(matrix, divergence, np.array([0.3, 1.7]))
        return bundle

    def giirr_field(self, skew) -> IrrField:
        skew = np.asarray(skew, dtype=float)
        n = self.data_size
        j01 = skew[0, 1]

        def matrix(theta):
            sigma = np.asarray(theta)[..., 1]
            return (3.0 * sigma[..., None, None] ** 2 / (4.0 * n)) * skew

        def divergence(theta):
            sigma = np.asarray(theta)[..., 1]
            first = 3.0 * sigma * j01 / (2.0 * n)
            return np.stack([first, np.zeros_like(sigma)], axis=-1)

        field = IrrField(matrix=matrix, divergence=divergence)
        validate_divergence(matrix, divergence, np.array([0.3, 1.7]))
        return field


class LogisticRegressionTarget(TargetModel):
    """Bayesian logistic regression with a Gaussian prior on the weights.

    Features x_i in R^d, labels t_i in {0,1}, prior precision alpha.
    The metric is B(w) = I + G(w)^{-1} with G the Fisher-plus-prior
    matrix G(w) = alpha^{-1} I + X Lambda(w) X^T, which keeps B - I
    positive definite everywhere.
    """

    def __init__(self, features, labels, alpha=1.0):
        if alpha <= 0:
            raise ValueError("prior precision alpha must be positive")
        self.features = np.atleast_2d(np.asarray(features, dtype=float))
        self.labels = np.asarray(labels, dtype=float).ravel()
        self.alpha = float(alpha)
        self.data_size, self.dim = self.features.shape
        if self.labels.shape[0] != self.data_size:
            raise ValueError("feature/label count mismatch")
        self._validated = False

    def _margins(self, w):
        return np.einsum("nd,...d->...n", self.features, w)

    def log_density(self, theta):
        w = np.asarray(theta, dtype=float)
        y = self._margins(w)
        fit = (self.labels * y).sum(axis=-1) - np.logaddexp(0.0, y).sum(axis=-1)
        return fit - 0.5 * self.alpha * (w**2).sum(axis=-1)

    def grad_log(self, theta, batch=None):
        w = np.asarray(theta, dtype=float)
        if batch is None:
            y = self._margins(w)
            resid = self.labels - _sigmoid(y)
            data_term = np.einsum("...n,nd->...d", resid, self.features)
        else:
            batch = self._check_batch(batch)
            scale = self.data_size / batch.shape[-1]
            xb = self.features[batch]
            tb = self.labels[batch]
            y = np.einsum("...nd,...d->...n", xb, w)
            resid = tb - _sigmoid(y)
            data_term = scale * np.einsum("...n,...nd->...d", resid, xb)
        return -self.alpha * w + data_term

    def fisher_metric(self, theta):
        """G(w) = alpha^{-1} I + sum_n lambda_n(w) x_n x_n^T."""
        w = np.asarray(theta, dtype=float)
        p = _sigmoid(self._margins(w))
        lam = p * (1.0 - p)
        g = np.einsum("...n,ni,nj->...ij", lam, self.features, self.features)
        return g + np.eye(self.dim) / self.alpha

    def _solve_columns(self, theta):
        """G(w)^{-1} x_n for all n, plus the weights entering div B."""
        w = np.asarray(theta, dtype=float)
        p = _sigmoid(self._margins(w))
        lam = p * (1.0 - p)
        c = lam * (1.0 - 2.0 * p)
        g = self.fisher_metric(w)
        cols = np.linalg.solve(g, np.broadcast_to(self.features.T, g.shape[:-2] + self.features.T.shape))
        return cols, c

    def metric_bundle(self) -> MetricBundle:
        def matrix(theta):
            g = self.fisher_metric(theta)
            return np.eye(self.dim) + np.linalg.inv(g)

        def divergence(theta):
            cols, c = self._solve_columns(theta)
            quad = np.einsum("nd,...dn->...n", self.features, cols)
            return -np.einsum("...n,...dn->...d", c * quad, cols)

        bundle = MetricBundle(matrix=matrix, divergence=divergence)
        if not self._validated:
            probe = 0.1 * np.arange(self.dim) / max(self.dim - 1, 1) - 0.05
            validate_divergence(matrix, divergence, probe)
            self._validated = True
        return bundle

    def giirr_field(self, skew) -> IrrField:
        skew = np.asarray(skew, dtype=float)
        bundle = self.metric_bundle()

        def matrix(theta):
            return giirr_matrix(bundle.matrix(theta), skew)

        def divergence(theta):
            # div(JB) = J div B for constant J; div(BJ) needs the full
            # derivative tensor of B, contracted against J.
            cols, c = self._solve_columns(theta)
            jx = self.features @ skew.T  # row n holds (J x_n)^T
            inner = np.einsum("...dn,nd->...n", cols, jx)
            bj_term = -np.einsum("...n,...dn->...d", c * inner, cols)
            j_divb = np.einsum("ed,...d->...e", skew, bundle.divergence(theta))
            return 0.5 * (j_divb + bj_term)

        field = IrrField(matrix=matrix, divergence=divergence)
        probe = 0.1 * np.arange(self.dim) / max(self.dim - 1, 1) - 0.05
        validate_divergence(matrix, divergence, probe)
        return field


class IcaTarget(TargetModel):
    """Bayesian ICA: posterior over the unmixing matrix W.

    Observed rows x_n in R^m are treated as mixtures; the likelihood of
    the unmixed coordinates y = W x is the logistic-shaped density
    (1/4) sech^2(y/2), the prior on each entry of W is Gaussian with
    precision ``weight_precision``, and the state is vec(W) in
    column-major order (so Kronecker identities read as in the natural-
    gradient literature).  The metric is B(W) = (I + W^T W) kron I.
    """

    # resampling noise near a singular W just stalls the chain, so abort
    domain_policy = "abort"

    def __init__(self, mixed, weight_precision=1.0):
        self.mixed = np.atleast_2d(np.asarray(mixed, dtype=float))
        self.data_size, self.signal_dim = self.mixed.shape
        self.weight_precision = float(weight_precision)
        self.dim = self.signal_dim**2
        self._validated = False

    # -- vec / unvec in column-major order ---------------------------------
    def to_matrix(self, theta):
        m = self.signal_dim
        theta = np.asarray(theta, dtype=float)
        return theta.reshape(theta.shape[:-1] + (m, m)).swapaxes(-1, -2)

    def to_vec(self, w):
        m = self.signal_dim
        w = np.asarray(w, dtype=float)
        return w.swapaxes(-1, -2).reshape(w.shape[:-2] + (m * m,))

    def in_domain(self, theta):
        det = np.linalg.det(self.to_matrix(theta))
        return np.abs(det) >= 1e-12

    def log_density(self, theta):
        w = self.to_matrix(theta)
        sign, logdet = np.linalg.slogdet(w)
        if np.any(sign == 0):
            raise DomainError("W is singular")
        y = np.einsum("...ij,nj->...in", w, self.mixed)
        fit = -2.0 * np.log(np.cosh(0.5 * y)).sum(axis=(-1, -2))
        prior = -0.5 * self.weight_precision * (w**2).sum(axis=(-1, -2))
        return self.data_size * logdet + fit + prior

    def _grad_matrix(self, w, batch=None):
        det = np.linalg.det(w)
        if np.any(np.abs(det) < 1e-12):
            cond = np.linalg.cond(w)
            raise DomainError(f"W is numerically singular (cond={np.max(cond):.3e})")
        winv_t = np.linalg.inv(w).swapaxes(-1, -2)
        if batch is None:
            x = self.mixed
            scale = 1.0
            y = np.einsum("...ij,nj->...in", w, x)
            data_term = np.einsum("...in,nj->...ij", np.tanh(0.5 * y), x)
        else:
            batch = self._check_batch(batch)
            scale = self.data_size / batch.shape[-1]
            x = self.mixed[batch]
            y = np.einsum("...ij,...nj->...in", w, x)
            data_term = np.einsum("...in,...nj->...ij", np.tanh(0.5 * y), x)
        return (
            self.data_size * winv_t
            - scale * data_term
            - self.weight_precision * w
        )

    def grad_log(self, theta, batch=None):
        w = self.to_matrix(theta)
        return self.to_vec(self._grad_matrix(w, batch))

    # -- Kronecker helpers --------------------------------------------------
    def _kron_right(self, s):
        """Dense (S kron I) acting on column-major vec(W)."""
        m = self.signal_dim
        eye = np.eye(m)
        z = s[..., :, None, :, None] * eye[None, :, None, :]
        return z.reshape(s.shape[:-2] + (m * m, m * m))

    def _kron_left(self, a):
        """Dense (I kron A) acting on column-major vec(W)."""
        m = self.signal_dim
        eye = np.eye(m)
        z = eye[:, None, :, None] * a[..., None, :, None, :]
        return z.reshape(a.shape[:-2] + (m * m, m * m))

    def kron_skew(self, c0):
        """J = (I kron C0) + (C0 kron I) as a dense d^2 x d^2 matrix."""
        c0 = np.asarray(c0, dtype=float)
        return self._kron_left(c0) + self._kron_right(c0)

    def scaled_skew(self, delta=1.0):
        """C0 with the all-ones sign pattern, scaled so ||J||_2 = delta."""
        m = self.signal_dim
        upper = np.triu(np.ones((m, m)), k=1)
        c0 = upper - upper.T
        j = self.kron_skew(c0)
        return delta * c0 / np.linalg.norm(j, ord=2)

    def metric_bundle(self) -> MetricBundle:
        m = self.signal_dim

        def gram(theta):
            w = self.to_matrix(theta)
            return np.eye(m) + w.swapaxes(-1, -2) @ w

        def matrix(theta):
            return self._kron_right(gram(theta))

        def divergence(theta):
            return (m + 1.0) * np.asarray(theta, dtype=float)

        def sqrt_factor(theta, beta):
            chol = np.linalg.cholesky(2.0 * beta * gram(theta))
            return self._kron_right(chol)

        bundle = MetricBundle(matrix=matrix, divergence=divergence, sqrt_factor=sqrt_factor)
        if not self._validated:
            rng = np.random.default_rng(7)
            probe = rng.standard_normal(self.dim)
            validate_divergence(matrix, divergence, probe)
            self._validated = True
        return bundle

    def giirr_field(self, c0) -> IrrField:
        """Geometry-informed skew field for J = (I kron C0) + (C0 kron I).

        With S = I + W^T W the field is C = (S kron C0)
        + ((C0 S + S C0)/2 kron I), and its divergence, derived from the
        Kronecker structure, is vec((m+1) C0 W - (m/2) W C0).
        """
        c0 = np.asarray(c0, dtype=float)
        m = self.signal_dim

        def matrix(theta):
            w = self.to_matrix(theta)
            s = np.eye(m) + w.swapaxes(-1, -2) @ w
            mid = 0.5 * (c0 @ s + s @ c0)
            z = s[..., :, None, :, None] * c0[None, :, None, :]
            term1 = z.reshape(s.shape[:-2] + (m * m, m * m))
            return term1 + self._kron_right(mid)

        def divergence(theta):
            w = self.to_matrix(theta)
            return self.to_vec((m + 1.0) * (c0 @ w) - 0.5 * m * (w @ c0))

        field = IrrField(matrix=matrix, divergence=divergence)
        rng = np.random.default_rng(11)
        validate_divergence(matrix, divergence, rng.standard_normal(self.dim))
        return field


# -- thin functional aliases matching the operation names ------------------

def gaussian_posterior_moments(target: GaussianLinearTarget):
    return target.posterior_moments()


def gaussian_grad(target: GaussianLinearTarget, theta, batch=None):
    return target.grad_log(theta, batch)


def normalparams_grad(target: NormalParamsTarget, theta, batch=None):
    return target.grad_log(theta, batch)


def normalparams_metric_bundle(target: NormalParamsTarget):
    return target.metric_bundle()


def logistic_grad(target: LogisticRegressionTarget, theta, batch=None):
    return target.grad_log(theta, batch)


def logistic_metric_bundle(target: LogisticRegressionTarget):
    return target.metric_bundle()


def ica_grad(target: IcaTarget, theta, batch=None):
    return target.grad_log(theta, batch)


def ica_metric_bundle(target: IcaTarget):
    return target.metric_bundle()
