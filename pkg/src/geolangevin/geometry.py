"""Skew-symmetric matrices, metric bundles, and divergence machinery.

The samplers in this package perturb overdamped Langevin dynamics with a
symmetric positive definite metric field B(theta) (the reversible part)
and a skew-symmetric field C(theta) (the irreversible part).  This module
holds the constructors for those objects and the finite-difference
divergence checker used to validate every hand-derived divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class DimensionError(ValueError):
    """Raised when a matrix dimension is too small or mismatched."""


class DecompositionError(ValueError):
    """Raised when a Cholesky factorization fails (non-SPD input)."""


def skew_fixed_pattern(delta: float, d: int) -> np.ndarray:
    """Constant skew matrix with all-(+delta) upper triangle.

    Returns delta * (U - U^T) with U the strictly upper triangular
    all-ones matrix.  For d=2 this is delta*[[0,1],[-1,0]].
    """
    if d < 2:
        raise DimensionError(f"skew matrix needs d >= 2, got d={d}")
    upper = np.triu(np.ones((d, d)), k=1)
    return delta * (upper - upper.T)


def skew_random_unit(seed, d: int) -> np.ndarray:
    """Random skew matrix with +-1 sign pattern, scaled to spectral norm 1.

    Strictly lower triangular entries are drawn uniformly from {+1,-1};
    the transpose is subtracted so the result is exactly skew with a zero
    diagonal, then the matrix is rescaled so its spectral norm is 1.
    Deterministic for a fixed seed.
    """
    if d < 2:
        raise DimensionError(f"skew matrix needs d >= 2, got d={d}")
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(d, d)) * 2 - 1
    lower = np.tril(signs, k=-1).astype(float)
    skew = lower - lower.T
    return skew / np.linalg.norm(skew, ord=2)


def giirr_matrix(b_matrix: np.ndarray, skew: np.ndarray) -> np.ndarray:
    """Geometry-informed skew field C = (J B + B J) / 2.

    With B symmetric and J skew the result is skew-symmetric, and it
    collapses to J itself whenever B is the identity.  Supports stacked
    inputs with leading batch axes on ``b_matrix``.
    """
    if b_matrix.shape[-1] != skew.shape[-1]:
        raise DimensionError(
            f"B is {b_matrix.shape[-2:]}, J is {skew.shape}: incompatible"
        )
    return 0.5 * (skew @ b_matrix + b_matrix @ skew)


def matrix_divergence_fd(
    matrix_fn: Callable[[np.ndarray], np.ndarray],
    theta: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Central finite-difference divergence of a matrix field.

    Component i is sum_j (M_ij(theta + eps e_j) - M_ij(theta - eps e_j))
    / (2 eps).  Used as the independent oracle for every analytic
    divergence in this package.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[-1]
    div = np.zeros(d)
    for j in range(d):
        step = np.zeros(d)
        step[j] = eps
        m_plus = np.asarray(matrix_fn(theta + step))
        m_minus = np.asarray(matrix_fn(theta - step))
        div += (m_plus[:, j] - m_minus[:, j]) / (2.0 * eps)
    return div


def vector_divergence_fd(
    vector_fn: Callable[[np.ndarray], np.ndarray],
    theta: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Central finite-difference divergence of a vector field."""
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[-1]
    total = 0.0
    for j in range(d):
        step = np.zeros(d)
        step[j] = eps
        total += (vector_fn(theta + step)[j] - vector_fn(theta - step)[j]) / (2.0 * eps)
    return total


def metric_factor(b_matrix: np.ndarray, beta: float) -> np.ndarray:
    """Lower-triangular factor S with S S^T = 2 beta B.

    Any factor with that property yields the same diffusion law; the
    Cholesky factor is used for determinism.  Supports stacked inputs.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    try:
        return np.linalg.cholesky(2.0 * beta * np.asarray(b_matrix, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"metric is not positive definite: {exc}") from exc


@dataclass(frozen=True)
class MetricBundle:
    """Symmetric positive definite metric field with its divergence.

    ``matrix(theta)`` returns B(theta) (stacked inputs allowed), and
    ``divergence(theta)`` the vector with components sum_j d/dtheta_j
    B_ij.  ``sqrt_factor(theta, beta)`` returns S with S S^T = 2 beta B;
    when not supplied, the Cholesky factor is computed on demand.
    ``constant`` flags a state-independent metric, which lets the sampler
    factor it once per run.
    """

    matrix: Callable[[np.ndarray], np.ndarray]
    divergence: Callable[[np.ndarray], np.ndarray]
    sqrt_factor: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    constant: bool = False

    def factor(self, theta: np.ndarray, beta: float) -> np.ndarray:
        if self.sqrt_factor is not None:
            return self.sqrt_factor(theta, beta)
        return metric_factor(self.matrix(theta), beta)


@dataclass(frozen=True)
class IrrField:
    """Skew-symmetric field C(theta) with its divergence.

    The drift correction for the geometry-informed perturbation is
    C(theta) grad log pi(theta) + div C(theta); together these leave the
    target density invariant.
    """

    matrix: Callable[[np.ndarray], np.ndarray]
    divergence: Callable[[np.ndarray], np.ndarray]
    constant: bool = False


def identity_bundle(d: int) -> MetricBundle:
    """Trivial metric B = I, used by the unperturbed dynamics."""
    eye = np.eye(d)
    zero = np.zeros(d)
    return MetricBundle(
        matrix=lambda theta: eye,
        divergence=lambda theta: zero,
        constant=True,
    )


def constant_irr_field(skew: np.ndarray) -> IrrField:
    """Irreversible field with a constant skew matrix (divergence zero)."""
    skew = np.asarray(skew, dtype=float)
    zero = np.zeros(skew.shape[-1])
    return IrrField(matrix=lambda theta: skew, divergence=lambda theta: zero, constant=True)


def validate_divergence(
    matrix_fn: Callable[[np.ndarray], np.ndarray],
    divergence_fn: Callable[[np.ndarray], np.ndarray],
    probe: np.ndarray,
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> None:
    """Fail fast if an analytic divergence disagrees with finite differences."""
    analytic = np.asarray(divergence_fn(probe), dtype=float)
    numeric = matrix_divergence_fd(matrix_fn, probe, eps)
    scale = max(1.0, float(np.linalg.norm(analytic)))
    err = float(np.linalg.norm(analytic - numeric))
    if err > tol * scale:
        raise ValueError(
            f"analytic divergence disagrees with finite differences at {probe}: "
            f"|analytic - fd| = {err:.3e}"
        )
