"""Closed-form bias/variance of the discretized chain on a scalar Gaussian.

For a two-dimensional Gaussian posterior whose precision is a scalar
matrix, the irreversibly perturbed unadjusted Langevin chain

    theta_{k+1} = (I - h A) theta_k + h D + sqrt(h) xi_k

with A = a [[1, delta], [-delta, 1]] and D = b (I + J) S_X admits exact
expressions for the bias and variance of the long term average
estimator at finite K.  This module implements those expressions and a
brute-force Monte Carlo cross-check of the same recurrence, so each can
serve as an oracle for the other.

Everything is parameterized by
    a = (1/sigma_theta^2 + N/sigma_X^2) / 2,   b = 1 / (2 sigma_X^2),
    s = 1 - 2 a h + a^2 h^2 (1 + delta^2),
and the chain is stable iff s < 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ScalarGaussianSetup:
    """Chain parameters for the scalar-precision Gaussian example."""

    sigma_theta: float
    sigma_x: float
    n_data: int
    data_sum: np.ndarray
    step_size: float
    n_steps: int
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "data_sum", np.asarray(self.data_sum, dtype=float))
        if self.data_sum.shape != (2,):
            raise ValueError("data_sum must be a 2-vector")
        if self.sigma_theta <= 0 or self.sigma_x <= 0:
            raise ValueError("standard deviations must be positive")
        if self.step_size <= 0 or self.n_steps < 1:
            raise ValueError("need positive step size and at least one step")

    @property
    def a(self) -> float:
        return 0.5 * (1.0 / self.sigma_theta**2 + self.n_data / self.sigma_x**2)

    @property
    def b(self) -> float:
        return 1.0 / (2.0 * self.sigma_x**2)

    @property
    def s(self) -> float:
        a, h = self.a, self.step_size
        return 1.0 - 2.0 * a * h + a**2 * h**2 * (1.0 + self.delta**2)

    @property
    def stable(self) -> bool:
        return self.s < 1.0

    def drift_matrix(self) -> np.ndarray:
        return self.a * np.array([[1.0, self.delta], [-self.delta, 1.0]])

    def drift_const(self) -> np.ndarray:
        skew = np.array([[0.0, self.delta], [-self.delta, 0.0]])
        return self.b * (np.eye(2) + skew) @ self.data_sum

    def posterior_mean(self) -> np.ndarray:
        return np.linalg.solve(self.drift_matrix(), self.drift_const())


def s_factor(a: float, h: float, delta: float) -> float:
    """Contraction factor s = 1 - 2ah + a^2 h^2 (1 + delta^2)."""
    return 1.0 - 2.0 * a * h + a**2 * h**2 * (1.0 + delta**2)


def linear_avg_mean(setup: ScalarGaussianSetup) -> np.ndarray:
    """Exact E[average of theta_0..theta_{K-1}] started from zero.

    Equals mu_p - (Kh)^{-1} A^{-2} (I - (I - hA)^K) D.
    """
    amat = setup.drift_matrix()
    d = setup.drift_const()
    k, h = setup.n_steps, setup.step_size
    decay = np.linalg.matrix_power(np.eye(2) - h * amat, k)
    bias = -np.linalg.solve(amat @ amat, (np.eye(2) - decay) @ d) / (k * h)
    return setup.posterior_mean() + bias


def linear_bias_sq(setup: ScalarGaussianSetup) -> float:
    """Squared norm of the bias of the time-averaged state.

    Closed form b^2 / (K^2 h^2 a^4 (1+delta^2)) (1 + r^{2K} - 2 r^K cos
    K phi) |S_X|^2 with r e^{i phi} = 1 - a h (1 + i delta).
    """
    a, b, h, k, delta = setup.a, setup.b, setup.step_size, setup.n_steps, setup.delta
    z = 1.0 - a * h * (1.0 + 1j * delta)
    mag = abs(1.0 - z**k) ** 2
    norm_sq = float(setup.data_sum @ setup.data_sum)
    return b**2 / (k**2 * h**2 * a**4 * (1.0 + delta**2)) * mag * norm_sq


def trace_sigma_k(setup: ScalarGaussianSetup, k: int) -> float:
    """Trace of the covariance of theta_k started from a point mass."""
    s, h = setup.s, setup.step_size
    return 2.0 * h * (1.0 - s**k) / (1.0 - s)


def linear_avg_trace_var(setup: ScalarGaussianSetup) -> float:
    """Trace of Var(average of theta_0..theta_{K-1}) for a centered chain.

    Valid when the posterior mean is zero (data_sum = 0), in which case
    E[theta_k theta_k^T] is the covariance Sigma_k.  The cross-term sum
    F is evaluated with the complex eigenvalue lam = a h (1 + i delta)
    of h A; the two conjugate eigenvalues contribute twice the real
    part.
    """
    if np.any(setup.data_sum != 0.0):
        raise ValueError("closed form assumes a centered chain (data_sum = 0)")
    a, h, k, s = setup.a, setup.step_size, setup.n_steps, setup.s
    lam = a * h * (1.0 + 1j * setup.delta)
    i = np.arange(k)
    sigma_i = h * (1.0 - s**i) / (1.0 - s)
    tail = (1.0 - lam) / lam * (1.0 - (1.0 - lam) ** (k - 1 - i))
    trace_f = float(np.sum(sigma_i * 2.0 * tail.real))
    direct = 2.0 * h * (k / (1.0 - s) - (1.0 - s**k) / (1.0 - s) ** 2)
    return (direct + 2.0 * trace_f) / k**2


def quad_avg_mean(setup: ScalarGaussianSetup) -> float:
    """E[time average of |theta_k|^2] for a centered chain started at zero."""
    s, h, k = setup.s, setup.step_size, setup.n_steps
    return 2.0 * h * (1.0 / (1.0 - s) - (1.0 - s**k) / (k * (1.0 - s) ** 2))


@dataclass(frozen=True)
class QuadMoments:
    """First two moments of the averaged squared-norm observable."""

    mean: float
    second_moment: float
    bias_sq: float
    variance: float
    truth: float


def quad_estimator_moments(setup: ScalarGaussianSetup) -> QuadMoments:
    """Exact moments of the time average of |theta|^2 on a centered chain.

    Follows the recurrences beta_k = E[(theta_k^T theta_k)^2] and the
    cross-term sums R_k; the reference value is the posterior second
    moment Tr[(2a)^{-1} I] = 1/a.
    """
    if np.any(setup.data_sum != 0.0):
        raise ValueError("closed form assumes a centered chain (data_sum = 0)")
    s, h, kk = setup.s, setup.step_size, setup.n_steps
    k = np.arange(kk)
    sk = s**k
    s2k = sk**2
    second = 2.0 * h * (1.0 - sk) / (1.0 - s)
    beta = (
        16.0 * s * h**2 / (1.0 - s) * ((1.0 - s2k) / (1.0 - s**2) - s ** (k - 1.0) * (1.0 - sk) / (1.0 - s))
        + 8.0 * h**2 * (1.0 - s2k) / (1.0 - s**2)
    )
    geom_tail = (s - s ** (kk - k).astype(float)) / (1.0 - s)
    r = beta * geom_tail + 2.0 * h * second / (1.0 - s) * (kk - 1.0 - k - geom_tail)
    second_moment = float(np.sum(beta + 2.0 * r)) / kk**2
    mean = quad_avg_mean(setup)
    truth = 1.0 / setup.a
    return QuadMoments(
        mean=mean,
        second_moment=second_moment,
        bias_sq=(mean - truth) ** 2,
        variance=second_moment - mean**2,
        truth=truth,
    )


def asymptotic_trace_var(setup: ScalarGaussianSetup) -> float:
    """Trace of the stationary covariance of the discretized chain.

    2 / (2a - h a^2 (1 + delta^2)); the continuous-time value 1/a is
    recovered as h -> 0, and the gap grows with delta: discretization
    inflates the stationary spread when irreversibility is added.
    """
    a, h = setup.a, setup.step_size
    return 2.0 / (2.0 * a - h * a**2 * (1.0 + setup.delta**2))


def simulate_recurrence(
    setup: ScalarGaussianSetup,
    n_replicates: int,
    seed: int = 0,
) -> dict:
    """Monte Carlo replicates of the linear-Gaussian recurrence.

    Runs ``n_replicates`` independent chains from theta_0 = 0 and
    returns per-replicate time averages of theta and of |theta|^2,
    shapes (n, 2) and (n,).
    """
    rng = np.random.default_rng(seed)
    h = setup.step_size
    amat = setup.drift_matrix()
    d = setup.drift_const()
    step_mat = np.eye(2) - h * amat
    sqrt_h = np.sqrt(h)
    theta = np.zeros((n_replicates, 2))
    sum_theta = np.zeros((n_replicates, 2))
    sum_quad = np.zeros(n_replicates)
    for _ in range(setup.n_steps):
        sum_theta += theta
        sum_quad += (theta**2).sum(axis=1)
        theta = theta @ step_mat.T + h * d + sqrt_h * rng.standard_normal((n_replicates, 2))
    return {
        "avg_theta": sum_theta / setup.n_steps,
        "avg_quad": sum_quad / setup.n_steps,
    }


@dataclass
class OracleReport:
    """Closed-form values versus Monte Carlo for one parameter point.

    Each compared quantity carries (closed, mc, se); ``agreements``
    flags |closed - mc| <= 3 se per quantity and ``consistent`` is
    their conjunction.
    """

    setup: ScalarGaussianSetup
    n_replicates: int
    closed: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    se: dict = field(default_factory=dict)
    agreements: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        return all(self.agreements.values())


def compare_with_mc(
    setup: ScalarGaussianSetup,
    n_replicates: int = 10_000,
    seed: int = 0,
) -> OracleReport:
    """Cross-check every closed form against simulated replicates.

    Quantities with a per-replicate representation get a direct standard
    error (sample std / sqrt n); the trace variance and the quadratic
    variance use the spread of squared deviations from the replicate
    mean, whose O(1/n) bias is negligible at the default replicate
    count.
    """
    sims = simulate_recurrence(setup, n_replicates, seed)
    avg_theta = sims["avg_theta"]
    avg_quad = sims["avg_quad"]
    n = n_replicates
    rep = OracleReport(setup=setup, n_replicates=n)

    mean_vec = linear_avg_mean(setup)
    mc_mean = avg_theta.mean(axis=0)
    se_mean = avg_theta.std(axis=0, ddof=1) / np.sqrt(n)
    for i in range(2):
        rep.closed[f"linear_mean_{i}"] = float(mean_vec[i])
        rep.mc[f"linear_mean_{i}"] = float(mc_mean[i])
        rep.se[f"linear_mean_{i}"] = float(se_mean[i])

    pairs = {}
    if not np.any(setup.data_sum != 0.0):
        moments = quad_estimator_moments(setup)
        pairs["quad_mean"] = (moments.mean, avg_quad)
        pairs["quad_second_moment"] = (moments.second_moment, avg_quad**2)
        pairs["quad_variance"] = (moments.variance, (avg_quad - avg_quad.mean()) ** 2)
        pairs["linear_trace_var"] = (
            linear_avg_trace_var(setup),
            ((avg_theta - mc_mean) ** 2).sum(axis=1),
        )
    for name, (closed_val, samples) in pairs.items():
        rep.closed[name] = float(closed_val)
        rep.mc[name] = float(samples.mean())
        rep.se[name] = float(samples.std(ddof=1) / np.sqrt(n))

    for name in rep.closed:
        rep.agreements[name] = abs(rep.closed[name] - rep.mc[name]) <= 3.0 * rep.se[name]
    return rep


def mc_crosscheck(
    setup: ScalarGaussianSetup,
    kind: str = "both",
    replicates: int = 10_000,
    seed: int = 0,
) -> OracleReport:
    """Oracle report restricted to linear, quadratic, or all quantities."""
    if kind not in ("linear", "quadratic", "both"):
        raise ValueError(f"unknown kind {kind!r}")
    rep = compare_with_mc(setup, n_replicates=replicates, seed=seed)
    if kind != "both":
        prefix = "linear" if kind == "linear" else "quad"
        for store in (rep.closed, rep.mc, rep.se, rep.agreements):
            for name in [n for n in store if not n.startswith(prefix)]:
                del store[name]
    return rep


def sweep_grid(
    step_sizes: Sequence[float],
    chain_lengths: Sequence[int],
    deltas: Sequence[float],
    sigma_theta: float = 1.0,
    sigma_x: float = 1.0,
    n_data: int = 1,
    data_sum: Optional[np.ndarray] = None,
    n_replicates: int = 10_000,
    seed: int = 0,
) -> list:
    """Oracle reports over a (h, K, delta) grid.

    Defaults give a = 1 with a centered posterior, the regime in which
    every closed form above applies.
    """
    if data_sum is None:
        data_sum = np.zeros(2)
    reports = []
    for h in step_sizes:
        for k in chain_lengths:
            for delta in deltas:
                setup = ScalarGaussianSetup(
                    sigma_theta=sigma_theta,
                    sigma_x=sigma_x,
                    n_data=n_data,
                    data_sum=data_sum,
                    step_size=h,
                    n_steps=int(k),
                    delta=delta,
                )
                reports.append(compare_with_mc(setup, n_replicates=n_replicates, seed=seed))
    return reports
