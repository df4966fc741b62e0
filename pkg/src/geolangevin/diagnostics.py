"""Estimator diagnostics: ensemble statistics, batch means, and KSD.

Bias, variance, and MSE of ergodic-average estimators are computed
across an ensemble of independent chains.  The asymptotic variance of a
single chain is estimated by the batch-means method.  Sample quality
without a known reference value is measured by the kernelized Stein
discrepancy (KSD) with the inverse multiquadric kernel, which only needs
the score of the target.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


def running_average(trace: np.ndarray, burn_in_steps: int = 0) -> np.ndarray:
    """Cumulative averages of a trace after dropping the first steps.

    Entry k is the mean of ``trace[burn_in_steps : burn_in_steps+k+1]``.
    """
    trace = np.asarray(trace, dtype=float)
    kept = trace[..., burn_in_steps:]
    if kept.shape[-1] == 0:
        raise ValueError("burn-in removes the whole trace")
    counts = np.arange(1, kept.shape[-1] + 1)
    return np.cumsum(kept, axis=-1) / counts


@dataclass(frozen=True)
class EnsembleStats:
    """Bias, variance, and MSE of an estimator over independent chains."""

    mean: float
    bias: float
    variance: float
    mse: float
    std_across_chains: float
    n_chains: int


def ensemble_stats(estimates: np.ndarray, truth: float) -> EnsembleStats:
    """Bias/variance/MSE of per-chain estimates against a reference value.

    Uses the population variance (denominator M), so the identity
    mse = bias^2 + variance holds exactly.  NaN estimates (aborted
    chains) are dropped first; at least two finite values are required.
    """
    estimates = np.asarray(estimates, dtype=float)
    estimates = estimates[np.isfinite(estimates)]
    if estimates.size < 2:
        raise ValueError(f"need at least two finite estimates, got {estimates.size}")
    mean = float(estimates.mean())
    bias = mean - float(truth)
    variance = float(estimates.var(ddof=0))
    return EnsembleStats(
        mean=mean,
        bias=bias,
        variance=variance,
        mse=bias**2 + variance,
        std_across_chains=float(np.sqrt(variance)),
        n_chains=estimates.size,
    )


def batch_means_avar(
    trace: np.ndarray,
    step_size: float,
    burn_in_steps: int = 0,
    n_batches: int = 20,
) -> float:
    """Batch-means estimate of the asymptotic variance of a time average.

    The post-burn-in trace is cut into ``n_batches`` contiguous batches
    of equal length (the remainder at the end is dropped), and the
    estimate is (batch length * step size) times the sample variance
    (denominator n_batches - 1) of the batch means.  The step-size
    factor converts from per-step to per-unit-time normalization, so
    estimates at different step sizes are comparable.
    """
    trace = np.asarray(trace, dtype=float)
    kept = trace[burn_in_steps:]
    if n_batches < 2:
        raise ValueError("need at least two batches")
    batch_len = kept.shape[0] // n_batches
    if batch_len < 1:
        raise ValueError(
            f"trace too short: {kept.shape[0]} kept steps for {n_batches} batches"
        )
    means = kept[: n_batches * batch_len].reshape(n_batches, batch_len).mean(axis=1)
    return float(batch_len * step_size * means.var(ddof=1))


def imq_kernel(x: np.ndarray, y: np.ndarray, c: float = 1.0, beta: float = -0.5) -> np.ndarray:
    """Inverse multiquadric kernel (c^2 + |x-y|^2)^beta on stacked pairs.

    ``x`` has shape (..., d) broadcasting against ``y``; beta must lie
    in (-1, 0) for the KSD to detect non-convergence.
    """
    if not -1.0 < beta < 0.0:
        raise ValueError("beta must lie in (-1, 0)")
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return (c**2 + (diff**2).sum(axis=-1)) ** beta


def stein_kernel_component(
    j: int,
    x: np.ndarray,
    y: np.ndarray,
    grad_log: Callable[[np.ndarray], np.ndarray],
    c: float = 1.0,
    beta: float = -0.5,
) -> np.ndarray:
    """Component j of the Stein-modified IMQ kernel on stacked pairs.

    r0_j(x, y) = b_j(x) b_j(y) r + b_j(x) dr/dy_j + b_j(y) dr/dx_j
                 + d^2 r / dx_j dy_j
    with b the score of the target and r the IMQ kernel.  Derivatives of
    r are closed form:  with u = c^2 + |x-y|^2 and d_j = x_j - y_j,
    dr/dx_j = 2 beta d_j u^(beta-1), dr/dy_j is its negative, and the
    cross derivative is -2 beta u^(beta-1) - 4 beta (beta-1) d_j^2
    u^(beta-2).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    u = c**2 + (diff**2).sum(axis=-1)
    dj = diff[..., j]
    r = u**beta
    dr_dx = 2.0 * beta * dj * u ** (beta - 1.0)
    cross = -2.0 * beta * u ** (beta - 1.0) - 4.0 * beta * (beta - 1.0) * dj**2 * u ** (beta - 2.0)
    bx = np.asarray(grad_log(x), dtype=float)[..., j]
    by = np.asarray(grad_log(y), dtype=float)[..., j]
    return bx * by * r - bx * dr_dx + by * dr_dx + cross


def ksd(
    samples: np.ndarray,
    score_fn: Callable[[np.ndarray], np.ndarray],
    c: float = 1.0,
    beta: float = -0.5,
    tile: int = 2000,
) -> float:
    """Kernelized Stein discrepancy of a sample set under an IMQ kernel.

    With w_j = sqrt(sum_{k,k'} r0_j(x_k, x_k')) the discrepancy is
    S = |w|_2 / K = sqrt(sum_j sum_{k,k'} r0_j) / K, including the
    diagonal k = k' pairs; the 1/K normalization makes S decay like
    K^(-1/2) for samples converging to the target.  A component sum
    that comes out negative through rounding is clamped at zero with a
    warning.  The K x K pair grid is processed in tiles to bound
    memory; cost is O(K^2 d).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must have shape (K, d)")
    n, d = samples.shape
    scores = np.asarray(score_fn(samples), dtype=float)
    if scores.shape != samples.shape:
        raise ValueError("score_fn must return an array matching samples")
    comp = np.zeros(d)
    for a in range(0, n, tile):
        xa = samples[a : a + tile]
        sa = scores[a : a + tile]
        for b in range(0, n, tile):
            xb = samples[b : b + tile]
            sb = scores[b : b + tile]
            diff = xa[:, None, :] - xb[None, :, :]
            u = c**2 + (diff**2).sum(axis=-1)
            r = u**beta
            u1 = u ** (beta - 1.0)
            u2 = u ** (beta - 2.0)
            for j in range(d):
                dj = diff[..., j]
                dr_dx = 2.0 * beta * dj * u1
                cross = -2.0 * beta * u1 - 4.0 * beta * (beta - 1.0) * dj**2 * u2
                bx = sa[:, None, j]
                by = sb[None, :, j]
                comp[j] += (bx * by * r - bx * dr_dx + by * dr_dx + cross).sum()
    if np.any(comp < 0):
        warnings.warn("negative Stein component sum clamped at zero", RuntimeWarning)
        comp = comp.clip(min=0)
    return float(np.sqrt(comp.sum())) / n


@dataclass(frozen=True)
class KsdReport:
    """KSD evaluated on growing sample prefixes, with the fitted decay."""

    sample_sizes: np.ndarray
    values: np.ndarray

    @property
    def slope(self) -> float:
        return ksd_slope(self)


DEFAULT_KSD_SIZES = tuple(int(round(10**e)) for e in (2.0, 2.5, 3.0, 3.5, 4.0))


def ksd_report(
    samples: np.ndarray,
    score_fn: Callable[[np.ndarray], np.ndarray],
    sample_sizes: Sequence[int] = DEFAULT_KSD_SIZES,
    c: float = 1.0,
    beta: float = -0.5,
) -> KsdReport:
    """KSD of chain prefixes at the given sizes (those the chain reaches)."""
    samples = np.asarray(samples, dtype=float)
    sizes = [k for k in sample_sizes if k <= samples.shape[0]]
    if not sizes:
        raise ValueError("chain shorter than the smallest requested prefix")
    vals = [ksd(samples[:k], score_fn, c=c, beta=beta) for k in sizes]
    return KsdReport(sample_sizes=np.asarray(sizes), values=np.asarray(vals))


def ksd_slope(report, ksd_values=None) -> float:
    """Slope of log10(KSD) against log10(K) by least squares.

    Accepts a KsdReport or a (sizes, values) pair.  Nonpositive values
    are excluded with a warning.  For samples converging to the target
    the KSD decays like K^(-1/2), so the slope should sit near -0.5.
    """
    if ksd_values is None:
        sizes, vals = report.sample_sizes, report.values
    else:
        sizes, vals = report, ksd_values
    sizes = np.asarray(sizes, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if sizes.shape != vals.shape:
        raise ValueError("sizes and values must have matching shapes")
    keep = vals > 0
    if not keep.all():
        warnings.warn("nonpositive KSD values excluded from the slope fit", RuntimeWarning)
    sizes, vals = sizes[keep], vals[keep]
    if sizes.size < 2:
        raise ValueError("need at least two positive points")
    return float(np.polyfit(np.log10(sizes), np.log10(vals), 1)[0])


def mse_trace(
    checkpoints: np.ndarray,
    truth: float,
) -> np.ndarray:
    """MSE across chains at each checkpoint column.

    ``checkpoints`` has shape (n_chains, n_checkpoints) of running
    averages; NaN rows (aborted chains) are ignored per column.
    """
    checkpoints = np.asarray(checkpoints, dtype=float)
    out = np.empty(checkpoints.shape[1])
    for k in range(checkpoints.shape[1]):
        col = checkpoints[:, k]
        col = col[np.isfinite(col)]
        if col.size == 0:
            out[k] = np.nan
        else:
            st = ensemble_stats(col, truth)
            out[k] = st.mse
    return out
