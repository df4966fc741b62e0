"""Euler-Maruyama simulation of the five perturbed Langevin dynamics.

The five systems share the invariant density pi and differ only in how
the drift and diffusion are assembled from the metric field B(theta) and
a skew field:

    LD     b = beta grad log pi                          sigma = sqrt(2 beta) I
    RM     b = beta B grad + beta div B                  sigma = sqrt(2 beta B)
    Irr    b = (beta I + J) grad                         sigma = sqrt(2 beta) I
    RMIrr  b = (beta B + J) grad + beta div B            sigma = sqrt(2 beta B)
    GiIrr  b = (beta B + C) grad + div(beta B + C)       sigma = sqrt(2 beta B)

with C = (J B + B J)/2.  Every kind is evaluated through one code path
(B = I and C = 0 where absent), so the reduction identities
GiIrr(B=I) == Irr, GiIrr(delta=0) == RM and Irr(delta=0) == LD hold
bitwise at matched seeds.

Chains are stepped in lockstep as stacked arrays, but each chain draws
its noise from its own generator seeded by (master_seed, chain_index),
so results do not depend on how chains are grouped or ordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import IrrField, MetricBundle, constant_irr_field, identity_bundle
from .targets import TargetModel


class ConfigurationError(ValueError):
    """A dynamics kind was requested without the pieces it needs."""


class ChainAbortError(RuntimeError):
    """A chain left the target's domain and could not recover."""

    def __init__(self, chain_index: int, step: int, message: str = ""):
        self.chain_index = chain_index
        self.step = step
        super().__init__(
            f"chain {chain_index} aborted at step {step}" + (f": {message}" if message else "")
        )


class DynamicsKind(str, Enum):
    LD = "LD"
    RM = "RM"
    IRR = "Irr"
    RMIRR = "RMIrr"
    GIIRR = "GiIrr"

    @property
    def needs_geometry(self) -> bool:
        return self in (DynamicsKind.RM, DynamicsKind.RMIRR, DynamicsKind.GIIRR)

    @property
    def needs_skew(self) -> bool:
        return self in (DynamicsKind.IRR, DynamicsKind.RMIRR, DynamicsKind.GIIRR)


@dataclass
class SamplerConfig:
    """Run parameters shared by all dynamics kinds."""

    step_size: float
    n_steps: int
    beta: float = 0.5
    delta: float = 0.0
    burn_in_time: float = 0.0
    minibatch: Optional[int] = None
    master_seed: int = 0
    n_chains: int = 1
    theta0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.step_size < 0:
            raise ValueError("step size must be nonnegative")
        if self.n_steps < 1:
            raise ValueError("need at least one step")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.burn_in_time < 0:
            raise ValueError("burn-in time must be nonnegative")
        if self.n_chains < 1:
            raise ValueError("need at least one chain")
        if self.minibatch is not None and self.minibatch < 1:
            raise ValueError("minibatch size must be positive")

    @property
    def burn_in_steps(self) -> int:
        if self.step_size == 0:
            return 0
        return int(math.floor(self.burn_in_time / self.step_size))


@dataclass(frozen=True)
class Observable:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]


def phi1() -> Observable:
    """Sum of state components."""
    return Observable("phi1", lambda theta: theta.sum(axis=-1))


def phi2() -> Observable:
    """Sum of squared state components."""
    return Observable("phi2", lambda theta: (theta**2).sum(axis=-1))


def phi3() -> Observable:
    """Squared sum of state components (picks up cross moments)."""
    return Observable("phi3", lambda theta: theta.sum(axis=-1) ** 2)


DEFAULT_OBSERVABLES = (phi1(), phi2())


def _matvec(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Matrix-vector product broadcasting a shared matrix over chains."""
    return (mat @ vec[..., None])[..., 0]


class Dynamics:
    """Drift and diffusion assembly for one (kind, target) pair."""

    def __init__(
        self,
        kind: DynamicsKind,
        target: TargetModel,
        beta: float,
        skew: Optional[np.ndarray] = None,
        giirr: Optional[IrrField] = None,
    ):
        kind = DynamicsKind(kind)
        self.kind = kind
        self.target = target
        self.beta = float(beta)
        d = target.dim

        if kind.needs_geometry:
            self.bundle: MetricBundle = target.metric_bundle()
        else:
            self.bundle = identity_bundle(d)

        if kind in (DynamicsKind.IRR, DynamicsKind.RMIRR):
            if skew is None:
                raise ConfigurationError(f"{kind.value} requires a skew matrix")
            self.irr: IrrField = constant_irr_field(skew)
        elif kind is DynamicsKind.GIIRR:
            if giirr is None:
                if skew is None:
                    raise ConfigurationError("GiIrr requires a skew matrix or an IrrField")
                giirr = target.giirr_field(skew)
            self.irr = giirr
        else:
            self.irr = constant_irr_field(np.zeros((d, d)))

        self._const = self.bundle.constant and self.irr.constant
        if self._const:
            probe = np.zeros(d)
            self._drift_matrix = self.beta * self.bundle.matrix(probe) + self.irr.matrix(probe)
            self._drift_const = (
                self.beta * self.bundle.divergence(probe) + self.irr.divergence(probe)
            )
        if self.bundle.constant:
            self._noise = self.bundle.factor(np.zeros(d), self.beta)
        else:
            self._noise = None

    @property
    def constant_noise(self) -> bool:
        return self._noise is not None

    def drift(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self._const:
            return _matvec(self._drift_matrix, grad) + self._drift_const
        mat = self.beta * self.bundle.matrix(theta) + self.irr.matrix(theta)
        corr = self.beta * self.bundle.divergence(theta) + self.irr.divergence(theta)
        return _matvec(mat, grad) + corr

    def noise_factor(self, theta: np.ndarray) -> np.ndarray:
        if self._noise is not None:
            return self._noise
        return self.bundle.factor(theta, self.beta)


def drift(
    kind,
    theta,
    target: TargetModel,
    skew=None,
    beta: float = 0.5,
    batch=None,
    giirr: Optional[IrrField] = None,
):
    """Drift of the chosen dynamics at theta (stochastic when ``batch`` given)."""
    dyn = Dynamics(kind, target, beta, skew=skew, giirr=giirr)
    grad = target.grad_log(np.asarray(theta, dtype=float), batch)
    return dyn.drift(np.asarray(theta, dtype=float), grad)


def diffusion_factor(kind, theta, target: TargetModel, beta: float = 0.5):
    """Diffusion factor sigma(theta): sqrt(2 beta) I or the metric factor."""
    dyn = Dynamics(kind, target, beta)
    return dyn.noise_factor(np.asarray(theta, dtype=float))


def em_step(
    theta,
    target: TargetModel,
    dynamics: Dynamics,
    step_size: float,
    rng: Optional[np.random.Generator] = None,
    batch=None,
    noise=None,
):
    """One Euler-Maruyama update theta + h b(theta) + sqrt(h) sigma(theta) xi.

    ``noise`` overrides the Gaussian draw (test hook); otherwise xi is
    drawn from ``rng``.
    """
    theta = np.asarray(theta, dtype=float)
    if noise is None:
        if rng is None:
            raise ValueError("either rng or noise must be supplied")
        noise = rng.standard_normal(theta.shape)
    grad = target.grad_log(theta, batch)
    b = dynamics.drift(theta, grad)
    sig = dynamics.noise_factor(theta)
    return theta + step_size * b + math.sqrt(step_size) * _matvec(sig, np.asarray(noise, dtype=float))


@dataclass
class EnsembleResult:
    """Lockstep simulation output for a set of chains.

    ``finals[name]`` holds each chain's post-burn-in running average,
    ``avar[name]`` the batch-means asymptotic variance (NaN when the
    post-burn-in stretch is too short), ``checkpoints[name]`` running
    averages captured at ``checkpoint_steps``.  Aborted chains carry NaN
    everywhere and are listed in ``aborts`` as (chain_index, step).
    """

    kind: DynamicsKind
    chain_indices: list
    finals: dict
    avar: dict
    checkpoint_steps: np.ndarray
    checkpoints: dict
    traces: Optional[dict] = None
    states: Optional[np.ndarray] = None
    aborts: list = field(default_factory=list)

    def merge(self, other: "EnsembleResult") -> "EnsembleResult":
        cat = lambda a, b: {k: np.concatenate([a[k], b[k]]) for k in a}
        return EnsembleResult(
            kind=self.kind,
            chain_indices=self.chain_indices + other.chain_indices,
            finals=cat(self.finals, other.finals),
            avar=cat(self.avar, other.avar),
            checkpoint_steps=self.checkpoint_steps,
            checkpoints=cat(self.checkpoints, other.checkpoints),
            traces=cat(self.traces, other.traces) if self.traces is not None else None,
            states=np.concatenate([self.states, other.states]) if self.states is not None else None,
            aborts=self.aborts + other.aborts,
        )


@dataclass
class Trajectory:
    """Single-chain view: states (when stored) and observable traces."""

    chain_index: int
    states: Optional[np.ndarray]
    traces: dict
    final_averages: dict
    burn_in_steps: int
    step_size: float


def _default_block(n_chains: int, width: int) -> int:
    # Cap pre-drawn noise / minibatch arrays around ~4M scalars.
    return max(1, min(16384, int(4_000_000 // max(1, n_chains * width))))


def run_chains(
    target: TargetModel,
    kind,
    config: SamplerConfig,
    chain_indices: Optional[Sequence[int]] = None,
    observables: Sequence[Observable] = DEFAULT_OBSERVABLES,
    skew=None,
    giirr: Optional[IrrField] = None,
    checkpoint_steps: Optional[Sequence[int]] = None,
    n_batches: int = 20,
    store_traces: bool = False,
    store_states: bool = False,
    max_retries: int = 100,
) -> EnsembleResult:
    """Simulate chains of one dynamics kind in lockstep.

    Per-chain RNG streams are seeded by (master_seed, chain_index), so
    the result for any chain is independent of which other chains run
    alongside it.
    """
    kind = DynamicsKind(kind)
    dyn = Dynamics(kind, target, config.beta, skew=skew, giirr=giirr)
    d = target.dim
    n_data = target.data_size
    n_mb = config.minibatch
    if n_mb is not None and n_mb > n_data:
        raise ValueError(f"minibatch {n_mb} exceeds dataset size {n_data}")

    if chain_indices is None:
        chain_indices = list(range(config.n_chains))
    chain_indices = list(chain_indices)
    n_chains = len(chain_indices)
    gens = [
        np.random.default_rng(np.random.SeedSequence(config.master_seed, spawn_key=(i,)))
        for i in chain_indices
    ]

    theta0 = np.zeros(d) if config.theta0 is None else np.asarray(config.theta0, dtype=float)
    theta = np.broadcast_to(theta0, (n_chains, d)).astype(float).copy()

    h = config.step_size
    sqrt_h = math.sqrt(h)
    n_steps = config.n_steps
    burn = min(config.burn_in_steps, n_steps)
    kept = n_steps - burn
    batch_len = kept // n_batches if kept >= 2 * n_batches else 0

    names = [obs.name for obs in observables]
    run_sum = {nm: np.zeros(n_chains) for nm in names}
    batch_sums = {nm: np.zeros((n_chains, n_batches)) for nm in names}
    if checkpoint_steps is not None and len(checkpoint_steps) > 0:
        ckpts = np.asarray(sorted(checkpoint_steps), dtype=int)
    else:
        ckpts = np.empty(0, dtype=int)
    ck_avgs = {nm: np.full((n_chains, len(ckpts)), np.nan) for nm in names}
    traces = {nm: np.empty((n_chains, n_steps)) for nm in names} if store_traces else None
    states = np.empty((n_chains, n_steps + 1, d)) if store_states else None

    alive = np.ones(n_chains, dtype=bool)
    aborts: list = []
    policy = getattr(target, "domain_policy", "retry")

    block = _default_block(n_chains, max(d, n_data if n_mb is not None else d))
    ck_pos = 0

    for start in range(0, n_steps, block):
        width = min(block, n_steps - start)
        xi = np.empty((n_chains, width, d))
        for ci, g in enumerate(gens):
            xi[ci] = g.standard_normal((width, d))
        if n_mb is not None:
            idx = np.empty((n_chains, width, n_mb), dtype=np.intp)
            for ci, g in enumerate(gens):
                u = g.random((width, n_data))
                if n_mb < n_data:
                    idx[ci] = np.argpartition(u, n_mb - 1, axis=1)[:, :n_mb]
                else:
                    idx[ci] = np.arange(n_data)

        for j in range(width):
            k = start + j
            if states is not None:
                states[:, k] = theta
            vals = {nm: obs.fn(theta) for nm, obs in zip(names, observables)}
            if traces is not None:
                for nm in names:
                    traces[nm][:, k] = vals[nm]
            if k >= burn:
                q = k - burn
                for nm in names:
                    run_sum[nm][alive] += vals[nm][alive]
                    if batch_len and q < n_batches * batch_len:
                        batch_sums[nm][alive, q // batch_len] += vals[nm][alive]
            while ck_pos < len(ckpts) and ckpts[ck_pos] == k + 1:
                if k + 1 > burn:
                    for nm in names:
                        ck_avgs[nm][alive, ck_pos] = run_sum[nm][alive] / (k + 1 - burn)
                ck_pos += 1

            grad = target.grad_log(theta, idx[:, j] if n_mb is not None else None)
            b = dyn.drift(theta, grad)
            sig = dyn.noise_factor(theta)
            prop = theta + h * b + sqrt_h * _matvec(sig, xi[:, j])

            ok = target.in_domain(prop) | ~alive
            if not ok.all():
                if policy == "abort":
                    for ci in np.flatnonzero(~ok):
                        aborts.append((chain_indices[ci], k))
                        alive[ci] = False
                    ok[:] = True
                    prop = np.where(alive[:, None], prop, theta)
                else:
                    for _ in range(max_retries):
                        bad = np.flatnonzero(~ok)
                        for ci in bad:
                            xi_new = gens[ci].standard_normal(d)
                            sig_ci = sig if sig.ndim == 2 else sig[ci]
                            prop[ci] = theta[ci] + h * b[ci] + sqrt_h * (sig_ci @ xi_new)
                        ok = target.in_domain(prop) | ~alive
                        if ok.all():
                            break
                    else:
                        for ci in np.flatnonzero(~ok):
                            aborts.append((chain_indices[ci], k))
                            alive[ci] = False
                            prop[ci] = theta[ci]
            theta = np.where(alive[:, None], prop, theta)

    if states is not None:
        states[:, n_steps] = theta

    denom = max(kept, 1)
    finals = {nm: np.where(alive, run_sum[nm] / denom, np.nan) for nm in names}
    avar = {}
    for nm in names:
        if batch_len:
            means = batch_sums[nm] / batch_len
            avar[nm] = np.where(alive, batch_len * h * means.var(axis=1, ddof=1), np.nan)
        else:
            avar[nm] = np.full(n_chains, np.nan)
    for nm in names:
        ck_avgs[nm][~alive] = np.nan

    return EnsembleResult(
        kind=kind,
        chain_indices=chain_indices,
        finals=finals,
        avar=avar,
        checkpoint_steps=ckpts,
        checkpoints=ck_avgs,
        traces=traces,
        states=states,
        aborts=aborts,
    )


def simulate_chain(
    target: TargetModel,
    kind,
    config: SamplerConfig,
    chain_index: int = 0,
    observables: Sequence[Observable] = DEFAULT_OBSERVABLES,
    skew=None,
    giirr: Optional[IrrField] = None,
    store_states: bool = True,
) -> Trajectory:
    """Simulate a single chain, keeping observable traces (and states)."""
    result = run_chains(
        target,
        kind,
        config,
        chain_indices=[chain_index],
        observables=observables,
        skew=skew,
        giirr=giirr,
        store_traces=True,
        store_states=store_states,
    )
    if result.aborts:
        idx, step = result.aborts[0]
        raise ChainAbortError(idx, step)
    return Trajectory(
        chain_index=chain_index,
        states=result.states[0] if result.states is not None else None,
        traces={nm: tr[0] for nm, tr in result.traces.items()},
        final_averages={nm: f[0] for nm, f in result.finals.items()},
        burn_in_steps=min(config.burn_in_steps, config.n_steps),
        step_size=config.step_size,
    )


def run_ensemble(
    target: TargetModel,
    kind,
    config: SamplerConfig,
    observables: Sequence[Observable] = DEFAULT_OBSERVABLES,
    skew=None,
    giirr: Optional[IrrField] = None,
    checkpoint_steps: Optional[Sequence[int]] = None,
    n_batches: int = 20,
    n_threads: int = 1,
    store_states: bool = False,
) -> EnsembleResult:
    """Simulate ``config.n_chains`` independent chains of one kind.

    With ``n_threads`` > 1 the chain set is split into contiguous groups
    executed concurrently; per-chain RNG streams make the merged result
    identical to the serial one.
    """
    indices = list(range(config.n_chains))
    runner = lambda sub: run_chains(
        target,
        kind,
        config,
        chain_indices=sub,
        observables=observables,
        skew=skew,
        giirr=giirr,
        checkpoint_steps=checkpoint_steps,
        n_batches=n_batches,
        store_states=store_states,
    )
    if n_threads <= 1 or config.n_chains == 1:
        return runner(indices)

    from concurrent.futures import ThreadPoolExecutor

    n_groups = min(n_threads, config.n_chains)
    bounds = np.linspace(0, config.n_chains, n_groups + 1).astype(int)
    groups = [indices[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=n_groups) as pool:
        parts = list(pool.map(runner, groups))
    merged = parts[0]
    for part in parts[1:]:
        merged = merged.merge(part)
    return merged
