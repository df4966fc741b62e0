"""Experiment orchestration: config parsing, ensemble runs, result files.

A run is described by a sectioned key=value text file (INI syntax).  The
runner builds the requested posterior target, simulates each listed
dynamics kind as an ensemble of chains, computes ensemble statistics and
batch-means asymptotic variance tables, optionally evaluates the KSD on
one chain and the discretization oracle sweep, and writes CSV/JSON
outputs.  Identical config and seed produce byte-identical CSVs.
"""

from __future__ import annotations

import configparser
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import datasets, diagnostics, discretization
from .geometry import skew_fixed_pattern, skew_random_unit
from .sampler import (
    DynamicsKind,
    Observable,
    SamplerConfig,
    phi1,
    phi2,
    phi3,
    run_ensemble,
)
from .targets import (
    GaussianLinearTarget,
    IcaTarget,
    LogisticRegressionTarget,
    NormalParamsTarget,
)

EXAMPLES = ("gaussian", "normalparams", "logistic", "ica")

_OBSERVABLES = {"phi1": phi1, "phi2": phi2, "phi3": phi3}


class ConfigError(ValueError):
    """Invalid run configuration; message carries the section.key path."""


@dataclass
class RunConfig:
    """Raw sectioned configuration with typed accessors.

    ``sections`` maps section name to a key -> string dict, exactly as
    read from the config file, so a config can round-trip through
    summary.json without loss.
    """

    sections: dict = field(default_factory=dict)

    @classmethod
    def from_ini(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        return cls(sections={s: dict(parser[s]) for s in parser.sections()})

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(sections={s: dict(kv) for s, kv in data.items()})

    def to_dict(self) -> dict:
        return {s: dict(kv) for s, kv in self.sections.items()}

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for section, kv in self.sections.items():
            parser[section] = kv
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def get(self, section: str, key: str, default=None) -> Optional[str]:
        return self.sections.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value) -> None:
        self.sections.setdefault(section, {})[key] = str(value)

    def _typed(self, section, key, cast, default):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"{section}.{key}: required key missing")
            return default
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from None

    def get_float(self, section, key, default=None) -> float:
        return self._typed(section, key, float, default)

    def get_int(self, section, key, default=None) -> int:
        return self._typed(section, key, lambda s: int(float(s)), default)

    def get_list(self, section, key, default=None) -> list:
        raw = self.get(section, key)
        if raw is None:
            return list(default) if default is not None else []
        return [item.strip() for item in raw.split(",") if item.strip()]

    def validate(self) -> None:
        example = self.get("target", "example")
        if example not in EXAMPLES:
            raise ConfigError(f"target.example: unknown example {example!r}")
        kinds = self.get_list("dynamics", "kinds", ["LD"])
        for name in kinds:
            try:
                DynamicsKind(name)
            except ValueError:
                raise ConfigError(f"dynamics.kinds: unknown kind {name!r}") from None
        if self.get_float("sampler", "step_size") <= 0:
            raise ConfigError("sampler.step_size: must be positive")
        if self.get_int("sampler", "n_steps") < 1:
            raise ConfigError("sampler.n_steps: must be at least 1")
        if self.get_int("sampler", "n_chains", 1) < 1:
            raise ConfigError("sampler.n_chains: must be at least 1")
        needs_delta = any(DynamicsKind(k).needs_skew for k in kinds)
        if needs_delta and self.get("sampler", "delta") is None:
            raise ConfigError("sampler.delta: required by an irreversible kind")
        for name in self.get_list("diagnostics", "observables", ["phi1", "phi2"]):
            if name not in _OBSERVABLES:
                raise ConfigError(f"diagnostics.observables: unknown observable {name!r}")


def default_config(example: str) -> RunConfig:
    """Desk-scale run configuration for one of the four examples.

    Step sizes, perturbation strengths, initial conditions, and
    minibatch sizes follow the experiment setups; chain counts and step
    counts are reduced to desk scale (--paper-scale restores the larger
    values, stored in the paper_scale section).
    """
    if example not in EXAMPLES:
        raise ConfigError(f"target.example: unknown example {example!r}")
    cfg = RunConfig()
    cfg.set("target", "example", example)
    cfg.set("dynamics", "kinds", "LD,RM,Irr,RMIrr,GiIrr")
    cfg.set("diagnostics", "observables", "phi1,phi2")
    cfg.set("diagnostics", "n_batches", 20)
    cfg.set("diagnostics", "n_checkpoints", 50)
    cfg.set("output", "directory", "out")
    cfg.set("sampler", "beta", 0.5)
    cfg.set("sampler", "master_seed", 2024)

    if example == "gaussian":
        cfg.set("target", "dimension", 3)
        cfg.set("target", "n_data", 10)
        cfg.set("target", "data_seed", 11)
        cfg.set("target", "prior_eigenvalues", "0.2,0.01,0.05")
        cfg.set("target", "eigenvector_seed", 7)
        cfg.set("target", "data_precision_scale", 0.025)
        cfg.set("sampler", "step_size", 5e-3)
        cfg.set("sampler", "n_steps", 100_000)
        cfg.set("sampler", "n_chains", 100)
        cfg.set("sampler", "delta", 1.0)
        cfg.set("sampler", "minibatch", 2)
        cfg.set("paper_scale", "n_chains", 1000)
    elif example == "normalparams":
        cfg.set("target", "n_data", 30)
        cfg.set("target", "data_seed", 13)
        cfg.set("target", "mu_true", 0.0)
        cfg.set("target", "sigma_true", 10.0)
        cfg.set("sampler", "step_size", 1e-3)
        cfg.set("sampler", "n_steps", 100_000)
        cfg.set("sampler", "n_chains", 100)
        cfg.set("sampler", "delta", 2.0)
        cfg.set("sampler", "minibatch", 6)
        cfg.set("sampler", "burn_in_time", 10.0)
        cfg.set("sampler", "theta0", "5.0,20.0")
        cfg.set("paper_scale", "n_steps", 1_000_000)
        cfg.set("paper_scale", "n_chains", 1000)
    elif example == "logistic":
        cfg.set("target", "n_data", 400)
        cfg.set("target", "dimension", 20)
        cfg.set("target", "data_seed", 17)
        cfg.set("target", "alpha", 1.0)
        cfg.set("target", "skew_seed", 7)
        cfg.set("sampler", "step_size", 1e-4)
        cfg.set("sampler", "n_steps", 40_000)
        cfg.set("sampler", "n_chains", 20)
        cfg.set("sampler", "delta", 1.0)
        cfg.set("sampler", "minibatch", 10)
        cfg.set("paper_scale", "n_steps", 400_000)
        cfg.set("paper_scale", "n_chains", 100)
    else:
        cfg.set("target", "n_sources", 3)
        cfg.set("target", "n_data", 400)
        cfg.set("target", "data_seed", 19)
        cfg.set("target", "weight_precision", 1.0)
        cfg.set("target", "theta0_seed", 3)
        cfg.set("diagnostics", "observables", "phi1,phi2,phi3")
        cfg.set("sampler", "step_size", 2e-5)
        cfg.set("sampler", "n_steps", 1_000_000)
        cfg.set("sampler", "n_chains", 10)
        cfg.set("sampler", "delta", 1.0)
        cfg.set("sampler", "minibatch", 40)
        cfg.set("sampler", "burn_in_time", 2.0)
        cfg.set("paper_scale", "n_steps", 100_000_000)
        cfg.set("paper_scale", "n_chains", 100)
        cfg.set("paper_scale", "burn_in_time", 20.0)
    return cfg


def apply_paper_scale(config: RunConfig) -> RunConfig:
    """Overlay the paper_scale section onto the sampler block."""
    scaled = RunConfig.from_dict(config.to_dict())
    for key, value in scaled.sections.get("paper_scale", {}).items():
        scaled.set("sampler", key, value)
    return scaled


def build_target(config: RunConfig):
    """Construct the posterior target and its run context from a config.

    Returns (target, context) where context carries the constant skew
    matrix for Irr/RMIrr, the GiIrr field argument, the initial state,
    reference expectations when known exactly, and dataset checksums.
    """
    example = config.get("target", "example")
    ctx: dict = {"example": example}
    delta = config.get_float("sampler", "delta", 0.0)

    if example == "gaussian":
        d = config.get_int("target", "dimension", 3)
        eigs = [float(v) for v in config.get_list("target", "prior_eigenvalues", ["0.2", "0.01", "0.05"])]
        if len(eigs) != d:
            raise ConfigError("target.prior_eigenvalues: need one eigenvalue per dimension")
        rng = np.random.default_rng(config.get_int("target", "eigenvector_seed", 7))
        basis = np.linalg.qr(rng.standard_normal((d, d)))[0]
        prior_precision = basis @ np.diag(eigs) @ basis.T
        gx = config.get_float("target", "data_precision_scale", 0.025) * np.eye(d)
        data = datasets.gen_gaussian_dataset(
            config.get_int("target", "data_seed", 11),
            config.get_int("target", "n_data", 10),
            np.zeros(d),
            gx,
        )
        target = GaussianLinearTarget(prior_precision, gx, data.features)
        ctx["skew"] = skew_fixed_pattern(delta, d)
        ctx["giirr_skew"] = ctx["skew"]
        ctx["theta0"] = np.zeros(d)
        mean, prec = target.posterior_moments()
        cov = np.linalg.inv(prec)
        ctx["reference"] = {
            "phi1": float(mean.sum()),
            "phi2": float((mean**2).sum() + np.trace(cov)),
            "phi3": float(mean.sum() ** 2 + cov.sum()),
        }
        ctx["dataset"] = data
    elif example == "normalparams":
        sigma_true = config.get_float("target", "sigma_true", 10.0)
        data = datasets.gen_gaussian_dataset(
            config.get_int("target", "data_seed", 13),
            config.get_int("target", "n_data", 30),
            [config.get_float("target", "mu_true", 0.0)],
            [[1.0 / sigma_true**2]],
        )
        target = NormalParamsTarget(data.features[:, 0])
        ctx["skew"] = skew_fixed_pattern(delta, 2)
        ctx["giirr_skew"] = ctx["skew"]
        theta0 = config.get_list("sampler", "theta0", ["5.0", "20.0"])
        ctx["theta0"] = np.asarray([float(v) for v in theta0])
        ctx["dataset"] = data
    elif example == "logistic":
        path = config.get("target", "data_path")
        if path:
            schema = datasets.Schema(label_column=-1)
            data = datasets.load_delimited_dataset(path, schema)
        else:
            data = datasets.gen_logistic_dataset(
                config.get_int("target", "data_seed", 17),
                config.get_int("target", "n_data", 400),
                config.get_int("target", "dimension", 20),
            )
        target = LogisticRegressionTarget(
            data.features, data.labels, alpha=config.get_float("target", "alpha", 1.0)
        )
        d = data.features.shape[1]
        ctx["skew"] = delta * skew_random_unit(config.get_int("target", "skew_seed", 7), d)
        ctx["giirr_skew"] = ctx["skew"]
        ctx["theta0"] = np.zeros(d)
        ctx["dataset"] = data
    else:
        m = config.get_int("target", "n_sources", 3)
        sources, mixed, mixing = datasets.gen_ica_sources(
            config.get_int("target", "data_seed", 19),
            m,
            config.get_int("target", "n_data", 400),
        )
        target = IcaTarget(
            mixed.T, weight_precision=config.get_float("target", "weight_precision", 1.0)
        )
        c0 = target.scaled_skew(delta)
        ctx["skew"] = target.kron_skew(c0)
        ctx["giirr_c0"] = c0
        rng = np.random.default_rng(config.get_int("target", "theta0_seed", 3))
        signs = rng.integers(0, 2, size=m) * 2 - 1
        ctx["theta0"] = target.to_vec(np.diag(signs.astype(float)))
        ctx["dataset"] = datasets.Dataset(
            features=mixed.T,
            provenance={"generator": "ica", "seed": config.get_int("target", "data_seed", 19)},
        )
    return target, ctx


def _checkpoint_steps(n_steps: int, burn_steps: int, n_checkpoints: int) -> np.ndarray:
    lo = max(burn_steps + 1, 10)
    if n_checkpoints < 1 or lo >= n_steps:
        return np.asarray([n_steps])
    grid = np.logspace(np.log10(lo), np.log10(n_steps), n_checkpoints)
    return np.unique(np.round(grid).astype(int))


@dataclass
class KindResult:
    """Everything measured for one dynamics kind."""

    kind: str
    stats: dict
    avar_mean: dict
    avar_std: dict
    checkpoint_steps: np.ndarray
    mse_trace: dict
    bias_sq_trace: dict
    var_trace: dict
    ksd: Optional[diagnostics.KsdReport]
    n_aborted: int
    abort_steps: list


@dataclass
class ResultBundle:
    """Full output of run_experiment, ready for emit_results."""

    config: RunConfig
    kinds: list
    reference: dict
    dataset_checksum: str
    master_seed: int
    wall_clock: float
    appendix: Optional[list] = None


def _reference_values(target, ctx, config: RunConfig, observables) -> dict:
    """E_pi[phi] per observable: exact when available, else an oracle run.

    The oracle is a long unperturbed chain at a smaller step size,
    following the reference-trajectory recipe; its length is
    configurable to keep desk-scale runs quick.
    """
    if "reference" in ctx:
        return {obs.name: ctx["reference"][obs.name] for obs in observables}
    steps = config.get_int("diagnostics", "reference_steps", 200_000)
    h = config.get_float("diagnostics", "reference_step_size", config.get_float("sampler", "step_size"))
    ref_cfg = SamplerConfig(
        step_size=h,
        n_steps=steps,
        beta=config.get_float("sampler", "beta", 0.5),
        burn_in_time=config.get_float("sampler", "burn_in_time", 0.0),
        master_seed=config.get_int("diagnostics", "reference_seed", 999),
        n_chains=1,
        theta0=ctx["theta0"],
    )
    result = run_ensemble(target, DynamicsKind.LD, ref_cfg, observables=observables)
    return {name: float(result.finals[name][0]) for name in result.finals}


def run_experiment(config: RunConfig, n_threads: int = 1, dump_states: bool = False) -> ResultBundle:
    """Execute every dynamics kind in the config and gather diagnostics."""
    config.validate()
    started = time.perf_counter()
    target, ctx = build_target(config)

    obs_names = config.get_list("diagnostics", "observables", ["phi1", "phi2"])
    observables = [_OBSERVABLES[name]() for name in obs_names]
    sampler_cfg = SamplerConfig(
        step_size=config.get_float("sampler", "step_size"),
        n_steps=config.get_int("sampler", "n_steps"),
        beta=config.get_float("sampler", "beta", 0.5),
        delta=config.get_float("sampler", "delta", 0.0),
        burn_in_time=config.get_float("sampler", "burn_in_time", 0.0),
        minibatch=(config.get_int("sampler", "minibatch") if config.get("sampler", "minibatch") else None),
        master_seed=config.get_int("sampler", "master_seed", 0),
        n_chains=config.get_int("sampler", "n_chains", 1),
        theta0=ctx["theta0"],
    )
    if sampler_cfg.minibatch is not None and sampler_cfg.minibatch > target.data_size:
        raise ConfigError("sampler.minibatch: exceeds dataset size")

    n_batches = config.get_int("diagnostics", "n_batches", 20)
    checkpoints = _checkpoint_steps(
        sampler_cfg.n_steps,
        sampler_cfg.burn_in_steps,
        config.get_int("diagnostics", "n_checkpoints", 50),
    )
    ksd_sizes = [int(float(v)) for v in config.get_list("diagnostics", "ksd_sizes", [])]
    reference = _reference_values(target, ctx, config, observables)

    kind_results = []
    for kind_name in config.get_list("dynamics", "kinds", ["LD"]):
        kind = DynamicsKind(kind_name)
        giirr = None
        if kind is DynamicsKind.GIIRR and "giirr_c0" in ctx:
            giirr = target.giirr_field(ctx["giirr_c0"])
        elif kind is DynamicsKind.GIIRR:
            giirr = target.giirr_field(ctx["giirr_skew"])
        result = run_ensemble(
            target,
            kind,
            sampler_cfg,
            observables=observables,
            skew=ctx["skew"],
            giirr=giirr,
            checkpoint_steps=checkpoints,
            n_batches=n_batches,
            n_threads=n_threads,
            store_states=dump_states or bool(ksd_sizes),
        )

        stats = {}
        avar_mean = {}
        avar_std = {}
        mse_tr = {}
        bias_tr = {}
        var_tr = {}
        for name in result.finals:
            stats[name] = diagnostics.ensemble_stats(result.finals[name], reference[name])
            finite_avar = result.avar[name][np.isfinite(result.avar[name])]
            avar_mean[name] = float(finite_avar.mean()) if finite_avar.size else float("nan")
            avar_std[name] = float(finite_avar.std(ddof=0)) if finite_avar.size else float("nan")
            per_step = []
            for col in range(result.checkpoints[name].shape[1]):
                vals = result.checkpoints[name][:, col]
                vals = vals[np.isfinite(vals)]
                if vals.size >= 2:
                    st = diagnostics.ensemble_stats(vals, reference[name])
                    per_step.append((st.bias**2, st.variance, st.mse))
                else:
                    per_step.append((float("nan"),) * 3)
            bias_tr[name] = np.asarray([p[0] for p in per_step])
            var_tr[name] = np.asarray([p[1] for p in per_step])
            mse_tr[name] = np.asarray([p[2] for p in per_step])

        ksd_rep = None
        if ksd_sizes and result.states is not None:
            chain0 = result.states[0, 1:]
            ksd_rep = diagnostics.ksd_report(chain0, target.grad_log, sample_sizes=ksd_sizes)

        kind_results.append(
            KindResult(
                kind=kind.value,
                stats=stats,
                avar_mean=avar_mean,
                avar_std=avar_std,
                checkpoint_steps=result.checkpoint_steps,
                mse_trace=mse_tr,
                bias_sq_trace=bias_tr,
                var_trace=var_tr,
                ksd=ksd_rep,
                n_aborted=len(result.aborts),
                abort_steps=result.aborts,
            )
        )

    appendix = None
    if "appendix" in config.sections:
        appendix = discretization.sweep_grid(
            [float(v) for v in config.get_list("appendix", "step_sizes", ["1e-3", "5e-3"])],
            [int(float(v)) for v in config.get_list("appendix", "chain_lengths", ["100", "1000"])],
            [float(v) for v in config.get_list("appendix", "deltas", ["0", "2", "5", "10"])],
            n_replicates=config.get_int("appendix", "replicates", 10_000),
            seed=config.get_int("appendix", "seed", 0),
        )

    return ResultBundle(
        config=config,
        kinds=kind_results,
        reference=reference,
        dataset_checksum=ctx["dataset"].checksum(),
        master_seed=sampler_cfg.master_seed,
        wall_clock=time.perf_counter() - started,
        appendix=appendix,
    )


def _fmt(value) -> str:
    return format(float(value), ".17g")


def emit_results(bundle: ResultBundle, out_dir) -> list:
    """Write summary.json and the CSV tables; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    obs_names = list(bundle.kinds[0].stats.keys()) if bundle.kinds else []

    lines = ["kind,observable,avar_mean,avar_std"]
    for kr in bundle.kinds:
        for name in obs_names:
            lines.append(f"{kr.kind},{name},{_fmt(kr.avar_mean[name])},{_fmt(kr.avar_std[name])}")
    path = out / "avar_table.csv"
    path.write_text("\n".join(lines) + "\n")
    written.append(path)

    header = ["kind", "step"]
    for name in obs_names:
        header += [f"bias_sq_{name}", f"variance_{name}", f"mse_{name}"]
    lines = [",".join(header)]
    for kr in bundle.kinds:
        for idx, step in enumerate(kr.checkpoint_steps):
            row = [kr.kind, str(int(step))]
            for name in obs_names:
                row += [
                    _fmt(kr.bias_sq_trace[name][idx]),
                    _fmt(kr.var_trace[name][idx]),
                    _fmt(kr.mse_trace[name][idx]),
                ]
            lines.append(",".join(row))
    path = out / "mse_trace.csv"
    path.write_text("\n".join(lines) + "\n")
    written.append(path)

    lines = ["kind,n_samples,ksd"]
    for kr in bundle.kinds:
        if kr.ksd is None:
            continue
        for k, val in zip(kr.ksd.sample_sizes, kr.ksd.values):
            lines.append(f"{kr.kind},{int(k)},{_fmt(val)}")
    path = out / "ksd.csv"
    path.write_text("\n".join(lines) + "\n")
    written.append(path)

    if bundle.appendix is not None:
        lines = ["h,n_steps,delta,quantity,closed_form,mc_estimate,mc_se,agrees"]
        for rep in bundle.appendix:
            su = rep.setup
            for name in rep.closed:
                lines.append(
                    ",".join(
                        [
                            _fmt(su.step_size),
                            str(su.n_steps),
                            _fmt(su.delta),
                            name,
                            _fmt(rep.closed[name]),
                            _fmt(rep.mc[name]),
                            _fmt(rep.se[name]),
                            str(int(rep.agreements[name])),
                        ]
                    )
                )
        path = out / "appendix_sweep.csv"
        path.write_text("\n".join(lines) + "\n")
        written.append(path)

    summary = {
        "config": bundle.config.to_dict(),
        "rng_algorithm": "PCG64",
        "master_seed": bundle.master_seed,
        "dataset_checksum": bundle.dataset_checksum,
        "wall_clock_seconds": bundle.wall_clock,
        "reference_values": bundle.reference,
        "kinds": {
            kr.kind: {
                "aborted_chains": kr.n_aborted,
                "abort_steps": [[int(c), int(s)] for c, s in kr.abort_steps],
                "observables": {
                    name: {
                        "mean": st.mean,
                        "bias": st.bias,
                        "variance": st.variance,
                        "mse": st.mse,
                        "n_chains": st.n_chains,
                        "avar_mean": kr.avar_mean[name],
                        "avar_std": kr.avar_std[name],
                    }
                    for name, st in kr.stats.items()
                },
            }
            for kr in bundle.kinds
        },
    }
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2) + "\n")
    written.append(path)
    return written
