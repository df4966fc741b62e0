"""Command line entry point: ``geolangevin run <config-file>``."""

from __future__ import annotations

import argparse
import sys

from .runner import ConfigError, RunConfig, apply_paper_scale, emit_results, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geolangevin",
        description="Run perturbed-Langevin sampling experiments from a config file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a run configuration")
    run.add_argument("config", help="sectioned key=value config file")
    run.add_argument("--seed", type=int, default=None, help="override sampler.master_seed")
    run.add_argument("--out", default=None, help="override output.directory")
    run.add_argument(
        "--paper-scale",
        action="store_true",
        help="overlay the config's paper_scale section (full-size chain counts)",
    )
    run.add_argument(
        "--dump-states",
        action="store_true",
        help="retain full state trajectories in memory (diagnostics only)",
    )
    run.add_argument("--threads", type=int, default=1, help="worker threads for chain groups")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_ini(args.config)
        if args.paper_scale:
            config = apply_paper_scale(config)
        if args.seed is not None:
            config.set("sampler", "master_seed", args.seed)
        out_dir = args.out or config.get("output", "directory", "out")
        bundle = run_experiment(config, n_threads=args.threads, dump_states=args.dump_states)
        paths = emit_results(bundle, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for kr in bundle.kinds:
        note = f" ({kr.n_aborted} chains aborted)" if kr.n_aborted else ""
        phi = next(iter(kr.avar_mean))
        print(f"{kr.kind}: E[AVar_{phi}] = {kr.avar_mean[phi]:.4g}{note}")
    for path in paths:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
