"""Command-line front end.

One subcommand per experiment tag.  A run writes, per experiment,
`<tag>.csv` (row data), `<tag>-plot.csv` (tidy plot rows) and
`<tag>-summary.txt` (config echo, versions, wall-clock, check outcomes) into
the output directory, which is resolved from --out, then the config file,
then $SPDELAB_OUT, then ./runs.  Diagnostics go to stderr; the CSVs are
deterministic for a fixed config and seed.

Exit status: 0 all in-config checks passed, 1 a check failed,
2 invalid config, 3 numerical blow-up.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

from .config import (
    EXPERIMENT_TAGS,
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    load_config,
    render_config,
    validate_config,
)
from .experiments import ExperimentResult, run_experiment
from .integrator import BlowupError
from .reporting import emit_plotdata, version_entries, write_csv, write_summary

OUT_DIR_ENV = "SPDELAB_OUT"


def resolve_out_dir(cfg: ExperimentConfig) -> str:
    if cfg.out_dir:
        return cfg.out_dir
    return os.environ.get(OUT_DIR_ENV) or "runs"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdelab",
        description="Dissipative stochastic PDE experiments: bounds, moments, invariance checks.",
        epilog=f"Default output directory: --out, config out.dir, ${OUT_DIR_ENV}, then ./runs.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for tag in EXPERIMENT_TAGS:
        sp = sub.add_parser(tag, help=f"run the {tag} experiment")
        sp.add_argument("--config", metavar="PATH", help="config file of dotted.key = value lines")
        sp.add_argument("--seed", type=int, metavar="U64", help="override run.seed")
        sp.add_argument("--replicas", type=int, metavar="N", help="override run.replicas")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable), e.g. --set model.n_modes=64",
        )
    return parser


def _summary_entries(result: ExperimentResult, cfg: ExperimentConfig, elapsed: float) -> list:
    entries: list[tuple[str, object]] = [("experiment", result.experiment)]
    for line in render_config(cfg).splitlines():
        key, _, value = line.partition(" = ")
        entries.append((f"config.{key}", value))
    entries.extend(version_entries())
    entries.append(("run.wall_clock_seconds", f"{elapsed:.3f}"))
    for check in result.checks:
        entries.append((f"check.{check.name}", "pass" if check.passed else "fail"))
        entries.append((f"check.{check.name}.detail", check.detail))
    entries.append(("result.rows", len(result.rows)))
    entries.append(("result.status", "pass" if result.passed else "fail"))
    return entries


def write_result_files(result: ExperimentResult, cfg: ExperimentConfig, out_dir, elapsed: float) -> list[str]:
    base = os.path.join(out_dir, result.experiment)
    paths = [base + ".csv", base + "-plot.csv", base + "-summary.txt"]
    write_csv(paths[0], result.header, result.rows)
    emit_plotdata(paths[1], result)
    write_summary(paths[2], _summary_entries(result, cfg, elapsed))
    return paths


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = apply_overrides(cfg, args.overrides)
        updates: dict[str, object] = {"experiment": args.experiment}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.replicas is not None:
            updates["replicas"] = args.replicas
        if args.out is not None:
            updates["out_dir"] = args.out
        cfg = dataclasses.replace(cfg, **updates)
        validate_config(cfg)
    except ConfigError as exc:
        print(f"spdelab: config error: {exc}", file=sys.stderr)
        return 2

    out_dir = resolve_out_dir(cfg)
    os.makedirs(out_dir, exist_ok=True)

    start = time.perf_counter()
    try:
        results = run_experiment(cfg)
    except ConfigError as exc:
        print(f"spdelab: config error: {exc}", file=sys.stderr)
        return 2
    except BlowupError as exc:
        print(f"spdelab: blow-up: {exc}", file=sys.stderr)
        return 3
    elapsed = time.perf_counter() - start

    ok = True
    for result in results:
        for path in write_result_files(result, cfg, out_dir, elapsed):
            print(f"spdelab: wrote {path}", file=sys.stderr)
        for check in result.checks:
            status = "pass" if check.passed else "FAIL"
            print(f"spdelab: [{result.experiment}] {check.name}: {status} ({check.detail})", file=sys.stderr)
        ok = ok and result.passed
    if cfg.experiment == "all":
        combined = os.path.join(out_dir, "all-plot.csv")
        emit_plotdata(combined, results)
        print(f"spdelab: wrote {combined}", file=sys.stderr)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
