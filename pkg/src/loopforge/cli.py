"""Command line runner: ``loopforge run <experiment> [flags]``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .lab import KINDS, NEGATIVE_CONTROLS, ConfigError, ExperimentConfig, run_experiment
from .report import RunManifest, write_outputs
from .seeding import resolve_seed

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loopforge", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment and write its report")
    run.add_argument("experiment", choices=KINDS)
    run.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields; flags override it")
    run.add_argument("--graph", help="fixture id or path to a JSON graph")
    run.add_argument("--x", type=int)
    run.add_argument("--y", type=int)
    run.add_argument("--a", type=float)
    run.add_argument("--b", type=float)
    run.add_argument("--mesh", type=int, help="edge subdivision K")
    run.add_argument("--replicas", type=int)
    run.add_argument("--parity", choices=("odd", "even", "none"))
    run.add_argument("--negative-control", choices=NEGATIVE_CONTROLS)
    run.add_argument("--option", action="append", default=[], metavar="KEY=JSON",
                     help="experiment-specific option, e.g. C=1.5 or sizes=[4,8]")
    run.add_argument("--seed", type=int, help="root seed (falls back to $LOOPFORGE_SEED, then 0)")
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--quiet", action="store_true")
    return ap


def _parse_option(text: str):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"bad --option {text!r}, expected KEY=VALUE")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def config_from_args(args) -> ExperimentConfig:
    doc = {}
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    doc["kind"] = args.experiment
    for name in ("graph", "x", "y", "a", "b", "mesh", "replicas", "parity", "negative_control"):
        val = getattr(args, name)
        if val is not None:
            doc[name] = val
    if args.option:
        doc["options"] = dict(doc.get("options") or {}, **dict(map(_parse_option, args.option)))
    doc["seed"] = resolve_seed(args.seed if args.seed is not None else doc.get("seed"))
    doc["jobs"] = args.jobs
    if args.jobs < 1:
        raise ConfigError("--jobs must be positive")
    try:
        return ExperimentConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def run(args, argv=None) -> int:
    try:
        cfg = config_from_args(args)
        started, t0 = _now(), time.perf_counter()
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = RunManifest(
        command=["loopforge", *(argv if argv is not None else sys.argv[1:])],
        config=dict(cfg.to_dict(), config_path=str(args.config) if args.config else None),
        seed=cfg.seed,
        started=started,
        finished=_now(),
        wall_seconds=round(time.perf_counter() - t0, 3),
    )
    paths = write_outputs(report, manifest, args.out)
    if not args.quiet:
        print(report.summary())
        print(f"wrote {paths['csv']}")
    if report.passed:
        return EXIT_OK
    for row in report.rows:
        if not row.passed:
            print(f"FAILED {row.functional}: statistic={row.statistic:.6g} p={row.p} "
                  f"reference={row.reference} rule={row.rule}", file=sys.stderr)
    return EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args, argv)


if __name__ == "__main__":
    sys.exit(main())
