"""
Command line entry point.

Subcommands
-----------
run
    Execute an experiment suite from a JSON config and write one
    ``report.json`` and ``samples.csv`` per experiment plus ``manifest.json``.
    Exits 0 iff every experiment ran and every gate passed.
sample
    Dump equilibrium configurations as CSV.
riemann
    Tabulate the entropy solution of a Riemann problem as ``xi,rho`` CSV.
selftest
    Check the statistical decision rules on synthetic data.

Set ``ZRP_LOG`` to a logging level name (``DEBUG``, ``INFO``, ...) for
progress messages on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import RateFunction, sample_occupancies
from .experiments.config import ConfigError, canonical_json, config_digest, parse_config
from .experiments.riemann import profile
from .experiments.runner import SEED_RULE, resolve_parallelism, run_experiment
from .observables import write_samples_csv
from .stats import calibrate

log = logging.getLogger("zrplab")

U64_MAX = 2**64 - 1


@dataclass
class RunManifest:
    version: str
    config_digest: str
    master_seed: int
    seed_rule: str
    started: str
    finished: str = ""
    experiments: dict = field(default_factory=dict)
    passed: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run_suite(configs: list, out_dir, seed: int, parallelism=1) -> RunManifest:
    """Run every experiment, write its artifacts and return the manifest.

    Reports and samples depend only on the configs and ``seed``; the
    worker count changes nothing but wall time.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = resolve_parallelism(parallelism)
    manifest = RunManifest(__version__, config_digest(configs), int(seed), SEED_RULE, _now())
    _write_text(out / "config.canonical.json", canonical_json(configs) + "\n")
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for cfg in configs:
            log.info("running %s (%s)", cfg.label, cfg.scenario)
            report, samples = run_experiment(cfg, seed, workers, pool)
            exp_dir = out / cfg.label
            exp_dir.mkdir(parents=True, exist_ok=True)
            _write_text(exp_dir / "report.json", report.to_json())
            write_samples_csv(exp_dir / "samples.csv", samples)
            for line in report.lines():
                log.info("%s", line)
            manifest.experiments[cfg.label] = {
                "report": f"{cfg.label}/report.json",
                "samples": f"{cfg.label}/samples.csv",
                "status": report.status,
                "passed": report.passed,
            }
    finally:
        if pool is not None:
            pool.shutdown()
    manifest.passed = all(e["passed"] for e in manifest.experiments.values())
    manifest.finished = _now()
    _write_text(out / "manifest.json", manifest.to_json())
    return manifest


# ------------------------------------------------------------------ commands


def _cmd_run(args) -> int:
    try:
        configs = parse_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    manifest = run_suite(configs, args.out, args.seed, args.parallel)
    for name, entry in manifest.experiments.items():
        verdict = "PASS" if entry["passed"] else ("ERROR" if entry["status"] != "ok" else "FAIL")
        print(f"{verdict:5s} {name}")
    print(f"manifest: {Path(args.out) / 'manifest.json'}")
    return 0 if manifest.passed else 1


def _cmd_sample(args) -> int:
    g = RateFunction.independent() if args.rate == "independent" else RateFunction.indicator()
    rng = np.random.default_rng(args.seed)
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "site", "occupancy"])
        for r in range(args.count):
            eta = sample_occupancies(args.rho, args.L, rng, g)
            w.writerows((r, x, int(k)) for x, k in enumerate(eta))
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def _cmd_riemann(args) -> int:
    xi, rho = profile(args.rho_left, args.rho_right, args.t, args.points)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["xi", "rho"])
    for a, b in zip(xi, rho):
        w.writerow([repr(float(a)), repr(float(b))])
    return 0


def _cmd_selftest(args) -> int:
    result = calibrate(np.random.default_rng(args.seed), trials=args.trials)
    print(json.dumps(result.to_dict(), sort_keys=True, indent=2))
    return 0 if result.passed else 1


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _parallel(text: str):
    if text == "auto":
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer or 'auto'")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zrplab", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"zrplab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment suite")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=_seed, default=0, help="master seed (u64)")
    p.add_argument("--parallel", type=_parallel, default=1, help="worker processes, or 'auto'")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sample", help="dump equilibrium configurations as CSV")
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--L", type=int, default=64, help="ring size")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--rate", choices=("indicator", "independent"), default="indicator")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("riemann", help="entropy solution of a Riemann problem as xi,rho CSV")
    p.add_argument("--rho-left", type=float, required=True)
    p.add_argument("--rho-right", type=float, required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=_cmd_riemann)

    p = sub.add_parser("selftest", help="calibrate the statistical gates on synthetic data")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(func=_cmd_selftest)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("ZRP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
