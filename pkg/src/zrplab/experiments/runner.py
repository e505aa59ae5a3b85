"""
Run experiments over a worker pool with deterministic seeding and reduction.

Each experiment expands into an ordered list of units (replicas, or
replica/parameter pairs for sweeps).  Unit ``i`` of experiment ``e`` draws
from ``numpy.random.default_rng`` seeded with the first 16 bytes of
``sha256(f"{master}|{e}|{i}")``, so its stream does not depend on which
worker runs it or in what order.  Results are gathered by unit index before
reduction, which makes reports byte-identical for any parallelism.
"""

from __future__ import annotations

import hashlib
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from .report import ExperimentReport
from .scenarios import get_scenario

__all__ = ["SEED_RULE", "unit_seed", "unit_rng", "run_experiment", "resolve_parallelism"]

log = logging.getLogger(__name__)

SEED_RULE = "int.from_bytes(sha256(f'{master}|{experiment}|{unit}').digest()[:16], 'little')"

# units handed to a worker at once; keeps IPC overhead low for cheap units
CHUNK_TARGET = 64


def unit_seed(master: int, experiment: str, unit: int) -> int:
    digest = hashlib.sha256(f"{master}|{experiment}|{unit}".encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def unit_rng(master: int, experiment: str, unit: int) -> np.random.Generator:
    return np.random.default_rng(unit_seed(master, experiment, unit))


def resolve_parallelism(value) -> int:
    if value in (None, "auto"):
        return max(1, os.cpu_count() or 1)
    n = int(value)
    if n < 1:
        raise ValueError("parallelism must be a positive integer or 'auto'")
    return n


def _run_chunk(cfg, master: int, indices: Sequence[int], units: Sequence) -> list:
    scenario = get_scenario(cfg.scenario)
    out = []
    for i, unit in zip(indices, units):
        out.append(scenario.run_unit(cfg, unit, unit_rng(master, cfg.label, i)))
    return out


def _chunks(n: int, workers: int) -> list[range]:
    if n == 0:
        return []
    size = max(1, min(CHUNK_TARGET, -(-n // (4 * workers))))
    return [range(a, min(a + size, n)) for a in range(0, n, size)]


def run_experiment(cfg, master: int, parallel: int = 1, pool: ProcessPoolExecutor | None = None) -> tuple[
        ExperimentReport, list]:
    """Run every unit of ``cfg`` and reduce into a report and sample rows.

    Any exception, in a worker or in the reduction, marks the report as
    errored instead of propagating.
    """
    scenario = get_scenario(cfg.scenario)
    seeds = {"master": int(master), "rule": SEED_RULE, "units": 0}
    report = ExperimentReport(cfg.label, cfg.scenario, cfg.model_dump(mode="json"), seeds)
    try:
        scenario.validate(cfg)
        units = list(scenario.units(cfg))
        seeds["units"] = len(units)
        chunks = _chunks(len(units), parallel)
        log.info("%s: %d units in %d chunks", cfg.label, len(units), len(chunks))
        if pool is None or parallel <= 1:
            parts = [_run_chunk(cfg, master, list(ch), [units[i] for i in ch]) for ch in chunks]
        else:
            futures = [pool.submit(_run_chunk, cfg, master, list(ch), [units[i] for i in ch]) for ch in chunks]
            parts = [f.result() for f in futures]
        results = [r for part in parts for r in part]
        rows, params, samples = scenario.reduce(cfg, units, results)
        report.rows = rows
        report.params = params
        return report, samples
    except Exception as exc:  # noqa: BLE001 - an errored experiment must not stop the suite
        log.error("%s errored: %s", cfg.label, exc)
        log.debug("%s", traceback.format_exc())
        report.status = "errored"
        report.error = f"{type(exc).__name__}: {exc}"
        return report, []
