"""Acceptance suite: one test per criterion at the stated sizes and tolerances.

Each test prints a single ``criterion N: PASS|FAIL`` line (also collected in
the terminal summary) and then asserts the verdict.  The statistical gates
are those of the report rows: equality within four standard errors (or the
stated relative tolerance), exponent bounds within three.

All simulations use master seed ``ACCEPTANCE_SEED``; a full run takes on
the order of a quarter hour on one core.
"""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from zrplab.cli import run_suite
from zrplab.ensemble import (
    block_mean_fourth_moment,
    canonical_mean_g,
    ensemble_equivalence_gap,
    flux,
    flux_derivative,
    occupancy_variance,
)
from zrplab.experiments import parse_config_text, run_experiment

ACCEPTANCE_SEED = 20240229


def _run(entry: dict):
    (cfg,) = parse_config_text(json.dumps(entry))
    report, _ = run_experiment(cfg, ACCEPTANCE_SEED)
    assert report.status == "ok", report.error
    return report


def _fmt(row) -> str:
    est = "n/a" if row.estimate is None else f"{row.estimate:.4g}"
    se = "" if row.se is None else f"+/-{row.se:.2g}"
    tv = "" if row.target_value is None else f" vs {row.target_value:.4g}"
    return f"{row.target}={est}{se}{tv} [{row.verdict}]"


def _verdict(log, number, report, targets):
    rows = [report.row(t) for t in targets]
    ok = all(r.verdict == "pass" for r in rows)
    log(number, ok, "; ".join(_fmt(r) for r in rows))
    return ok, rows


def _enumerated_mean(K, n):
    comps = [c for c in np.ndindex(*(n + 1,) * K) if sum(c) == n]
    return Fraction(sum(1 for c in comps if c[0] >= 1), len(comps))


def test_criterion_01_exact_oracles(acceptance_log):
    start = time.perf_counter()
    checks = []
    for rho, phi, dphi, chi in [(0.0, 0.0, 1.0, 0.0), (1.0, 0.5, 0.25, 2.0), (3.0, 0.75, 1 / 16, 12.0)]:
        checks.append(abs(flux(rho) - phi) < 1e-12 and abs(flux_derivative(rho) - dphi) < 1e-12
                      and abs(occupancy_variance(rho) - chi) < 1e-9)
    checks.append(all(abs(occupancy_variance(r) * flux_derivative(r) - flux(r)) <= 1e-12
                      for r in (0.1, 0.5, 1.0, 3.0, 10.0)))
    checks.append(all(canonical_mean_g(K, n) == _enumerated_mean(K, n) for K in range(1, 6) for n in range(9)))
    checks.append(ensemble_equivalence_gap(2, 2) == Fraction(1, 6))
    sup_gap = max(K * ensemble_equivalence_gap(K, K) for K in range(2, 4097))
    checks.append(sup_gap <= 1)
    ratio = 4096**2 * block_mean_fourth_moment(4096, 1.0) / (3 * occupancy_variance(1.0) ** 2)
    checks.append(abs(ratio - 1) <= 0.01)
    elapsed = time.perf_counter() - start
    ok = all(checks) and elapsed < 1.0
    acceptance_log(1, ok, f"{sum(checks)}/{len(checks)} oracle groups, sup K*gap={float(sup_gap):.4f}, "
                          f"K^2 m4/(3 sigma^4)={ratio:.5f}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_stationarity(acceptance_log):
    report = _run({"scenario": "stationarity", "rho": 1.0, "N": 256, "c": 32, "p_right": 1.0})
    ok, _ = _verdict(acceptance_log, 2, report,
                     ["occupancy chi2 p-value", "mean bond current rate", "particle conservation"])
    assert ok


def test_criterion_03_static_field_variance(acceptance_log):
    report = _run({"scenario": "static_field", "rho": 1.0, "N": 100, "R": 10_000})
    row = report.row("var_Y0_H")
    assert row.target_value == pytest.approx(2 * math.sqrt(math.pi), rel=1e-9)
    ok, _ = _verdict(acceptance_log, 3, report, ["var_Y0_H"])
    assert ok


def test_criterion_04_field_time_covariance(acceptance_log):
    report = _run({"scenario": "field_covariance", "rho": 1.0, "N": 200, "s": 0.0, "t": 1.0, "R": 256})
    row = report.row("E[Y_t(H) Y_s(G)]")
    # 2 int H(u + 1/4) H(u) du for the unit bump
    assert row.target_value == pytest.approx(2 * math.sqrt(math.pi) * math.exp(-1 / 64), rel=1e-8)
    ok, _ = _verdict(acceptance_log, 4, report, ["E[Y_t(H) Y_s(G)]"])
    assert ok


def test_criterion_05_current_clt(acceptance_log):
    report = _run({"scenario": "current_clt", "rho": 1.0, "N": 500, "t": 1.0, "t_mid": 0.5, "R": 256})
    ok, _ = _verdict(acceptance_log, 5, report,
                     ["Var(Z_t)", "mean J/N", "gaussianity(Z_t)", "E[Z_s Z_t]"])
    assert ok


def test_criterion_06_current_versus_ramp_fields(acceptance_log):
    report = _run({"scenario": "current_vs_field", "rho": 1.0, "n_list": [2, 4, 8, 16]})
    ok, _ = _verdict(acceptance_log, 6, report, ["strictly decreasing in n", "final/initial"])
    assert ok


def test_criterion_07_martingale_isometry(acceptance_log):
    report = _run({"scenario": "martingale", "rho": 1.0, "N": 128, "t": 1.0})
    ok, _ = _verdict(acceptance_log, 7, report, ["E[M_t^2] - E[QV_t]", "E[QV_t]"])
    assert ok


def test_criterion_08_boltzmann_gibbs_exponent(acceptance_log):
    report = _run({"scenario": "bg_decay", "rho": 1.0, "N_list": [64, 128, 256, 512], "gamma": 0.25,
                   "frame": "moving"})
    ok, _ = _verdict(acceptance_log, 8, report, ["alpha", "alpha - alpha_linear_control"])
    assert ok


def test_criterion_09_characteristic_current(acceptance_log):
    report = _run({"scenario": "characteristic_current", "rho": 1.0, "N_list": [64, 128, 256, 512],
                   "gamma": 0.25})
    ok, _ = _verdict(acceptance_log, 9, report, ["characteristic: decreasing in N", "characteristic: final/initial",
                                                 "control: final/initial"])
    assert ok


def test_criterion_10_characteristic_frame_covariance(acceptance_log):
    report = _run({"scenario": "flu2_static", "rho": 1.0, "pairs": [[0, 1], [0.5, 1]]})
    ok, _ = _verdict(acceptance_log, 10, report,
                     ["C(0.0, 1.0) - C(0.5, 1.0)", "C(s=0,t=1)", "C(s=0.5,t=1)"])
    assert ok


def test_criterion_11_block_variance_bounds(acceptance_log):
    report = _run({"scenario": "block_variances", "rho": 1.0, "K_list": [8, 16, 32, 64, 128, 256, 512],
                   "L_list": [4, 8, 16, 32, 64]})
    ok, _ = _verdict(acceptance_log, 11, report, ["Var(V1)/K max/min", "Var(V2)/L max/min"])
    assert ok


def test_criterion_12_symmetric_exponent(acceptance_log):
    report = _run({"scenario": "symmetric_bg", "rho": 1.0, "N_list": [64, 128, 256, 512]})
    ok, _ = _verdict(acceptance_log, 12, report, ["alpha"])
    assert ok


def test_criterion_13_hydrodynamics(acceptance_log):
    report = _run({"scenario": "hydro", "rho_left": 1.0, "rho_right": 0.0, "N_list": [256, 512]})
    ok, _ = _verdict(acceptance_log, 13, report, ["L1(N=512) < L1(N=256)", "shock speed"])
    assert report.row("shock speed").target_value == 0.5
    assert ok


def test_criterion_14_kpz_probe_is_reported(acceptance_log):
    report = _run({"scenario": "characteristic_current", "rho": 1.0, "N_list": [16, 32, 64, 128], "R": 16,
                   "probe_kpz": True})
    row = report.row("theta (KPZ probe)")
    ok = row.verdict == "info" and row.estimate is not None and math.isfinite(row.estimate)
    acceptance_log(14, ok, f"informational: {_fmt(row)} (expected near 2/3)")
    assert ok


def test_criterion_15_determinism_across_parallelism(acceptance_log, tmp_path):
    configs = parse_config_text(json.dumps({"experiments": [
        {"scenario": "current_clt", "name": "clt", "N": 32, "R": 32},
        {"scenario": "bg_decay", "name": "bg", "N_list": [8, 16, 24, 32], "R": 16},
        {"scenario": "hydro", "name": "hydro", "N_list": [16, 32], "R": 16},
    ]}))
    a = run_suite(configs, tmp_path / "p1", ACCEPTANCE_SEED, 1)
    b = run_suite(configs, tmp_path / "p4", ACCEPTANCE_SEED, 4)
    same = all((tmp_path / "p1" / e[k]).read_bytes() == (tmp_path / "p4" / e[k]).read_bytes()
               for e in a.experiments.values() for k in ("report", "samples"))
    ok = same and a.config_digest == b.config_digest
    acceptance_log(15, ok, f"{len(a.experiments)} experiments, reports and samples byte-identical at 1 and 4 workers")
    assert ok
