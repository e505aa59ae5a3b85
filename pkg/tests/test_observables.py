"""Test functions, fields, trackers and the martingale decomposition."""

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from zrplab.engine import DynamicsSpec, Simulation
from zrplab.ensemble import TAZRP, GrandCanonicalEnsemble, sample_configuration
from zrplab.lattice import Configuration
from zrplab.observables import (
    MartingaleAccumulator,
    SupportOverflowError,
    TestFunction,
    compensator_value,
    field_value,
    martingale_pair,
    write_samples_csv,
)
from zrplab.stats import mean_var


@pytest.mark.parametrize("w", [0.25, 0.5, 1.0, 2.0])
def test_gaussian_bump_norms(w):
    H = TestFunction.gaussian_bump(0.3, w)
    assert H.norm_sq() == pytest.approx(math.sqrt(math.pi) * w, rel=1e-9)
    numeric, _ = integrate.quad(lambda u: ((u - 0.3) / w**2 * math.exp(-0.5 * ((u - 0.3) / w) ** 2)) ** 2,
                                -np.inf, np.inf)
    assert H.derivative_norm_sq() == pytest.approx(numeric, rel=1e-9)


def test_unit_bump_variance_target():
    assert 2.0 * TestFunction.gaussian_bump().norm_sq() == pytest.approx(2 * math.sqrt(math.pi), rel=1e-10)


def test_cutoff_makes_truncation_negligible():
    H = TestFunction.gaussian_bump(0, 1)
    lo, hi = H.support
    assert H(hi) < 1e-8 and H(lo) < 1e-8


def test_ramp_and_tabulated():
    R = TestFunction.ramp(4)
    assert R(0.0) == 1.0 and R(4.0) == 0.0 and R(-0.1) == 0.0 and R(2.0) == 0.5
    assert R.norm_sq() == pytest.approx(4 / 3, rel=1e-10)
    assert R.derivative_norm_sq() == pytest.approx(1 / 4, rel=1e-4)
    T = TestFunction.tabulated([-1, 0, 1], [0, 1, 0])
    assert T.norm_sq() == pytest.approx(2 / 3, rel=1e-10)
    assert TestFunction.from_dict(T.to_dict()) == T


@settings(max_examples=30)
@given(shift=st.floats(-1.0, 1.0))
def test_inner_with_translation(shift):
    H = TestFunction.gaussian_bump(0, 1)
    # int exp(-(u+s)^2/2) exp(-u^2/2) du = sqrt(pi) exp(-s^2/4)
    assert H.inner(H, shift) == pytest.approx(math.sqrt(math.pi) * math.exp(-shift**2 / 4), rel=1e-8)


def test_field_value_matches_direct_sum():
    rng = np.random.default_rng(2)
    N, L = 10, 400
    c = sample_configuration(1.0, L, rng)
    H = TestFunction.gaussian_bump(0.5, 1.0)
    for shift in (0.0, 3.0, 17.5, -4.0):
        direct = 0.0
        for x in range(-L // 2, L // 2):
            direct += float(H((x - shift) / N)) * (c.occupancies[x % L] - 1.0)
        # the window drops sites where H < 1e-8, a few of which sit in the direct sum
        assert field_value(c, H, 1.0, N, shift) == pytest.approx(direct / math.sqrt(N), abs=1e-7)


def test_window_larger_than_half_ring_is_rejected():
    with pytest.raises(SupportOverflowError):
        field_value(Configuration([1] * 40), TestFunction.gaussian_bump(), 1.0, 10)
    with pytest.raises(SupportOverflowError):
        TestFunction.heaviside().site_window(4)


def _martingale_samples(N, R, seed=0, t=1.0):
    H = TestFunction.gaussian_bump(0, 1.0)
    out = []
    for r in range(R):
        rng = np.random.default_rng([seed, r])
        sim = Simulation(sample_configuration(1.0, 32 * N, rng), DynamicsSpec(TAZRP, 1.0, 1.0, N), rng)
        acc = MartingaleAccumulator(H, 1.0, N)
        acc.snapshot_start(sim.config)
        sim.evolve_until(t, functionals=acc.functionals)
        acc.snapshot_end(sim.config)
        M, QV = martingale_pair(acc)
        out.append((M, QV, compensator_value(acc)))
    return np.array(out), H


def test_compensator_isometry_holds():
    """E[M^2] equals the expected predictable quadratic variation of the jump dynamics."""
    data, H = _martingale_samples(16, 600)
    M, QV, comp = data.T
    d = mean_var(M**2 - comp)
    assert abs(d.mean) <= 4 * d.se_mean
    assert abs(M.mean()) <= 4 * M.std(ddof=1) / math.sqrt(M.size)


def test_stated_quadratic_variation_is_twice_the_compensator_under_total_asymmetry():
    """Summing g(eta(x)) + g(eta(x+1)) counts every rightward jump rate twice in expectation."""
    data, H = _martingale_samples(16, 200, seed=1)
    _, QV, comp = data.T
    assert QV.mean() / comp.mean() == pytest.approx(2.0, rel=0.02)
    phi = GrandCanonicalEnsemble(1.0).phi
    c = mean_var(comp)
    # the grid sum converges to phi * ||H'||^2 / N per unit macroscopic time
    assert c.mean == pytest.approx(phi * H.derivative_norm_sq() / 16, rel=0.05)


def test_martingale_pair_requires_snapshots():
    acc = MartingaleAccumulator(TestFunction.gaussian_bump(), 1.0, 8)
    with pytest.raises(ValueError):
        martingale_pair(acc)


def test_samples_csv_is_sorted_with_lf_endings(tmp_path):
    path = tmp_path / "s.csv"
    write_samples_csv(path, [(2, 1.0, "J", "b", 3), (0, 1.0, "J", "b", 1.5), (0, 0.5, "Y", "H", -2)])
    raw = path.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(raw.decode("utf-8").splitlines()))
    assert rows[0] == ["replica", "t", "observable", "label", "value"]
    assert [r[0] for r in rows[1:]] == ["0", "0", "2"]
    assert rows[1][1] == "0.5"
