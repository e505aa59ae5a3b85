"""Compiled kernel against the event-by-event path and against replays of its own log."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zrplab.engine import (
    EVENT_DTYPE,
    DynamicsSpec,
    FrozenState,
    Simulation,
    read_event_log,
    total_rate,
    write_event_log,
)
from zrplab.ensemble import TAZRP, RateFunction, sample_configuration
from zrplab.lattice import Configuration
from zrplab.observables import BGAccumulator, CurrentTracker, SupportOverflowError, TestFunction

INDEPENDENT = RateFunction.independent()


def _pair(g, p, L=64, N=8, seed=9, log=20_000):
    c = sample_configuration(1.0, L, np.random.default_rng(5), g)
    dyn = DynamicsSpec(g, p, 1.0, N)
    a = Simulation(c.copy(), dyn, np.random.default_rng(seed), log_capacity=log)
    b = Simulation(c.copy(), dyn, np.random.default_rng(seed), log_capacity=log)
    return c, a, b


def replay(initial: Configuration, log: np.ndarray) -> np.ndarray:
    eta = initial.occupancies.copy()
    L = eta.size
    for x, d in zip(log["site"], log["dir"]):
        assert eta[x] > 0
        eta[x] -= 1
        eta[(int(x) + int(d)) % L] += 1
    return eta


@pytest.mark.parametrize("g, p", [(TAZRP, 1.0), (TAZRP, 0.6), (INDEPENDENT, 0.7), (INDEPENDENT, 1.0)])
def test_kernel_and_reference_paths_agree(g, p):
    _, a, b = _pair(g, p)
    H = TestFunction.gaussian_bump(0, 0.25)
    ta = [CurrentTracker.fixed(3), CurrentTracker(10, 0.25)]
    tb = [CurrentTracker.fixed(3), CurrentTracker(10, 0.25)]
    fa = [BGAccumulator(H, 1.0, 8, g=g, moving=True), BGAccumulator(H, 1.0, 8, g=g, centered=False)]
    fb = [BGAccumulator(H, 1.0, 8, g=g, moving=True), BGAccumulator(H, 1.0, 8, g=g, centered=False)]
    a.advance_micro(30.0, ta, fa)
    b.run_reference(30.0, tb + fb)
    assert a.events == b.events > 0
    assert np.array_equal(a.config.occupancies, b.config.occupancies)
    assert [t.J for t in ta] == [t.J for t in tb]
    assert [t.bond for t in ta] == [t.bond for t in tb]
    for x, y in zip(fa, fb):
        assert x.A == pytest.approx(y.A, rel=1e-9, abs=1e-9)
    assert np.array_equal(a.event_log(), b.event_log())


def test_split_advance_equals_single_advance():
    _, a, b = _pair(TAZRP, 1.0)
    tr_a, tr_b = [CurrentTracker.fixed(0)], [CurrentTracker.fixed(0)]
    for s in (3.0, 7.5, 12.0, 30.0):
        a.advance_micro(s, tr_a)
    b.advance_micro(30.0, tr_b)
    assert np.array_equal(a.event_log(), b.event_log())
    assert tr_a[0].J == tr_b[0].J


def test_event_log_replay_reproduces_final_state(tmp_path):
    c, a, _ = _pair(INDEPENDENT, 0.7)
    a.advance_micro(40.0)
    log = a.event_log()
    assert not a.log_overflowed and log.size == a.events
    path = tmp_path / "events.bin"
    write_event_log(path, log)
    assert path.stat().st_size == log.size * EVENT_DTYPE.itemsize == log.size * 13
    back = read_event_log(path)
    assert np.array_equal(back, log)
    assert np.array_equal(replay(c, back), a.config.occupancies)
    assert np.all(np.diff(back["time"]) > 0)


def test_fixed_bond_current_matches_log():
    c, a, _ = _pair(TAZRP, 0.6)
    trackers = [CurrentTracker.fixed(b) for b in (0, 17, 63)]
    a.advance_micro(50.0, trackers)
    log = a.event_log()
    for tr in trackers:
        right = np.sum((log["site"] == tr.bond) & (log["dir"] == 1))
        left = np.sum((log["site"] == (tr.bond + 1) % a.L) & (log["dir"] == -1))
        assert tr.J == right - left


def test_characteristic_current_brute_force_oracle():
    """The moving-bond current equals the change of mass between the moving bond and a far fixed bond
    plus the flux across that fixed bond, both read off configurations and the event log."""
    L, v = 48, 0.25
    c, a, _ = _pair(TAZRP, 1.0, L=L, N=4)
    tracker = CurrentTracker(5, v)
    far = 5 + L // 2 + 10
    a.advance_micro(40.0, [tracker])
    log = a.event_log()
    J_far = int(np.sum((log["site"] == far % L) & (log["dir"] == 1)))
    b0, b1 = 5, tracker.bond

    def mass(eta, b):
        return int(sum(eta[x % L] for x in range(b + 1, far + 1)))

    expected = mass(a.config.occupancies, b1) - mass(c.occupancies, b0) + J_far
    assert tracker.shift == math.floor(v * 40.0)
    assert tracker.J == expected


def test_bg_integral_matches_replay_integration():
    c, a, _ = _pair(TAZRP, 1.0, L=64, N=8)
    H = TestFunction.gaussian_bump(0, 0.25)
    acc = BGAccumulator(H, 1.0, 8)
    s_end = 25.0
    a.advance_micro(s_end, functionals=[acc])
    log = a.event_log()
    table = acc.table_for(64)
    x0, w = H.site_window(8)
    idx = (x0 + np.arange(w.size)) % 64
    eta = c.occupancies.copy()
    s = 0.0
    A = 0.0
    for t, x, d in zip(log["time"], log["site"], log["dir"]):
        A += (t - s) * float(np.dot(w, table[eta[idx]]))
        s = t
        eta[x] -= 1
        eta[(int(x) + int(d)) % 64] += 1
    A += (s_end - s) * float(np.dot(w, table[eta[idx]]))
    assert acc.A == pytest.approx(A, rel=1e-10, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(occ=st.lists(st.integers(0, 4), min_size=4, max_size=24), seed=st.integers(0, 2**32),
       p=st.sampled_from([0.5, 0.8, 1.0]), independent=st.booleans())
def test_conservation_and_rate_index(occ, seed, p, independent):
    L = len(occ)
    g = INDEPENDENT if independent else TAZRP
    config = Configuration(occ)
    sim = Simulation(config, DynamicsSpec(g, p, 1.0, 1), np.random.default_rng(seed))
    if sum(occ) == 0:
        with pytest.raises(FrozenState):
            sim.next_event()
        return
    sim.advance_micro(5.0)
    sim.config.validate()
    assert sim.config.total_particles == sum(occ)
    assert (sim.config.occupancies >= 0).all()
    assert sim.total_rate == pytest.approx(total_rate(sim.config, g), rel=1e-12)
    assert sim.L == L


def test_mean_waiting_time_is_inverse_total_rate():
    rng = np.random.default_rng(3)
    eta = Configuration([1, 0, 2, 0, 0, 1])  # total rate 3 for the indicator
    waits = []
    for _ in range(4000):
        sim = Simulation(eta.copy(), DynamicsSpec(), rng)
        w, x, d = sim.next_event()
        assert eta[x] > 0 and d == 1
        waits.append(w)
    assert np.mean(waits) == pytest.approx(1 / 3, abs=4 * (1 / 3) / math.sqrt(4000))


def test_site_selection_is_uniform_over_occupied_sites_for_indicator():
    rng = np.random.default_rng(11)
    eta = Configuration([3, 0, 1, 0, 5])
    counts = {0: 0, 2: 0, 4: 0}
    for _ in range(6000):
        _, x, _ = Simulation(eta.copy(), DynamicsSpec(), rng).next_event()
        counts[x] += 1
    for v in counts.values():
        assert v == pytest.approx(2000, abs=4 * math.sqrt(6000 * (1 / 3) * (2 / 3)))


def test_dynamics_validation():
    with pytest.raises(ValueError):
        DynamicsSpec(p_right=0.3)
    with pytest.raises(ValueError):
        DynamicsSpec(a=0.5)
    with pytest.raises(ValueError):
        DynamicsSpec(a=2.5)
    with pytest.raises(ValueError):
        Simulation(Configuration([1] * 10), DynamicsSpec(N=4), np.random.default_rng(0))
    assert DynamicsSpec(a=1.25, N=16).micro_time(1.0) == pytest.approx(32.0)


def test_time_cannot_run_backwards():
    _, a, _ = _pair(TAZRP, 1.0)
    a.advance_micro(5.0)
    with pytest.raises(ValueError):
        a.advance_micro(4.0)


def test_oversized_window_is_rejected():
    c, a, _ = _pair(TAZRP, 1.0, L=16, N=8)
    with pytest.raises(SupportOverflowError):
        a.advance_micro(1.0, functionals=[BGAccumulator(TestFunction.gaussian_bump(), 1.0, 8)])


def test_evolve_until_runs_callbacks_at_their_times():
    _, a, _ = _pair(TAZRP, 1.0, N=8)
    seen = []
    a.evolve_until(2.0, schedule=[(1.5, lambda s: seen.append(s.t)), (0.5, lambda s: seen.append(s.t))])
    assert seen == [0.5, 1.5]
    assert a.t == pytest.approx(2.0)
    with pytest.raises(ValueError):
        a.evolve_until(3.0, schedule=[(4.0, lambda s: None)])
