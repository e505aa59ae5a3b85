"""
Event-driven continuous-time simulation of the zero-range process on a ring.

A particle leaves site ``x`` at rate ``g(eta(x))`` and lands on ``x + 1``
with probability ``p_right`` (on ``x - 1`` otherwise).  Waiting times are
exponential with the total rate, drawn by inverse CDF; the jumping site is
selected in proportion to its rate.  Time is microscopic; a macroscopic time
``t`` corresponds to ``t * N**a``.

Two paths run the same dynamics off the same random stream:

* :meth:`Simulation.step` applies one event and notifies Python observers
  (``hold`` for the holding interval, ``on_jump`` for the jump).  It is slow
  and exists for replay and cross-checking.
* :meth:`Simulation.evolve_until` hands the loop to a compiled kernel that
  updates bond counters and site functionals in place.

Given the same seed both produce the same event sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels as k
from .ensemble import TAZRP, RateFunction
from .lattice import Configuration
from .observables import SupportOverflowError

__all__ = [
    "Configuration",
    "DynamicsSpec",
    "RateIndex",
    "SimClock",
    "JumpRecord",
    "FrozenState",
    "EngineInvariantError",
    "Simulation",
    "total_rate",
    "next_event",
    "apply_jump",
    "EVENT_DTYPE",
    "write_event_log",
    "read_event_log",
]

AUDIT_EVERY = 1 << 20
AUDIT_TOLERANCE_FUNCTIONAL = 1e-8
AUDIT_TOLERANCE_RATE = 1e-9

# time f8, site u4, direction i1; little-endian, packed (13 bytes)
EVENT_DTYPE = np.dtype([("time", "<f8"), ("site", "<u4"), ("dir", "i1")])


class FrozenState(Exception):
    """No particle can move: the total rate is zero."""


class EngineInvariantError(RuntimeError):
    """A jump from an empty site or a failed audit; indicates an engine bug."""


@dataclass(frozen=True)
class DynamicsSpec:
    """Rate, asymmetry and time scale of a run.

    ``a = 1`` is the hyperbolic scale, ``1 + gamma`` the long scale and
    ``2`` the diffusive scale.  ``N`` is the number of sites per macroscopic
    unit.
    """

    rate: RateFunction = TAZRP
    p_right: float = 1.0
    a: float = 1.0
    N: int = 1

    def __post_init__(self):
        if not 0.5 <= self.p_right <= 1.0:
            raise ValueError("p_right must lie in [1/2, 1]")
        if not (self.a == 1.0 or 1.0 < self.a <= 2.0):
            raise ValueError("time-scale exponent must be 1 or in (1, 2]")
        if self.N < 1:
            raise ValueError("N must be at least 1")

    @property
    def p_left(self) -> float:
        return 1.0 - self.p_right

    def micro_time(self, t_macro: float) -> float:
        return t_macro * float(self.N) ** self.a

    def macro_time(self, s_micro: float) -> float:
        return s_micro / float(self.N) ** self.a

    def check_ring(self, L: int) -> None:
        if L % self.N:
            raise ValueError(f"ring size {L} is not a multiple of N={self.N}")


@dataclass
class SimClock:
    s: float = 0.0
    events: int = 0


class JumpRecord(NamedTuple):
    s: float
    x: int
    dir: int
    y: int


class RateIndex:
    """Complete binary tree of partial sums over the site rates."""

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        if (weights < 0).any():
            raise ValueError("leaf weights must be nonnegative")
        self.n = weights.size
        self.size = 1 << max(1, math.ceil(math.log2(max(self.n, 2))))
        self.tree = np.zeros(2 * self.size)
        k.tree_build(self.tree, self.size, weights)

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def update(self, i: int, w: float) -> None:
        k.tree_set(self.tree, self.size, i, w)

    def select(self, u: float) -> int:
        return int(k.tree_select(self.tree, self.size, u))

    def leaf(self, i: int) -> float:
        return float(self.tree[self.size + i])

    def rebuilt_total(self, weights: np.ndarray) -> float:
        fresh = np.zeros_like(self.tree)
        k.tree_build(fresh, self.size, np.asarray(weights, dtype=np.float64))
        return float(fresh[1])


def total_rate(config: Configuration, g: RateFunction = TAZRP) -> float:
    """``sum_x g(eta(x))``; the occupied-site count for the indicator rate."""
    if g.is_indicator:
        return float(config.occupied_count)
    return float(np.sum(g(config.occupancies)))


class Simulation:
    """Mutable state of one replica: configuration, rate index and clock.

    Parameters
    ----------
    config : Configuration
        Initial configuration; it is updated in place.
    dynamics : DynamicsSpec
    rng : numpy.random.Generator
        The only source of randomness for this replica.
    log_capacity : int
        Preallocated size of the optional binary event log.
    """

    def __init__(self, config: Configuration, dynamics: DynamicsSpec, rng: np.random.Generator,
                 log_capacity: int = 0):
        dynamics.check_ring(config.L)
        self.config = config
        self.dynamics = dynamics
        self.rng = rng
        self.indicator = bool(dynamics.rate.is_indicator)
        L = config.L
        kmax = max(config.total_particles, 1) + 1
        self.gtab = dynamics.rate.table(kmax)
        self.occ = np.zeros(L, dtype=np.int64)
        self.pos = np.full(L, -1, dtype=np.int64)
        # counts = [occupied sites, events, log entries, status]
        self.counts = np.zeros(4, dtype=np.int64)
        self.counts[0] = k.occ_build(config.occupancies, self.occ, self.pos)
        if self.indicator:
            self.index = None
            self.tree = np.zeros(2)
            self.tree_size = 1
        else:
            self.index = RateIndex(self.gtab[config.occupancies])
            self.tree = self.index.tree
            self.tree_size = self.index.size
        self.clock = np.array([0.0, np.nan])
        self.audit = np.zeros(2)
        self.log_t = np.zeros(log_capacity)
        self.log_x = np.zeros(log_capacity, dtype=np.int64)
        self.log_d = np.zeros(log_capacity, dtype=np.int64)

    # -- state ----------------------------------------------------------------

    @property
    def L(self) -> int:
        return self.config.L

    @property
    def s(self) -> float:
        return float(self.clock[0])

    @property
    def t(self) -> float:
        return self.dynamics.macro_time(self.s)

    @property
    def events(self) -> int:
        return int(self.counts[1])

    @property
    def total_rate(self) -> float:
        return float(k.total_rate(self.indicator, self.counts[0], self.tree))

    def _sync_config(self) -> None:
        self.config.occupied_count = int(self.counts[0]) if self.indicator else int(
            np.count_nonzero(self.config.occupancies))

    # -- single events (reference path) ---------------------------------------

    def _pending_wait(self) -> float:
        if np.isnan(self.clock[1]):
            self.clock[1] = self.clock[0] + k.draw_wait(self.rng, self.total_rate)
        return float(self.clock[1])

    def next_event(self) -> tuple[float, int, int]:
        """Draw ``(wait, site, direction)`` without applying it."""
        s_next = self._pending_wait()
        if math.isinf(s_next):
            raise FrozenState("total rate is zero")
        x = int(k.draw_site(self.rng, self.indicator, self.occ, self.counts[0], self.tree, self.tree_size))
        d = int(k.draw_direction(self.rng, self.dynamics.p_right))
        return s_next - self.clock[0], x, d

    def apply_jump(self, x: int, d: int) -> JumpRecord:
        y = int(k.apply_jump(self.config.occupancies, self.occ, self.pos, self.counts, self.tree,
                             self.tree_size, self.gtab, self.indicator, x, d))
        if y < 0:
            raise EngineInvariantError(f"jump from empty site {x}")
        self.counts[1] += 1
        self._sync_config()
        return JumpRecord(self.s, x, d, y)

    def step(self, observers: Sequence = ()) -> JumpRecord:
        """Apply one event; observers see ``hold`` then ``on_jump``."""
        wait, x, d = self.next_event()
        s0 = self.s
        s1 = s0 + wait
        for ob in observers:
            ob.hold(self.config, s0, s1)
        self.clock[0] = s1
        ex = int(self.config.occupancies[x])
        y = (x + d) % self.L
        ey = int(self.config.occupancies[y])
        rec = self.apply_jump(x, d)
        for ob in observers:
            ob.on_jump(self.config, rec, ex, ey)
        if self.log_t.size:
            n = int(self.counts[2])
            if n < self.log_t.size:
                self.log_t[n], self.log_x[n], self.log_d[n] = s1, x, d
                self.counts[2] = n + 1
        self.clock[1] = s1 + k.draw_wait(self.rng, self.total_rate)
        return rec

    def run_reference(self, s_target: float, observers: Sequence = ()) -> None:
        """Event-by-event evolution to microscopic time ``s_target`` in Python."""
        while True:
            s_next = self._pending_wait()
            if s_next > s_target:
                for ob in observers:
                    ob.hold(self.config, self.s, s_target)
                self.clock[0] = s_target
                return
            self.step(observers)

    # -- compiled path ---------------------------------------------------------

    def advance_micro(self, s_target: float, trackers: Sequence = (), functionals: Sequence = (),
                      audit_every: int = AUDIT_EVERY) -> None:
        """Evolve to microscopic time ``s_target`` in the compiled kernel.

        ``trackers`` are current trackers (fixed or moving bonds) and
        ``functionals`` are site functionals; both are read into arrays,
        updated by the kernel and written back.
        """
        if s_target < self.s:
            raise ValueError("cannot evolve backwards in time")
        L = self.L
        fixed = [tr for tr in trackers if tr.velocity == 0.0]
        moving = [tr for tr in trackers if tr.velocity != 0.0]
        bond_map = np.full(L, -1, dtype=np.int64)
        bond_J = np.zeros(len(fixed), dtype=np.int64)
        for i, tr in enumerate(fixed):
            b = tr.bond % L
            if bond_map[b] >= 0:
                raise ValueError(f"two fixed trackers share bond {b}")
            bond_map[b] = i
            bond_J[i] = tr.J
        cb_pos = np.array([tr.bond % L for tr in moving], dtype=np.int64)
        cb_v = np.array([tr.velocity for tr in moving], dtype=np.float64)
        cb_shift = np.array([tr.shift for tr in moving], dtype=np.int64)
        cb_J = np.array([tr.J for tr in moving], dtype=np.int64)

        F = len(functionals)
        width = max([fn.weights.size for fn in functionals], default=1)
        kmax = self.gtab.size - 1
        fw = np.zeros((F, width))
        ftab = np.zeros((F, kmax + 1))
        fstart = np.zeros(F, dtype=np.int64)
        flen = np.zeros(F, dtype=np.int64)
        fv = np.zeros(F)
        fshift = np.zeros(F, dtype=np.int64)
        fS = np.zeros(F)
        fA = np.zeros(F)
        for f, fn in enumerate(functionals):
            if fn.weights.size > L // 2:
                raise SupportOverflowError(f"window of {fn.weights.size} sites exceeds half of a ring of {L}")
            fw[f, : fn.weights.size] = fn.weights
            tab = fn.table_for(kmax)
            ftab[f] = tab
            fstart[f] = fn.start
            flen[f] = fn.weights.size
            fv[f] = fn.velocity
            fshift[f] = fn.shift
            fA[f] = fn.A
        for f, fn in enumerate(functionals):
            fS[f] = k.functional_full(self.config.occupancies, fw, fstart, flen, fshift, ftab, f)

        k.advance(
            self.config.occupancies, self.occ, self.pos, self.counts, self.tree, self.tree_size,
            self.gtab, self.indicator, float(self.dynamics.p_right),
            self.clock, self.rng, float(s_target),
            bond_map, bond_J,
            cb_pos, cb_v, cb_shift, cb_J,
            fw, fstart, flen, fv, fshift, ftab, fS, fA,
            self.log_t, self.log_x, self.log_d,
            int(audit_every), self.audit,
        )
        self._sync_config()
        if self.counts[3] == k.STATUS_EMPTY_SITE:
            raise EngineInvariantError("jump from an empty site")
        if self.audit[0] > AUDIT_TOLERANCE_FUNCTIONAL or self.audit[1] > AUDIT_TOLERANCE_RATE:
            raise EngineInvariantError(f"incremental sums drifted: {self.audit.tolist()}")
        for i, tr in enumerate(fixed):
            tr.J = int(bond_J[i])
        for i, tr in enumerate(moving):
            if cb_shift[i] > L // 2:
                raise SupportOverflowError("characteristic bond travelled more than half the ring")
            tr.bond = int(cb_pos[i])
            tr.shift = int(cb_shift[i])
            tr.J = int(cb_J[i])
        for f, fn in enumerate(functionals):
            fn.shift = int(fshift[f])
            fn.S = float(fS[f])
            fn.A = float(fA[f])

    def evolve_until(self, t_macro: float, trackers: Sequence = (), functionals: Sequence = (),
                     schedule: Iterable[tuple[float, Callable[["Simulation"], None]]] = ()) -> "Simulation":
        """Evolve to macroscopic time ``t_macro``.

        ``schedule`` holds ``(t, callback)`` pairs; each callback runs with
        the state exactly at macroscopic time ``t``.
        """
        if t_macro < 0:
            raise ValueError("t_macro must be nonnegative")
        for t_snap, callback in sorted(schedule, key=lambda item: item[0]):
            if t_snap > t_macro:
                raise ValueError("snapshot scheduled past the horizon")
            self.advance_micro(self.dynamics.micro_time(t_snap), trackers, functionals)
            callback(self)
        self.advance_micro(self.dynamics.micro_time(t_macro), trackers, functionals)
        return self

    # -- event log -------------------------------------------------------------

    def event_log(self) -> np.ndarray:
        n = int(self.counts[2])
        out = np.zeros(n, dtype=EVENT_DTYPE)
        out["time"] = self.log_t[:n]
        out["site"] = self.log_x[:n]
        out["dir"] = self.log_d[:n]
        return out

    @property
    def log_overflowed(self) -> bool:
        return self.counts[3] == k.STATUS_LOG_FULL


def next_event(sim: Simulation, rng: np.random.Generator | None = None) -> tuple[float, int, int]:
    """``(wait, site, direction)`` of the next event of ``sim``."""
    if rng is not None and rng is not sim.rng:
        raise ValueError("a simulation owns its generator")
    return sim.next_event()


def apply_jump(sim: Simulation, x: int, d: int) -> JumpRecord:
    return sim.apply_jump(x, d)


def write_event_log(path, log: np.ndarray) -> None:
    np.asarray(log, dtype=EVENT_DTYPE).tofile(path)


def read_event_log(path) -> np.ndarray:
    return np.fromfile(path, dtype=EVENT_DTYPE)
