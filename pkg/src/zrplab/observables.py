"""
Functionals of the configuration that the limit theorems are about.

Macroscopic test functions ``H`` are evaluated at ``x / N``.  Fields use the
exact real frame shift ``phi'(rho) * s`` (``s`` microscopic time) while
characteristic bonds move by its integer part.  Time integrals are collected
in microscopic time and converted once, when read, with the ``N**-a``
Jacobian of the time scale.

Every accumulator works in two modes: the compiled engine reads its arrays
(``weights``, ``start``, ``velocity``, ``shift``, ``table_for``) and writes
back ``S``/``A``/``J``; or the Python reference path calls ``hold`` and
``on_jump`` once per event.  Tests replay event logs through the latter.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .ensemble import TAZRP, GrandCanonicalEnsemble, RateFunction
from .lattice import Configuration

__all__ = [
    "SupportOverflowError",
    "TestFunction",
    "field_value",
    "v_g",
    "CurrentTracker",
    "SiteFunctional",
    "BGAccumulator",
    "MartingaleAccumulator",
    "FieldSample",
    "record_jump",
    "advance_characteristic",
    "bg_accumulate",
    "martingale_pair",
    "compensator_value",
    "SAMPLE_HEADER",
    "write_samples_csv",
]

# a Gaussian bump is below 1e-8 beyond GAUSS_CUTOFF widths; its squared tail mass is ~1e-17
GAUSS_CUTOFF = 6.07


class SupportOverflowError(ValueError):
    """A test function (plus drift) does not fit in half the ring."""


@dataclass(frozen=True)
class TestFunction:
    """Macroscopic profile ``u -> H(u)`` with bounded effective support.

    Use the constructors :meth:`gaussian_bump`, :meth:`ramp`,
    :meth:`heaviside` and :meth:`tabulated`.
    """

    __test__ = False  # not a pytest class

    kind: str
    params: tuple = ()
    grid: tuple = ()
    values: tuple = ()

    @classmethod
    def gaussian_bump(cls, center: float = 0.0, width: float = 1.0) -> "TestFunction":
        """``exp(-(u - center)^2 / (2 width^2))``, so ``int H^2 = sqrt(pi) * width``."""
        if width <= 0:
            raise ValueError("width must be positive")
        return cls("gaussian_bump", (float(center), float(width)))

    @classmethod
    def ramp(cls, n: float) -> "TestFunction":
        """``G_n(u) = (1 - u/n)^+ 1{u >= 0}``."""
        if n <= 0:
            raise ValueError("ramp length must be positive")
        return cls("ramp_n", (float(n),))

    @classmethod
    def heaviside(cls) -> "TestFunction":
        return cls("heaviside")

    @classmethod
    def tabulated(cls, grid, values) -> "TestFunction":
        grid = tuple(float(u) for u in grid)
        values = tuple(float(v) for v in values)
        if len(grid) != len(values) or len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("tabulated test function needs an increasing grid matching its values")
        return cls("tabulated", (), grid, values)

    @classmethod
    def from_dict(cls, d: dict) -> "TestFunction":
        kind = d["kind"]
        if kind == "gaussian_bump":
            return cls.gaussian_bump(d.get("center", 0.0), d.get("width", 1.0))
        if kind == "ramp_n":
            return cls.ramp(d["n"])
        if kind == "heaviside":
            return cls.heaviside()
        if kind == "tabulated":
            return cls.tabulated(d["grid"], d["values"])
        raise ValueError(f"unknown test function kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "gaussian_bump":
            return {"kind": self.kind, "center": self.params[0], "width": self.params[1]}
        if self.kind == "ramp_n":
            return {"kind": self.kind, "n": self.params[0]}
        if self.kind == "tabulated":
            return {"kind": self.kind, "grid": list(self.grid), "values": list(self.values)}
        return {"kind": self.kind}

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "gaussian_bump":
            c, w = self.params
            out = np.exp(-0.5 * ((u - c) / w) ** 2)
        elif self.kind == "ramp_n":
            (n,) = self.params
            out = np.where(u >= 0, np.clip(1.0 - u / n, 0.0, None), 0.0)
        elif self.kind == "heaviside":
            out = (u >= 0).astype(np.float64)
        elif self.kind == "tabulated":
            out = np.interp(u, self.grid, self.values, left=0.0, right=0.0)
        else:
            raise ValueError(self.kind)
        return out if out.ndim else float(out)

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "gaussian_bump":
            c, w = self.params
            return c - GAUSS_CUTOFF * w, c + GAUSS_CUTOFF * w
        if self.kind == "ramp_n":
            return 0.0, self.params[0]
        if self.kind == "heaviside":
            return 0.0, math.inf
        return self.grid[0], self.grid[-1]

    @property
    def width(self) -> float:
        lo, hi = self.support
        return hi - lo

    def breakpoints(self) -> list[float]:
        if self.kind == "ramp_n":
            return [0.0, self.params[0]]
        if self.kind == "tabulated":
            return list(self.grid)
        if self.kind == "gaussian_bump":
            return [self.params[0]]
        return [0.0]

    def site_window(self, N: int, shift: float = 0.0) -> tuple[int, np.ndarray]:
        """First site ``x0`` and ``H((x - shift)/N)`` for the sites of the support."""
        lo, hi = self.support
        if not math.isfinite(hi) or not math.isfinite(lo):
            raise SupportOverflowError(f"{self.kind} has unbounded support; use a ramp instead")
        x0 = math.ceil(lo * N + shift)
        x1 = math.floor(hi * N + shift)
        xs = np.arange(x0, x1 + 1)
        return x0, self((xs - shift) / N)

    def gradient_window(self, N: int) -> tuple[int, np.ndarray]:
        """``grad^N H(x/N) = N [H((x+1)/N) - H(x/N)]`` on every site where it can be nonzero."""
        lo, hi = self.support
        x0 = math.ceil(lo * N) - 1
        x1 = math.floor(hi * N)
        xs = np.arange(x0, x1 + 1)
        return x0, N * (self((xs + 1) / N) - self(xs / N))

    def inner(self, other: "TestFunction", translate: float = 0.0) -> float:
        """``int H(u + translate) G(u) du`` by adaptive quadrature."""
        lo = max(self.support[0] - translate, other.support[0])
        hi = min(self.support[1] - translate, other.support[1])
        if hi <= lo:
            return 0.0
        points = sorted({p for p in [b - translate for b in self.breakpoints()] + other.breakpoints()
                         if lo < p < hi})
        val, _ = integrate.quad(lambda u: self(u + translate) * other(u), lo, hi,
                                points=points or None, epsabs=1e-12, epsrel=1e-11, limit=200)
        return float(val)

    def norm_sq(self) -> float:
        return self.inner(self)

    def derivative_norm_sq(self, h: float = 1e-5) -> float:
        """``int H'(u)^2 du`` with a central-difference derivative."""
        lo, hi = self.support
        if self.kind == "gaussian_bump":
            c, w = self.params
            # closed form: int ((u-c)/w^2)^2 exp(-((u-c)/w)^2) du
            return math.sqrt(math.pi) / (2 * w)
        val, _ = integrate.quad(lambda u: ((self(u + h) - self(u - h)) / (2 * h)) ** 2, lo, hi,
                                points=self.breakpoints() or None, limit=200)
        return float(val)


def _check_window(width: int, L: int) -> None:
    if width > L // 2:
        raise SupportOverflowError(f"window of {width} sites does not fit in half of a ring of {L}")


def field_value(config: Configuration | np.ndarray, H: TestFunction, rho: float, N: int,
                shift: float = 0.0) -> float:
    """``N**-1/2 * sum_x H((x - shift)/N) (eta(x) - rho)`` over the support window."""
    eta = config.occupancies if isinstance(config, Configuration) else np.asarray(config)
    L = eta.size
    x0, w = H.site_window(N, shift)
    _check_window(w.size, L)
    idx = (x0 + np.arange(w.size)) % L
    return float(np.dot(w, eta[idx] - rho)) / math.sqrt(N)


def v_g(k, rho: float, g: RateFunction = TAZRP):
    """``g(k) - phi(rho) - phi'(rho) (k - rho)``."""
    ens = GrandCanonicalEnsemble(rho, g)
    k = np.asarray(k)
    out = g(k) - ens.phi - ens.dphi * (k - rho)
    return out if np.ndim(out) else float(out)


@dataclass
class FieldSample:
    t: float
    label: str
    value: float


# ---------------------------------------------------------------- currents


@dataclass
class CurrentTracker:
    """Signed particle flow across the bond ``(bond, bond + 1)``.

    A fixed tracker has ``velocity == 0``.  A characteristic tracker moves
    its bond one site right each time ``floor(velocity * s)`` increases
    (``s`` microscopic time) and subtracts the occupancy of the site it
    leaves behind, so that ``J`` counts the change of the particle number to
    the right of the moving bond.
    """

    bond: int
    velocity: float = 0.0
    J: int = 0
    shift: int = 0
    origin: int = field(default=None)
    label: str = ""

    def __post_init__(self):
        if self.origin is None:
            self.origin = self.bond
        if self.velocity < 0:
            raise ValueError("frames move right only")

    @classmethod
    def fixed(cls, bond: int, label: str = "") -> "CurrentTracker":
        return cls(bond, 0.0, label=label)

    @classmethod
    def characteristic(cls, x: int, rho: float, g: RateFunction = TAZRP, label: str = "") -> "CurrentTracker":
        return cls(x, GrandCanonicalEnsemble(rho, g).dphi, label=label)

    @property
    def mode(self) -> str:
        return "fixed_bond" if self.velocity == 0.0 else "characteristic"

    def hold(self, config: Configuration, s0: float, s1: float) -> None:
        advance_characteristic(self, config, s1)

    def on_jump(self, config: Configuration, rec, ex: int, ey: int) -> None:
        L = config.L
        b = self.bond % L
        if rec.dir == 1 and rec.x == b:
            self.J += 1
        elif rec.dir == -1 and rec.y == b:
            self.J -= 1


def advance_characteristic(tracker: CurrentTracker, config: Configuration, s_new: float) -> CurrentTracker:
    """Move a characteristic bond up to microscopic time ``s_new``."""
    if tracker.velocity <= 0:
        return tracker
    L = config.L
    while (tracker.shift + 1) / tracker.velocity <= s_new:
        nb = (tracker.bond + 1) % L
        tracker.J -= int(config.occupancies[nb])
        tracker.bond = nb
        tracker.shift += 1
        if tracker.shift > L // 2:
            raise SupportOverflowError("characteristic bond travelled more than half the ring")
    return tracker


# ------------------------------------------------------------ site integrals


class SiteFunctional:
    """``S = sum_x w(x - shift) * f(eta(x))`` and its time integral ``A``.

    ``weights[i]`` is the weight of site ``start + shift + i`` (mod ``L``).
    With ``velocity > 0`` the window moves one site right whenever
    ``floor(velocity * s)`` increases.
    """

    def __init__(self, weights: np.ndarray, start: int, table: Callable[[np.ndarray], np.ndarray],
                 velocity: float = 0.0, label: str = ""):
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.start = int(start)
        self.table = table
        self.velocity = float(velocity)
        self.shift = 0
        self.S = 0.0
        self.A = 0.0
        self.label = label
        self._primed = False

    def table_for(self, kmax: int) -> np.ndarray:
        return np.asarray(self.table(np.arange(kmax + 1)), dtype=np.float64)

    def full_sum(self, config: Configuration) -> float:
        L = config.L
        idx = (self.start + self.shift + np.arange(self.weights.size)) % L
        return float(np.dot(self.weights, self.table(config.occupancies[idx])))

    def _offset(self, x: int, L: int) -> int:
        return (x - self.start - self.shift) % L

    def hold(self, config: Configuration, s0: float, s1: float) -> None:
        if not self._primed:
            _check_window(self.weights.size, config.L)
            self.S = self.full_sum(config)
            self._primed = True
        s = s0
        while self.velocity > 0 and (self.shift + 1) / self.velocity <= s1:
            t_move = (self.shift + 1) / self.velocity
            self.A += self.S * (t_move - s)
            s = t_move
            self.shift += 1
            self.S = self.full_sum(config)
        self.A += self.S * (s1 - s)

    def on_jump(self, config: Configuration, rec, ex: int, ey: int) -> None:
        L = config.L
        for site, old, new in ((rec.x, ex, ex - 1), (rec.y, ey, ey + 1)):
            i = self._offset(site, L)
            if i < self.weights.size:
                self.S += self.weights[i] * float(self.table(np.array(new)) - self.table(np.array(old)))

    def audit(self, config: Configuration) -> float:
        """Relative difference between the incremental and recomputed sums."""
        full = self.full_sum(config)
        L = config.L
        idx = (self.start + self.shift + np.arange(self.weights.size)) % L
        scale = float(np.sum(np.abs(self.weights * self.table(config.occupancies[idx]))))
        return abs(self.S - full) / scale if scale > 0 else abs(self.S - full)


class BGAccumulator(SiteFunctional):
    """Time integral of ``sum_x H(x/N) V_g(eta(x))``.

    ``value`` is ``(N**gamma / sqrt(N)) * int_0^t (...) ds`` in macroscopic
    time, i.e. ``N**(gamma - 1/2 - a) * A`` with ``A`` the microscopic-time
    integral.  ``centered=False`` replaces ``V_g`` by ``eta - rho``.
    With ``moving=True`` the test function rides along the characteristic.
    """

    def __init__(self, H: TestFunction, rho: float, N: int, a: float = 1.0, gamma: float = 0.0,
                 g: RateFunction = TAZRP, centered: bool = True, moving: bool = False, label: str = ""):
        ens = GrandCanonicalEnsemble(rho, g)
        if centered:
            phi, dphi = ens.phi, ens.dphi

            def table(k):
                k = np.asarray(k)
                return g(k) - phi - dphi * (k - rho)
        else:
            def table(k):
                return np.asarray(k, dtype=np.float64) - rho
        x0, w = H.site_window(N)
        super().__init__(w, x0, table, ens.dphi if moving else 0.0, label or ("bg" if centered else "linear"))
        self.H = H
        self.rho = rho
        self.N = N
        self.a = a
        self.gamma = gamma
        self.prefactor = float(N) ** (gamma - 0.5 - a)

    @property
    def value(self) -> float:
        return self.prefactor * self.A

    @property
    def integral(self) -> float:
        """``int_0^t N**-1/2 sum_x H V_g ds`` without the ``N**gamma`` factor."""
        return float(self.N) ** (-0.5 - self.a) * self.A


class MartingaleAccumulator:
    """Field increment, drift integral and quadratic variations of ``Y(H)``.

    Three site integrals run alongside the dynamics:

    * ``drift``: ``sum_x grad^N H(x/N) * g(eta(x))`` (rightward jumps) minus
      its leftward counterpart when ``p_right < 1``;
    * ``qv``: ``sum_x (grad^N H(x/N))^2 [g(eta(x)) + g(eta(x+1))]``, the
      stated quadratic variation;
    * ``compensator``: ``sum_x (grad^N H(x/N))^2 [p g(eta(x)) + q g(eta(x+1))]``,
      the predictable quadratic variation of the jump dynamics.
    """

    def __init__(self, H: TestFunction, rho: float, N: int, g: RateFunction = TAZRP,
                 p_right: float = 1.0, a: float = 1.0):
        self.H, self.rho, self.N, self.g, self.a = H, rho, N, g, a
        x0, grad = H.gradient_window(N)
        p, q = p_right, 1.0 - p_right
        # site x carries grad(x) (jump x -> x+1) and grad(x-1) (jump x -> x-1)
        gx = np.concatenate([grad, [0.0]])
        gxm1 = np.concatenate([[0.0], grad])

        def gtable(k):
            return g(np.asarray(k))

        self.drift = SiteFunctional(p * gx - q * gxm1, x0, gtable, label="drift")
        self.qv = SiteFunctional(gx**2 + gxm1**2, x0, gtable, label="qv")
        self.compensator = SiteFunctional(p * gx**2 + q * gxm1**2, x0, gtable, label="compensator")
        self.Y0: float | None = None
        self.Yt: float | None = None

    @property
    def functionals(self) -> list[SiteFunctional]:
        return [self.drift, self.qv, self.compensator]

    def snapshot_start(self, config: Configuration) -> None:
        self.Y0 = field_value(config, self.H, self.rho, self.N)

    def snapshot_end(self, config: Configuration) -> None:
        self.Yt = field_value(config, self.H, self.rho, self.N)

    def hold(self, config, s0, s1):
        if self.Y0 is None:
            self.snapshot_start(config)
        for fn in self.functionals:
            fn.hold(config, s0, s1)

    def on_jump(self, config, rec, ex, ey):
        for fn in self.functionals:
            fn.on_jump(config, rec, ex, ey)


def record_jump(observers: Iterable, config: Configuration, rec, ex: int, ey: int) -> None:
    """Deliver one jump (with the pre-jump occupancies of both sites) to every observer."""
    for ob in observers:
        ob.on_jump(config, rec, ex, ey)


def bg_accumulate(acc: SiteFunctional, config: Configuration, s0: float, ds: float) -> SiteFunctional:
    """Integrate ``acc`` over a holding interval ``[s0, s0 + ds)`` of a frozen configuration."""
    acc.hold(config, s0, s0 + ds)
    return acc


def martingale_pair(acc: MartingaleAccumulator) -> tuple[float, float]:
    """``(M_t, QV_t)`` after the end snapshot has been taken.

    Each jump moves ``Y(H)`` by ``N**-1.5 * grad^N H``, so the drift and the
    quadratic variation are ``N**-1.5`` and ``N**-3`` times the microscopic
    time integrals whatever the time scale.
    """
    if acc.Y0 is None or acc.Yt is None:
        raise ValueError("take start and end snapshots first")
    N = float(acc.N)
    M = acc.Yt - acc.Y0 - N**-1.5 * acc.drift.A
    return M, N**-3.0 * acc.qv.A


def compensator_value(acc: MartingaleAccumulator) -> float:
    return float(acc.N) ** -3.0 * acc.compensator.A


# ------------------------------------------------------------------- export

SAMPLE_HEADER = ("replica", "t", "observable", "label", "value")


def write_samples_csv(path, rows: Iterable[Sequence]) -> None:
    """Write ``replica,t,observable,label,value`` rows sorted by replica, then time."""
    ordered = sorted(rows, key=lambda r: (int(r[0]), float(r[1])))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_HEADER)
        for r in ordered:
            w.writerow([int(r[0]), repr(float(r[1])), r[2], r[3], repr(float(r[4]))])
