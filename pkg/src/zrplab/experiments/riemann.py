"""
Entropy solution of the Riemann problem for the TAZRP conservation law.

``d_t rho + d_x phi(rho) = 0`` with ``phi(rho) = rho / (1 + rho)``.  The flux
is concave, so increasing data (``rho_l < rho_r``) form a shock and
decreasing data a rarefaction fan with ``rho(xi) = xi**-1/2 - 1``.
"""

from __future__ import annotations

import math

import numpy as np

from ..ensemble import flux, flux_derivative

__all__ = ["riemann_solution", "shock_speed", "profile", "lax_entropy_ok"]


def _check(rho_l: float, rho_r: float) -> None:
    if rho_l < 0 or rho_r < 0 or not (math.isfinite(rho_l) and math.isfinite(rho_r)):
        raise ValueError("densities must be finite and nonnegative")


def shock_speed(rho_l: float, rho_r: float) -> float:
    """Rankine-Hugoniot speed ``[phi] / [rho] = 1 / ((1 + rho_l)(1 + rho_r))``."""
    _check(rho_l, rho_r)
    return 1.0 / ((1.0 + rho_l) * (1.0 + rho_r))


def lax_entropy_ok(rho_l: float, rho_r: float) -> bool:
    """Characteristics run into the shock: ``phi'(rho_l) >= sigma >= phi'(rho_r)``."""
    s = shock_speed(rho_l, rho_r)
    return flux_derivative(rho_l) >= s >= flux_derivative(rho_r)


def riemann_solution(rho_l: float, rho_r: float, xi):
    """Density at ``xi = x / t`` for step data ``rho_l`` (x < 0), ``rho_r`` (x > 0).

    Examples
    --------
    >>> riemann_solution(1.0, 0.0, 0.5)
    0.4142135623730949
    >>> riemann_solution(0.0, 1.0, 0.49), riemann_solution(0.0, 1.0, 0.51)
    (0.0, 1.0)
    """
    _check(rho_l, rho_r)
    x = np.asarray(xi, dtype=np.float64)
    if rho_l == rho_r:
        out = np.full_like(x, rho_l)
    elif rho_l < rho_r:
        out = np.where(x < shock_speed(rho_l, rho_r), rho_l, rho_r)
    else:
        lo, hi = flux_derivative(rho_l), flux_derivative(rho_r)
        with np.errstate(divide="ignore"):
            fan = 1.0 / np.sqrt(np.clip(x, lo, hi)) - 1.0
        out = np.where(x <= lo, rho_l, np.where(x >= hi, rho_r, fan))
    return out.astype(float) if out.ndim else float(out)


def profile(rho_l: float, rho_r: float, t: float, points: int, half_width: float | None = None):
    """Tabulate ``(xi, rho)`` on ``points`` equally spaced ``xi`` values.

    The range covers every wave with a margin: ``[-w, w]`` with ``w`` one
    more than the fastest characteristic speed unless given.  ``t`` only
    matters through ``x = xi * t`` and is validated for positivity.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if points < 2:
        raise ValueError("need at least two points")
    w = half_width if half_width is not None else 1.0 + max(flux_derivative(rho_l), flux_derivative(rho_r))
    xi = np.linspace(-w, w, points)
    return xi, riemann_solution(rho_l, rho_r, xi)


def mass_balance_speed(rho_l: float, rho_r: float) -> float:
    """Speed implied by mass conservation: ``(phi(rho_r) - phi(rho_l)) / (rho_r - rho_l)``."""
    return (flux(rho_r) - flux(rho_l)) / (rho_r - rho_l)
