"""Test-function pairings, Sobolev constants and the smallness condition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .grid import Grid, MetricField, ScalarField, gradient_norm_sq, integrate as quad, lp_norm, sample
from .smoothing import equivalence_rho, smoothstep


def sharp_sobolev_constant(n: int = 3) -> float:
    """Best ``S`` in ``||phi||^2_{2n/(n-2)} <= S ||grad phi||^2_2`` on flat ``R^n``."""
    return (math.gamma(n) / math.gamma(n / 2.0)) ** (2.0 / n) / (math.pi * n * (n - 2))


def sphere_area(n: int = 3) -> float:
    """Area of the unit ``(n-1)``-sphere."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True)
class Constants:
    n: int = 3
    c_n: float = 0.125
    omega: float = 4.0 * math.pi
    S_n: float = sharp_sobolev_constant(3)

    @classmethod
    def for_dimension(cls, n: int = 3, S_n: float | None = None) -> Constants:
        if n < 3:
            raise ValueError("dimension must be at least 3")
        return cls(
            n=n,
            c_n=(n - 2) / (4.0 * (n - 1)),
            omega=sphere_area(n),
            S_n=sharp_sobolev_constant(n) if S_n is None else S_n,
        )

    @property
    def critical_exponent(self) -> float:
        return 2.0 * self.n / (self.n - 2)

    @property
    def dual_exponent(self) -> float:
        return 2.0 * self.n / (self.n + 2)


def radial_quotient(a: float, n: int = 3) -> float:
    """Flat quotient of ``(1 + r^2)^{-a}`` by 1-d radial quadrature."""
    p = 2.0 * n / (n - 2)
    f = lambda r: (1.0 + r * r) ** (-a * p) * r ** (n - 1)
    dg = lambda r: (2.0 * a * r) ** 2 * (1.0 + r * r) ** (-2.0 * a - 2.0) * r ** (n - 1)
    num = integrate.quad(f, 0, np.inf, limit=200)[0]
    den = integrate.quad(dg, 0, np.inf, limit=200)[0]
    w = sphere_area(n)
    return (w * num) ** (2.0 / p) / (w * den)


def bubble_sobolev_constant(n: int = 3):
    """Maximize the radial quotient over the family ``(1 + r^2)^{-a}``.

    Returns ``(S, a_opt)``; the maximizer should be the bubble ``a = (n-2)/2``.
    """
    lo = (n - 2) / (2.0 * n) + 0.05
    res = optimize.minimize_scalar(
        lambda a: -radial_quotient(a, n), bounds=(lo, 2.0), method="bounded", options={"xatol": 1e-10}
    )
    return -res.fun, float(res.x)


def rayleigh_quotient(phi: ScalarField, g: MetricField, n: int = 3) -> float:
    """``Q_g(phi) = ||phi||^2_{L^{2n/(n-2)}(g)} / ||grad phi||^2_{L^2(g)}``."""
    p = 2.0 * n / (n - 2)
    num = lp_norm(phi, p, g) ** 2
    den = quad(gradient_norm_sq(phi, g).at_ghost(0), phi.grid, g)
    if den <= 0:
        raise ValueError("test function has zero gradient energy")
    return num / den


def _check_margin(phi: ScalarField, margin: int):
    if margin <= 0:
        return
    band = np.abs(phi.interior) > 0
    band[margin:-margin, margin:-margin, margin:-margin] = False
    if band.any():
        raise ValueError(f"test function is nonzero within {margin} nodes of the boundary")


def distributional_pairing(s: ScalarField, phi: ScalarField, g: MetricField | None = None, margin: int = 2) -> float:
    """``int s phi^2 dmu_g`` for a test function vanishing on a boundary margin."""
    _check_margin(phi, margin)
    return quad(s.interior * phi.interior ** 2, s.grid, g)


def sobolev_upper_bound(g: MetricField, constants: Constants = Constants()) -> float:
    """Certified ``c_1[g] <= rho_flat^n S_n`` from the sandwich against the flat metric."""
    rho = equivalence_rho(g, MetricField.flat(g.grid))
    if not math.isfinite(rho):
        raise ValueError("metric is degenerate")
    return rho ** constants.n * constants.S_n


def sy_condition(c1_upper: float, sminus_norm: float, constants: Constants = Constants()):
    """``(value, value <= 1/2)`` with ``value = c_n c1 ||[s]_-||_{n/2}``."""
    if c1_upper < 0 or sminus_norm < 0:
        raise ValueError("inputs must be non-negative")
    value = constants.c_n * c1_upper * sminus_norm
    return value, bool(value <= 0.5)


def bump(center, width: float):
    """Radial C^3 bump: 1 near ``center``, 0 beyond ``width``."""
    c = np.asarray(center, dtype=float)

    def fn(x):
        d = x - c.reshape((3,) + (1,) * (x.ndim - 1))
        r = np.sqrt(np.sum(d * d, axis=0))
        return smoothstep(2.0 * (1.0 - r / width))

    return fn


def make_test_functions(grid: Grid, seed: int = 0, count: int = 20, region_radius: float | None = None):
    """Bumps at three widths and ``count`` seeded random superpositions.

    Returns a list of ``(label, ScalarField)``. Supports stay inside the ball of
    radius ``region_radius + width`` (default ``R_K``) so the boundary margin is
    never touched.
    """
    rr = grid.compact_radius if region_radius is None else region_radius
    room = grid.extent - 3 * grid.h
    out = []
    for frac in (0.5, 1.0, 1.5):
        w = min(frac * rr, room)
        out.append((f"bump_w{frac:g}", sample(bump((0.0, 0.0, 0.0), w), grid)))
    rng = np.random.default_rng(seed)
    for k in range(count):
        m = int(rng.integers(1, 5))
        centers = rng.uniform(-rr / 2, rr / 2, size=(m, 3))
        widths = rng.uniform(0.3 * rr, min(rr, room - 0.87 * rr), size=m)
        amps = rng.uniform(-1.0, 1.0, size=m)
        amps[0] = 1.0

        def fn(x, centers=centers, widths=widths, amps=amps):
            return sum(a * bump(c, w)(x) for c, w, a in zip(centers, widths, amps))

        out.append((f"random_{k:02d}", sample(fn, grid)))
    return out
