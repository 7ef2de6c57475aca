"""Closed-form metric families with curvature and mass oracles.

All families here are conformally flat, ``g = u^4 delta`` in three dimensions,
so the scalar curvature is ``s = -8 u^{-5} Delta u`` and the ADM mass is twice
the ``1/r`` coefficient of ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid, lp_norm, sample


@dataclass(frozen=True)
class AnalyticMetric:
    name: str
    metric_fn: Callable[[np.ndarray], np.ndarray]
    oracle_scalar_curvature: Callable[[np.ndarray], np.ndarray] | None = None
    oracle_mass: float | None = None
    smooth_outside: float = 0.0
    holder_exponent: float | None = None
    params: dict = field(default_factory=dict)
    # conformal factor u and grad(log u), when the family is u^4 delta
    conformal_factor: Callable[[np.ndarray], np.ndarray] | None = None
    log_factor_gradient: Callable[[np.ndarray], np.ndarray] | None = None

    def sample(self, grid: Grid):
        return sample(self.metric_fn, grid)

    def scalar_curvature(self, grid: Grid):
        if self.oracle_scalar_curvature is None:
            raise ValueError(f"family {self.name!r} has no scalar curvature oracle")
        return sample(self.oracle_scalar_curvature, grid)


def _conformal_metric(u_fn):
    def metric(x):
        u4 = u_fn(x) ** 4
        g = np.zeros((3, 3) + u4.shape)
        for i in range(3):
            g[i, i] = u4
        return g

    return metric


def flat() -> AnalyticMetric:
    one = lambda x: np.ones(x.shape[1:])
    return AnalyticMetric(
        name="flat",
        metric_fn=_conformal_metric(one),
        oracle_scalar_curvature=lambda x: np.zeros(x.shape[1:]),
        oracle_mass=0.0,
        smooth_outside=0.0,
        holder_exponent=1.0,
        conformal_factor=one,
        log_factor_gradient=lambda x: np.zeros_like(x),
    )


def schwarzschild_isotropic(m: float, center=(0.0, 0.0, 0.0)) -> AnalyticMetric:
    """``(1 + m/(2r))^4 delta``; harmonic conformal factor, so ``s = 0`` for ``r > 0``.

    ``r`` is measured from ``center``; moving the puncture off the origin gives
    a metric that is smooth on a ball around it.
    """
    if m <= 0:
        raise ValueError("mass must be positive")
    c = np.asarray(center, dtype=float)

    def rel(x):
        d = x - c.reshape((3,) + (1,) * (x.ndim - 1))
        return d, np.sqrt(np.sum(d * d, axis=0))

    def u(x):
        _, r = rel(x)
        with np.errstate(divide="ignore"):
            return 1.0 + m / (2.0 * r)

    def dlog(x):
        d, r = rel(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            du = -m / (2.0 * r ** 3)
            return du * d / u(x)

    return AnalyticMetric(
        name="schwarzschild",
        metric_fn=_conformal_metric(u),
        oracle_scalar_curvature=lambda x: np.zeros(x.shape[1:]),
        oracle_mass=float(m),
        smooth_outside=0.0,
        holder_exponent=1.0,
        params={"mass": float(m), "center": [float(v) for v in c]},
        conformal_factor=u,
        log_factor_gradient=dlog,
    )


def round_sphere(radius: float = 1.0) -> AnalyticMetric:
    """Stereographic round metric ``(1 + |x|^2/(4 a^2))^{-2} delta``; ``s = 6/a^2``."""
    a2 = radius * radius

    def u(x):
        return (1.0 + np.sum(x * x, axis=0) / (4.0 * a2)) ** -0.5

    def dlog(x):
        return -0.25 / a2 * x / (1.0 + np.sum(x * x, axis=0) / (4.0 * a2))

    return AnalyticMetric(
        name="round_sphere",
        metric_fn=_conformal_metric(u),
        oracle_scalar_curvature=lambda x: np.full(x.shape[1:], 6.0 / a2),
        holder_exponent=1.0,
        params={"radius": radius},
        conformal_factor=u,
        log_factor_gradient=dlog,
    )


@dataclass(frozen=True)
class RoughConformalSpec:
    """Parameters of ``u = 1 + eps v`` with ``-Delta v = |x - x0|^{-beta}`` on ``B(x0, r0)``."""

    eps: float
    beta: float
    r0: float
    x0: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))

    def validate(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 1.0 < self.beta < 2.0:
            raise ValueError(f"beta must lie in (1, 2), got {self.beta}")
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")

    @property
    def exterior_coefficient(self) -> float:
        """``C`` in ``v = C/|x - x0|`` outside ``r0``."""
        return self.r0 ** (3.0 - self.beta) / (3.0 - self.beta)


def rough_profile(spec: RoughConformalSpec, rho):
    """Radial potential ``v(rho)`` and its derivative ``v'(rho)``."""
    b, r0 = spec.beta, spec.r0
    C = spec.exterior_coefficient
    inside = rho < r0
    with np.errstate(divide="ignore", invalid="ignore"):
        v_in = r0 ** (2.0 - b) / (2.0 - b) - rho ** (2.0 - b) / ((3.0 - b) * (2.0 - b))
        dv_in = -rho ** (1.0 - b) / (3.0 - b)
        v_out = C / rho
        dv_out = -C / rho ** 2
    return np.where(inside, v_in, v_out), np.where(inside, dv_in, dv_out)


def rough_conformal(spec: RoughConformalSpec, check: bool = True) -> AnalyticMetric:
    """Conformally flat metric whose curvature is a non-negative ``L^{3/2}`` density.

    The potential has a ``rho^{2-beta}`` cusp, so the metric is Hölder with
    exponent ``2 - beta`` but not Lipschitz. ``check=False`` skips the parameter
    range test (for negative regularity tests only).
    """
    if check:
        spec.validate()
    eps, b, r0 = spec.eps, spec.beta, spec.r0
    x0 = np.array(spec.x0)
    C = spec.exterior_coefficient

    def rel(x):
        d = x - x0.reshape((3,) + (1,) * (x.ndim - 1))
        return d, np.sqrt(np.sum(d * d, axis=0))

    def u(x):
        _, rho = rel(x)
        v, _ = rough_profile(spec, rho)
        out = 1.0 + eps * v
        if np.any(out <= 0.5):
            raise ValueError("conformal factor drops to 1/2 or below")
        return out

    def source(rho):
        with np.errstate(divide="ignore"):
            return np.where(rho < r0, rho ** (-b), 0.0)

    def s_oracle(x):
        _, rho = rel(x)
        return 8.0 * eps * u(x) ** -5 * source(rho)

    def dlog(x):
        d, rho = rel(x)
        _, dv = rough_profile(spec, rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            return eps * dv * d / rho / u(x)

    return AnalyticMetric(
        name="rough_conformal",
        metric_fn=_conformal_metric(u),
        oracle_scalar_curvature=s_oracle,
        oracle_mass=2.0 * eps * C,
        smooth_outside=float(np.linalg.norm(x0)) + r0,
        holder_exponent=min(1.0, 2.0 - b),
        params={"eps": eps, "beta": b, "r0": r0, "x0": list(spec.x0)},
        conformal_factor=u,
        log_factor_gradient=dlog,
    )


def christoffel_norm_sq(metric: AnalyticMetric, x: np.ndarray) -> np.ndarray:
    """Euclidean ``sum_{kij} (Gamma^k_ij)^2`` for a conformally flat family.

    With ``a = grad log u`` and ``Gamma^k_ij = 2(delta^k_i a_j + delta^k_j a_i -
    delta_ij a^k)`` the sum collapses to ``28 |a|^2``.
    """
    a = metric.log_factor_gradient(x)
    return 28.0 * np.sum(a * a, axis=0)


def regularity_certificate(metric: AnalyticMetric, grid: Grid, levels: int = 3, tol: float = 0.05):
    """Norms of the connection in ``L^3(K)`` and the curvature in ``L^{3/2}(K)`` under refinement.

    Each quantity is CONVERGENT when successive refinements change it by less
    than ``tol`` (relative), DIVERGENT otherwise.
    """
    if metric.log_factor_gradient is None or metric.oracle_scalar_curvature is None:
        raise ValueError("certificate needs closed-form derivatives and a curvature oracle")
    rows = []
    g = grid
    for _ in range(levels):
        x = g.coords(0)
        gmet = sample(metric.metric_fn, g)
        gam = np.sqrt(christoffel_norm_sq(metric, x))
        s = metric.oracle_scalar_curvature(x)
        rows.append({
            "h": g.h,
            "gamma_L3": lp_norm(gam, 3.0, gmet, "K"),
            "s_L3_2": lp_norm(s, 1.5, gmet, "K"),
        })
        g = g.refined(2)

    def verdict(key):
        vals = [r[key] for r in rows]
        ok = True
        for a, b in zip(vals, vals[1:]):
            scale = max(abs(a), abs(b))
            if scale > 0 and abs(b - a) / scale >= tol:
                ok = False
        return "CONVERGENT" if ok else "DIVERGENT"

    return {"rows": rows, "gamma_L3": verdict("gamma_L3"), "s_L3_2": verdict("s_L3_2")}
