"""Mollification of a rough metric inside K, blended into the untouched end.

    g_t = sum_a psi_a (eta_t * g) + psi_end g

``psi_end`` rises from 0 on K to 1 outside the blending annulus; the chart
weights ``psi_a`` split ``1 - psi_end`` between two overlapping boxes along the
first axis. Each chart mollifies on its own box. The convolution integral is
evaluated against the closed form of ``g`` on a lattice of spacing ``t/q``
because the admissible smoothing scales are below the grid spacing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .curvature import negative_part, scalar_curvature_block, scalar_curvature_fd
from .grid import Grid, MetricField, ScalarField, crop, fsum, lp_norm
from .metrics import AnalyticMetric


def smoothstep(z):
    """C^3 ramp: 0 for z <= 0, 1 for z >= 1."""
    z = np.clip(z, 0.0, 1.0)
    return z ** 4 * (35.0 - 84.0 * z + 70.0 * z ** 2 - 20.0 * z ** 3)


def blend_width(grid: Grid) -> float:
    return grid.compact_radius / 4.0


@dataclass(frozen=True)
class Chart:
    lower: np.ndarray
    upper: np.ndarray


def chart_cover(grid: Grid):
    """Two boxes overlapping on ``|x_1| <= delta`` that cover ``B(R_K + delta)``."""
    d = blend_width(grid)
    outer = grid.compact_radius + d
    return (
        Chart(np.array([-outer, -outer, -outer]), np.array([d, outer, outer])),
        Chart(np.array([-d, -outer, -outer]), np.array([outer, outer, outer])),
    )


def partition_of_unity(grid: Grid, x: np.ndarray):
    """``(psi_end, [psi_a, psi_b])`` at coordinates ``x``."""
    d = blend_width(grid)
    r = np.sqrt(np.sum(x * x, axis=0))
    psi_end = smoothstep((r - grid.compact_radius) / d)
    chi_b = smoothstep((x[0] + d) / (2.0 * d))
    inner = 1.0 - psi_end
    return psi_end, [inner * (1.0 - chi_b), inner * chi_b]


def mollifier_lattice(t: float, q: int = 4):
    """Offsets and weights of the bump ``exp(-1/(1 - |y|^2/t^2))`` on a lattice of spacing ``t/q``."""
    k = np.arange(-q, q + 1)
    m = np.stack(np.meshgrid(k, k, k, indexing="ij")).reshape(3, -1)
    z2 = np.sum(m * m, axis=0) / float(q * q)
    keep = z2 < 1.0
    m, z2 = m[:, keep], z2[keep]
    w = np.exp(-1.0 / (1.0 - z2))
    w = w / fsum(w)
    return m * (t / q), w


def mollify_values(metric: AnalyticMetric, points: np.ndarray, t: float, q: int = 4, chunk: int = 2048):
    """``(eta_t * g)`` at ``points`` (shape ``(3, m)``), as ``(3, 3, m)``.

    Written as ``g(x) + sum_k w_k (g(x - y_k) - g(x))`` so constants are reproduced
    bitwise.
    """
    offs, w = mollifier_lattice(t, q)
    out = np.empty((3, 3, points.shape[1]))
    for s in range(0, points.shape[1], chunk):
        p = points[:, s:s + chunk]
        g0 = metric.metric_fn(p)
        shifted = p[:, :, None] - offs[:, None, :]
        gs = metric.metric_fn(shifted)
        out[:, :, s:s + chunk] = g0 + np.einsum("ijmk,k->ijm", gs - g0[..., None], w)
    return out


@dataclass(frozen=True, eq=False)
class SmoothedMetric:
    t: float
    g_t: MetricField
    rho: float
    deficit_K: float = float("nan")
    deficit_M: float = float("nan")
    sminus_norm: float = float("nan")
    s_t: ScalarField | None = None
    sminus: ScalarField | None = None


def mollify_family(
    metric: AnalyticMetric, grid: Grid, t: float, g: MetricField | None = None, q: int = 4
) -> SmoothedMetric:
    """Smooth ``metric`` on the charts covering K and blend it with the end."""
    d = blend_width(grid)
    if not 0 < t < d / 4:
        raise ValueError(f"smoothing scale t = {t} must lie in (0, delta_blend/4 = {d / 4})")
    if g is None:
        g = metric.sample(grid)
    x = grid.coords()
    psi_end, psis = partition_of_unity(grid, x)
    base = g.tensor()
    # g + sum_a psi_a (eta_t * g - g): equal to the defining sum since the psi add
    # to one, and exact wherever the convolution reproduces g
    blended = base.copy()
    for chart, psi in zip(chart_cover(grid), psis):
        inside = (psi > 0) & np.all(
            (x >= chart.lower[:, None, None, None]) & (x <= chart.upper[:, None, None, None]), axis=0
        )
        if (psi > 0).sum() != inside.sum():
            raise ValueError("partition function not subordinate to its chart")
        conv = mollify_values(metric, x[:, inside], t, q)
        blended[:, :, inside] += psi[inside] * (conv - base[:, :, inside])
    exact = psi_end == 1.0
    blended = np.where(exact, base, blended)
    try:
        g_t = MetricField.from_tensor(grid, blended)
    except ValueError as exc:
        raise ValueError(f"mollified metric at t = {t}: {exc}") from None
    return SmoothedMetric(t=t, g_t=g_t, rho=equivalence_rho(g, g_t))


def equivalence_rho(g: MetricField, g_t: MetricField) -> float:
    """Least ``rho >= 1`` with ``g_t / rho <= g <= rho g_t`` at every interior node.

    Uses the eigenvalues of the pencil ``(g, g_t)`` via a Cholesky factor of ``g_t``.
    """
    a = crop(g.components, g.ghost, 0).reshape(6, -1)
    b = crop(g_t.components, g_t.ghost, 0).reshape(6, -1)
    differ = np.any(a != b, axis=0)
    if not differ.any():
        return 1.0
    idx = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])
    A = np.moveaxis(a[:, differ][idx], -1, 0)
    B = np.moveaxis(b[:, differ][idx], -1, 0)
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        raise ValueError("singular metric node") from None
    Linv = np.linalg.inv(L)
    M = Linv @ A @ np.swapaxes(Linv, -1, -2)
    lam = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    if lam[:, 0].min() <= 0:
        raise ValueError("singular metric node")
    return float(max(1.0, lam[:, -1].max(), 1.0 / lam[:, 0].min()))


def fd_difference(g: MetricField, g_t: MetricField) -> np.ndarray:
    """``S_h[g_t] - S_h[g]`` on the interior nodes, computed only where it can be nonzero.

    The stencil reaches two nodes, so outside the changed nodes widened by two
    the difference is exactly zero; inside, block evaluation is bitwise equal
    to the full-grid one.
    """
    if g.ghost != g_t.ghost or g.ghost < 2:
        raise ValueError("both metrics need the same ghost width >= 2")
    gw, N = g.ghost, g.grid.nodes_per_axis
    out = np.zeros(g.grid.interior_shape)
    changed = np.any(g.components != g_t.components, axis=0)
    if not changed.any():
        return out
    idx = np.argwhere(changed)
    lo = np.maximum(idx.min(axis=0) - 2, gw)
    hi = np.minimum(idx.max(axis=0) + 3, gw + N)
    blk = tuple(slice(a - 2, b + 2) for a, b in zip(lo, hi))
    h = g.grid.h
    d = scalar_curvature_block(g_t.components[(slice(None),) + blk], h) - scalar_curvature_block(
        g.components[(slice(None),) + blk], h
    )
    out[tuple(slice(a - gw, b - gw) for a, b in zip(lo, hi))] = d
    return out


def curvature_deficit(
    metric: AnalyticMetric,
    sm: SmoothedMetric,
    grid: Grid,
    g: MetricField | None = None,
    fd_rough: ScalarField | None = None,
    mode: str = "corrected",
) -> SmoothedMetric:
    """Fill in ``deficit_K``, ``deficit_M`` and ``sminus_norm`` on a smoothed metric.

    ``mode="corrected"`` takes ``s_{g_t} = s_g + (S_h[g_t] - S_h[g])`` with ``S_h``
    the finite-difference curvature, so ``s_{g_t} = s_g`` wherever ``g_t = g``;
    ``mode="raw"`` takes ``s_{g_t} = S_h[g_t]``.
    """
    if metric.oracle_scalar_curvature is None:
        raise ValueError("curvature deficit needs a scalar curvature oracle")
    if g is None:
        g = metric.sample(grid)
    s_g = metric.scalar_curvature(grid)
    if mode == "corrected":
        diff = fd_difference(g, sm.g_t) if fd_rough is None else (
            scalar_curvature_fd(sm.g_t).interior - fd_rough.interior
        )
    elif mode == "raw":
        diff = scalar_curvature_fd(sm.g_t).interior - s_g.interior
    else:
        raise ValueError(f"unknown curvature mode {mode!r}")
    s_t = ScalarField(grid, s_g.interior + diff, 0)
    sminus = negative_part(s_t)
    deficit = lp_norm(diff, 1.5, g, "K")
    deficit_m = lp_norm(diff, 1.5, g, "all")
    sminus_norm = lp_norm(sminus, 1.5, sm.g_t, "all")
    return replace(sm, deficit_K=deficit, deficit_M=deficit_m, sminus_norm=sminus_norm, s_t=s_t, sminus=sminus)
