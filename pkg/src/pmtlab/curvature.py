"""Christoffel symbols, scalar curvature and the conformal curvature identity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import _SYM_INDEX, Grid, MetricField, ScalarField, crop, diff_array, inverse6
from .stencil import divergence_stencil


@dataclass(frozen=True, eq=False)
class ChristoffelField:
    """``values[k, i, j] = Gamma^k_ij`` at ghost width ``ghost``."""

    grid: Grid
    values: np.ndarray
    ghost: int


def metric_derivatives(g: MetricField) -> np.ndarray:
    """``d[l, i, j] = d_l g_ij``, one ghost layer thinner than ``g``."""
    if g.ghost < 1:
        raise ValueError("derivative requested beyond ghost support")
    return _derivs(g.tensor(), g.grid.h)


def _derivs(t, h):
    return np.stack([diff_array(t, l, h) for l in range(3)])


def _christoffel_block(comps: np.ndarray, h: float, ginv=None) -> np.ndarray:
    """Christoffel symbols on a block of packed components; one layer thinner."""
    d = _derivs(comps[_SYM_INDEX], h)
    # lowered[l, i, j] = Gamma_{l i j}
    lowered = 0.5 * (d.transpose(2, 0, 1, 3, 4, 5) + d.transpose(2, 1, 0, 3, 4, 5) - d)
    if ginv is None:
        ginv = inverse6(comps)
    ginv = crop(ginv, 1, 0)
    gamma = np.einsum("kl...,lij...->kij...", ginv, lowered)
    return 0.5 * (gamma + gamma.transpose(0, 2, 1, 3, 4, 5))


def christoffel(g: MetricField) -> ChristoffelField:
    """``Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)`` by centred differences."""
    if g.ghost < 1:
        raise ValueError("derivative requested beyond ghost support")
    gamma = _christoffel_block(g.components, g.grid.h, g.inverse())
    return ChristoffelField(g.grid, gamma, g.ghost - 1)


def scalar_curvature_block(comps: np.ndarray, h: float, ginv=None) -> np.ndarray:
    """Scalar curvature of packed components on any block; two layers thinner.

    s = g^{ij} (d_k G^k_ij - d_j G^k_ik + G^k_kl G^l_ij - G^k_jl G^l_ik)

    Each output node depends only on inputs within two nodes of it, so a block
    evaluation agrees bitwise with the full-grid one on their common nodes.
    """
    if ginv is None:
        ginv = inverse6(comps)
    G = _christoffel_block(comps, h, ginv)
    ric = sum(diff_array(G[k], k, h) for k in range(3))
    trace = np.einsum("kik...->i...", G)
    dtrace = np.stack([diff_array(trace, j, h) for j in range(3)])  # [j, i]
    ric = ric - dtrace.transpose(1, 0, 2, 3, 4)
    Gc = crop(G, 1, 0)
    tc = crop(trace, 1, 0)
    ric = ric + np.einsum("l...,lij...->ij...", tc, Gc)
    ric = ric - np.einsum("kjl...,lik...->ij...", Gc, Gc)
    return np.einsum("ij...,ij...->...", crop(ginv, 2, 0), ric)


def scalar_curvature_fd(g: MetricField) -> ScalarField:
    """Scalar curvature from differenced Christoffel symbols (consumes two ghost layers)."""
    if g.ghost < 2:
        raise ValueError("scalar curvature needs two ghost layers")
    s = scalar_curvature_block(g.components, g.grid.h, g.inverse())
    return ScalarField(g.grid, s, g.ghost - 2)


def laplace_beltrami(f: ScalarField, g: MetricField | None = None) -> ScalarField:
    """Divergence-form ``Delta_g f``; the result is one ghost layer thinner.

    Uses the same 19-point stencil as the conformal operator, so the two agree
    exactly at nodes away from the outer boundary.
    """
    grid = f.grid
    gw = f.ghost if g is None else min(f.ghost, g.ghost)
    if gw < 1:
        raise ValueError("derivative requested beyond ghost support")
    fv = f.at_ghost(gw)
    if g is None:
        a = np.zeros((3, 3) + fv.shape)
        for i in range(3):
            a[i, i] = 1.0
        vol = np.ones(fv.shape)
    else:
        vol = crop(g.sqrt_det(), g.ghost, gw)
        a = vol * crop(g.inverse(), g.ghost, gw)
    st = divergence_stencil(a, grid.h)
    lap = -st.apply(fv) / (grid.h ** 3 * vol)
    return ScalarField(grid, crop(lap, gw, gw - 1), gw - 1)


def scalar_curvature_conformal(
    u: ScalarField, base_s: ScalarField | None = None, g: MetricField | None = None, n: int = 3
) -> ScalarField:
    """Scalar curvature of ``u^{4/(n-2)} g`` from the conformal identity.

    s_hat = u^{-(n+2)/(n-2)} (-(1/c_n) Delta_g u + s_g u),  c_n = (n-2)/(4(n-1)).
    ``base_s=None`` means ``s_g = 0``; ``g=None`` means the flat metric.
    """
    if np.any(u.values <= 0):
        raise ValueError("conformal factor must be positive")
    c_n = (n - 2) / (4.0 * (n - 1))
    lap = laplace_beltrami(u, g)
    gw = lap.ghost
    if base_s is not None:
        gw = min(gw, base_s.ghost)
    uv = u.at_ghost(gw)
    lv = lap.at_ghost(gw)
    sv = 0.0 if base_s is None else base_s.at_ghost(gw)
    out = uv ** (-(n + 2) / (n - 2)) * (-lv / c_n + sv * uv)
    return ScalarField(u.grid, out, gw)


def negative_part(s: ScalarField) -> ScalarField:
    """``[s]_- = max(-s, 0)`` so that ``s = [s]_+ - [s]_-``."""
    return ScalarField(s.grid, np.maximum(-s.values, 0.0), s.ghost)


def positive_part(s: ScalarField) -> ScalarField:
    return ScalarField(s.grid, np.maximum(s.values, 0.0), s.ghost)
