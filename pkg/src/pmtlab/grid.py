"""Node-sampled fields on a truncated Cartesian box.

The computational domain is the cube ``[-R, R]^3`` sampled at ``N`` nodes per
axis, padded with ``ghost`` extra layers on every side. Every field array has
the ghost-extended shape, possibly cropped to a smaller ghost width after
differentiation (a centred difference consumes one ghost layer).

The compact set ``K`` is the closed coordinate ball of radius ``R_K``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

# (i, j) index pairs of the six independent metric components.
SYM_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_SYM_INDEX = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on ``[-R, R]^dim`` with ghost padding."""

    extent: float
    nodes_per_axis: int
    compact_radius: float
    ghost: int = 2
    dim: int = 3

    def __post_init__(self):
        if self.dim != 3:
            raise ValueError("only dim = 3 is supported at runtime")
        if self.nodes_per_axis < 17:
            raise ValueError(f"nodes_per_axis must be >= 17, got {self.nodes_per_axis}")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        if not 0 < self.compact_radius < self.extent / 2:
            raise ValueError(
                f"compact_radius {self.compact_radius} must lie in (0, R/2 = {self.extent / 2})"
            )
        if self.ghost < 0:
            raise ValueError("ghost width must be non-negative")

    @property
    def h(self) -> float:
        return 2.0 * self.extent / (self.nodes_per_axis - 1)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Shape of a field array carrying the full ghost layer."""
        n = self.nodes_per_axis + 2 * self.ghost
        return (n, n, n)

    @property
    def interior_shape(self) -> tuple[int, int, int]:
        n = self.nodes_per_axis
        return (n, n, n)

    def axis(self, ghost: int | None = None) -> np.ndarray:
        g = self.ghost if ghost is None else ghost
        idx = np.arange(-g, self.nodes_per_axis + g)
        return -self.extent + idx * self.h

    def coords(self, ghost: int | None = None) -> np.ndarray:
        """Node coordinates, shape ``(3, n, n, n)``."""
        a = self.axis(ghost)
        return np.stack(np.meshgrid(a, a, a, indexing="ij"))

    def radius(self, ghost: int | None = None) -> np.ndarray:
        x = self.coords(ghost)
        return np.sqrt(np.sum(x * x, axis=0))

    def refined(self, factor: int = 2) -> Grid:
        """Grid with spacing divided by ``factor`` (nodes stay nested)."""
        n = factor * (self.nodes_per_axis - 1) + 1
        return Grid(self.extent, n, self.compact_radius, self.ghost, self.dim)

    def nearest_node(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        k = np.rint((x + self.extent) / self.h)
        return -self.extent + k * self.h

    def region_mask(self, region) -> np.ndarray:
        """Boolean node mask over the interior nodes.

        ``region`` is ``"all"``, ``"K"``, ``"complement"`` or a boolean array of
        the interior shape. A node lies in K iff ``|x| <= R_K``.
        """
        if isinstance(region, np.ndarray):
            if region.shape != self.interior_shape:
                raise ValueError("region mask must have the interior shape")
            return region.astype(bool)
        r = self.radius(0)
        if region == "all":
            return np.ones(self.interior_shape, dtype=bool)
        if region == "K":
            return r <= self.compact_radius
        if region == "complement":
            return r > self.compact_radius
        raise ValueError(f"unknown region {region!r}")


def crop(values: np.ndarray, have: int, want: int) -> np.ndarray:
    """Crop the trailing three axes of ``values`` from ghost width ``have`` to ``want``."""
    if want > have:
        raise ValueError(f"cannot widen ghost layer from {have} to {want}")
    d = have - want
    if d == 0:
        return values
    sl = (Ellipsis, slice(d, -d), slice(d, -d), slice(d, -d))
    return values[sl]


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One value per node; ``values`` has ghost width ``ghost``."""

    grid: Grid
    values: np.ndarray
    ghost: int = -1

    def __post_init__(self):
        g = self.grid.ghost if self.ghost < 0 else self.ghost
        object.__setattr__(self, "ghost", g)
        n = self.grid.nodes_per_axis + 2 * g
        if self.values.shape != (n, n, n):
            raise ValueError(f"expected shape {(n, n, n)}, got {self.values.shape}")
        object.__setattr__(self, "values", _frozen(self.values))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field contains non-finite values")

    @property
    def interior(self) -> np.ndarray:
        return crop(self.values, self.ghost, 0)

    def at_ghost(self, ghost: int) -> np.ndarray:
        return crop(self.values, self.ghost, ghost)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> ScalarField:
        return ScalarField(self.grid, fn(self.values), self.ghost)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric 2-tensor per node, stored as six components ``(6, n, n, n)``.

    The component order is ``xx, xy, xz, yy, yz, zz``.
    """

    grid: Grid
    components: np.ndarray
    ghost: int = -1
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        g = self.grid.ghost if self.ghost < 0 else self.ghost
        object.__setattr__(self, "ghost", g)
        n = self.grid.nodes_per_axis + 2 * g
        if self.components.shape != (6, n, n, n):
            raise ValueError(f"expected shape {(6, n, n, n)}, got {self.components.shape}")
        object.__setattr__(self, "components", _frozen(self.components))
        if not np.all(np.isfinite(self.components)):
            raise ValueError("metric field contains non-finite values")
        bad = _not_positive_definite(self.components)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ValueError(f"metric is not positive definite at node {idx}")

    @classmethod
    def from_tensor(cls, grid: Grid, tensor: np.ndarray, ghost: int = -1) -> MetricField:
        comps = np.stack([0.5 * (tensor[i, j] + tensor[j, i]) for i, j in SYM_PAIRS])
        return cls(grid, comps, ghost)

    @classmethod
    def flat(cls, grid: Grid) -> MetricField:
        comps = np.zeros((6,) + grid.shape)
        comps[[0, 3, 5]] = 1.0
        return cls(grid, comps)

    def tensor(self) -> np.ndarray:
        """Full ``(3, 3, n, n, n)`` view of the components."""
        return self.components[_SYM_INDEX]

    def at_ghost(self, ghost: int) -> np.ndarray:
        return crop(self.components, self.ghost, ghost)

    def det(self) -> np.ndarray:
        if "det" not in self._cache:
            self._cache["det"] = _det6(self.components)
        return self._cache["det"]

    def sqrt_det(self) -> np.ndarray:
        if "sqrt_det" not in self._cache:
            self._cache["sqrt_det"] = np.sqrt(self.det())
        return self._cache["sqrt_det"]

    def inverse(self) -> np.ndarray:
        """Inverse metric as ``(3, 3, n, n, n)``."""
        if "inverse" not in self._cache:
            self._cache["inverse"] = inverse6(self.components, self.det())
        return self._cache["inverse"]

    def scaled(self, factor) -> MetricField:
        return MetricField(self.grid, self.components * factor, self.ghost)

    def min_eigenvalue(self) -> np.ndarray:
        t = np.moveaxis(self.tensor(), (0, 1), (-2, -1))
        return np.linalg.eigvalsh(t)[..., 0]


def inverse6(c, det=None) -> np.ndarray:
    """Full ``(3, 3, ...)`` inverse of six packed symmetric components (cofactor formula)."""
    xx, xy, xz, yy, yz, zz = c
    cof = np.stack([
        yy * zz - yz * yz,
        xz * yz - xy * zz,
        xy * yz - xz * yy,
        xx * zz - xz * xz,
        xy * xz - xx * yz,
        xx * yy - xy * xy,
    ])
    if det is None:
        det = _det6(c)
    return (cof / det)[_SYM_INDEX]


def _det6(c):
    xx, xy, xz, yy, yz, zz = c
    return xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz)


def _not_positive_definite(c):
    xx, xy, xz, yy, yz, zz = c
    return (xx <= 0) | (xx * yy - xy * xy <= 0) | (_det6(c) <= 0)


def sample(closed_form: Callable[[np.ndarray], np.ndarray], grid: Grid):
    """Evaluate a closed form at every node (ghosts included).

    ``closed_form`` receives coordinates of shape ``(3, ...)`` and returns either
    an array of shape ``(...)`` (scalar) or ``(3, 3, ...)`` (metric).
    """
    x = grid.coords()
    v = np.asarray(closed_form(x), dtype=float)
    if v.shape == grid.shape:
        kind = "scalar"
    elif v.shape == (3, 3) + grid.shape:
        kind = "metric"
    else:
        raise ValueError(f"closed form returned unexpected shape {v.shape}")
    finite = np.isfinite(v)
    if kind == "metric":
        finite = finite.all(axis=(0, 1))
    if not finite.all():
        idx = tuple(int(i) for i in np.argwhere(~finite)[0])
        raise ValueError(
            f"non-finite value at node {idx}, x = {tuple(float(x[(k,) + idx]) for k in range(3))}"
        )
    if kind == "scalar":
        return ScalarField(grid, v)
    return MetricField.from_tensor(grid, v)


def finite_diff(f: ScalarField, direction: int, order: int = 1) -> ScalarField:
    """Centred second-order difference along ``direction``; consumes one ghost layer."""
    if f.ghost < 1:
        raise ValueError("derivative requested beyond ghost support")
    return ScalarField(f.grid, diff_array(f.values, direction, f.grid.h, order), f.ghost - 1)


def diff_array(a: np.ndarray, direction: int, h: float, order: int = 1) -> np.ndarray:
    """Centred difference on the last three axes; the result is one layer smaller per side."""
    ax = a.ndim - 3 + direction
    n = a.shape[ax]

    def take(lo, hi):
        sl = [slice(1, -1)] * a.ndim
        sl[: a.ndim - 3] = [slice(None)] * (a.ndim - 3)
        sl[ax] = slice(lo, n - hi)
        return a[tuple(sl)]

    if order == 1:
        return (take(2, 0) - take(0, 2)) / (2.0 * h)
    if order == 2:
        return (take(2, 0) - 2.0 * take(1, 1) + take(0, 2)) / (h * h)
    raise ValueError("order must be 1 or 2")


def gradient(f: ScalarField) -> np.ndarray:
    """Centred gradient, shape ``(3, ...)`` at ghost width ``f.ghost - 1``."""
    if f.ghost < 1:
        raise ValueError("derivative requested beyond ghost support")
    return np.stack([diff_array(f.values, i, f.grid.h) for i in range(3)])


def gradient_norm_sq(f: ScalarField, g: MetricField) -> ScalarField:
    """Pointwise ``g^{ij} d_i f d_j f``."""
    d = gradient(f)
    gw = f.ghost - 1
    ginv = crop(g.inverse(), g.ghost, gw)
    out = ginv[0, 0] * d[0] ** 2 + ginv[1, 1] * d[1] ** 2 + ginv[2, 2] * d[2] ** 2
    out += 2.0 * (ginv[0, 1] * d[0] * d[1] + ginv[0, 2] * d[0] * d[2] + ginv[1, 2] * d[1] * d[2])
    return ScalarField(f.grid, out, gw)


def region_weights(grid: Grid, region="all") -> np.ndarray:
    if isinstance(region, str):
        return _cached_weights(grid, region)
    return _region_weights(grid, region)


@functools.lru_cache(maxsize=32)
def _cached_weights(grid: Grid, region: str) -> np.ndarray:
    w = _region_weights(grid, region)
    w.setflags(write=False)
    return w


def _region_weights(grid: Grid, region) -> np.ndarray:
    """Node quadrature weights (without ``h^3``) over the interior nodes.

    Trapezoid weights of the whole box, restricted to the mask. Halving at the
    edge of a curved mask would bias the staircase low by O(h/R_K) per axis.
    """
    mask = grid.region_mask(region)
    n = grid.nodes_per_axis
    tw = np.ones(n)
    tw[0] = tw[-1] = 0.5
    w = tw[:, None, None] * tw[None, :, None] * tw[None, None, :]
    return np.where(mask, w, 0.0)


def fsum(a) -> float:
    """Deterministic accurate sum: pairwise along the last axis, then compensated.

    The reduction order depends only on the array shape, never on threads.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim <= 1:
        return math.fsum(a.ravel())
    return math.fsum(np.sum(a.reshape(-1, a.shape[-1]), axis=1))


def integrate(values: np.ndarray, grid: Grid, g: MetricField | None = None, region="all") -> float:
    """Quadrature of interior node values against ``sqrt(det g) dx``."""
    w = region_weights(grid, region)
    if g is not None:
        w = w * crop(g.sqrt_det(), g.ghost, 0)
    return fsum(values * w) * grid.h ** 3


def lp_norm(f, p: float, g: MetricField | None = None, region="all") -> float:
    """``(sum |f|^p sqrt(det g) h^3)^(1/p)`` over the masked interior nodes."""
    if p < 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    if isinstance(f, ScalarField):
        grid, vals = f.grid, f.interior
    else:
        grid, vals = g.grid, np.asarray(f)
    if g is not None and (g.det() <= 0).any():
        raise ValueError("degenerate metric node")
    s = integrate(np.abs(vals) ** p, grid, g, region)
    return s ** (1.0 / p)


def sample_at(values: np.ndarray, grid: Grid, ghost: int, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of node data at physical ``points`` of shape ``(3, m)``.

    ``values`` may carry leading component axes.
    """
    points = np.asarray(points, dtype=float)
    idx = (points + grid.extent) / grid.h + ghost
    top = grid.nodes_per_axis - 1 + 2 * ghost
    if (idx < 0).any() or (idx > top).any():
        raise ValueError("sample points outside the grid")
    lead = values.shape[:-3]
    flat = values.reshape((-1,) + values.shape[-3:])
    out = np.stack([
        ndimage.map_coordinates(c, idx, order=1, mode="nearest", prefilter=False) for c in flat
    ])
    return out.reshape(lead + (points.shape[1],))


def extrapolate_ghosts(interior: np.ndarray, grid: Grid, ghost: int | None = None) -> ScalarField:
    """Fill ghost layers assuming the falloff ``f = c + a/r``.

    Each axis is extended in turn from the two outermost known nodes on the same
    grid line, so corner ghosts are extrapolated from edge ghosts.
    """
    g = grid.ghost if ghost is None else ghost
    a = np.asarray(interior, dtype=float)
    if a.shape != grid.interior_shape:
        raise ValueError("expected interior-shaped values")
    ax1 = grid.axis(0)
    axg = grid.axis(g)
    for ax in range(3):
        # coordinates of the current array along each axis
        shp = [len(axg) if k < ax else len(ax1) for k in range(3)]
        cs = [axg if k < ax else ax1 for k in range(3)]
        new_shape = list(shp)
        new_shape[ax] += 2 * g
        out = np.empty(new_shape)
        sl = [slice(None)] * 3
        sl[ax] = slice(g, g + shp[ax])
        out[tuple(sl)] = a
        mesh = np.meshgrid(*cs, indexing="ij")
        r2_other = sum(mesh[k] ** 2 for k in range(3) if k != ax)
        n = shp[ax]
        for side in (-1, 1):
            b, b1 = (n - 1, n - 2) if side == 1 else (0, 1)
            fb = np.take(a, b, axis=ax)
            fb1 = np.take(a, b1, axis=ax)
            ro = np.take(r2_other, b, axis=ax)
            xb, xb1 = cs[ax][b], cs[ax][b1]
            rb = np.sqrt(ro + xb ** 2)
            rb1 = np.sqrt(ro + xb1 ** 2)
            coef = (fb - fb1) / (1.0 / rb - 1.0 / rb1)
            const = fb - coef / rb
            for k in range(1, g + 1):
                xg = xb + side * k * grid.h
                rg = np.sqrt(ro + xg ** 2)
                pos = g + b + side * k
                sl = [slice(None)] * 3
                sl[ax] = pos
                out[tuple(sl)] = const + coef / rg
        a = out
    return ScalarField(grid, a, g)



_SPHERE_RULES: dict = {}


def sphere_rule(degree: int = 29):
    """Lebedev nodes on the unit sphere and weights normalized to sum 1."""
    if degree not in _SPHERE_RULES:
        from scipy.integrate import lebedev_rule

        x, w = lebedev_rule(degree)
        _SPHERE_RULES[degree] = (x, w / fsum(w))
    return _SPHERE_RULES[degree]


def sphere_average(values: np.ndarray, grid: Grid, ghost: int, radius: float, degree: int = 29) -> np.ndarray:
    """Average over ``|x| = radius`` of trilinearly sampled node data."""
    x, w = sphere_rule(degree)
    vals = sample_at(values, grid, ghost, radius * x)
    return np.sum(vals * w, axis=-1)
