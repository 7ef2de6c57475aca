"""Symmetric 19-point stencil for ``-div(a grad w)`` on a node block.

The stiffness is the gradient of the discrete energy

    E(w) = 1/2 sum_edges  h w_e a_e (dw)^2
         + sum_plaquettes h w_p a_p (D_i w)(D_j w) / 4 ,

where edge coefficients average ``a^{ii}`` over the two endpoints, plaquette
coefficients average ``a^{ij}`` over the four corners, and ``D_i w`` sums the two
edge differences of a plaquette. Being a Hessian it is symmetric by
construction. Face and edge neighbours give the 19 couplings.

``(K w)_p ~ -h^3 w_p div(a grad w)(x_p)`` at interior nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_AXES = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


def _sl(lo_hi: list[tuple[int, int]]):
    return tuple(slice(lo, None if hi == 0 else -hi) for lo, hi in lo_hi)


def _shift(i: int, lo: int, hi: int):
    s = [(0, 0)] * 3
    s[i] = (lo, hi)
    return s


def _combine(a, b):
    return [(x[0] + y[0], x[1] + y[1]) for x, y in zip(a, b)]


@dataclass
class Stencil:
    """Diagonal plus offset-keyed coefficient arrays of a block operator."""

    diag: np.ndarray
    offdiag: dict

    def apply(self, w: np.ndarray) -> np.ndarray:
        wp = np.pad(w, 1)
        n = w.shape
        y = self.diag * w
        for (dx, dy, dz), c in self.offdiag.items():
            y += c * wp[1 + dx:1 + dx + n[0], 1 + dy:1 + dy + n[1], 1 + dz:1 + dz + n[2]]
        return y

    def to_sparse(self):
        """CSR matrix of the operator (small blocks only; used by tests)."""
        from scipy import sparse

        n = self.diag.shape
        size = self.diag.size
        idx = np.arange(size).reshape(n)
        rows, cols, vals = [idx.ravel()], [idx.ravel()], [self.diag.ravel()]
        for (dx, dy, dz), c in self.offdiag.items():
            src = _sl([(max(0, -dx), max(0, dx)), (max(0, -dy), max(0, dy)), (max(0, -dz), max(0, dz))])
            dst = _sl([(max(0, dx), max(0, -dx)), (max(0, dy), max(0, -dy)), (max(0, dz), max(0, -dz))])
            rows.append(idx[src].ravel())
            cols.append(idx[dst].ravel())
            vals.append(c[src].ravel())
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
        )


def divergence_stencil(a: np.ndarray, h: float, weights=None) -> Stencil:
    """Stiffness stencil for coefficients ``a`` of shape ``(3, 3, n0, n1, n2)``.

    ``weights`` is an optional triple of 1-D per-axis trapezoid weights; ``None``
    means unit weights (a block embedded in a larger domain).
    """
    shape = a.shape[2:]
    if weights is None:
        weights = [np.ones(m) for m in shape]
    wb = [
        weights[0][:, None, None],
        weights[1][None, :, None],
        weights[2][None, None, :],
    ]
    diag = np.zeros(shape)
    off = {}

    def add(offset, region, value):
        arr = off.setdefault(offset, np.zeros(shape))
        arr[_sl(region)] += value

    for i in range(3):
        lo = _shift(i, 0, 1)
        hi = _shift(i, 1, 0)
        a_e = 0.5 * (a[i, i][_sl(lo)] + a[i, i][_sl(hi)])
        w_e = np.ones(1)
        for j in range(3):
            if j != i:
                w_e = w_e * wb[j]
        k_e = h * w_e * a_e
        diag[_sl(lo)] += k_e
        diag[_sl(hi)] += k_e
        e = _AXES[i]
        add(e, lo, -k_e)
        add(tuple(-x for x in e), hi, -k_e)

    for i in range(3):
        for j in range(i + 1, 3):
            k = 3 - i - j
            c00 = _combine(_shift(i, 0, 1), _shift(j, 0, 1))
            c10 = _combine(_shift(i, 1, 0), _shift(j, 0, 1))
            c01 = _combine(_shift(i, 0, 1), _shift(j, 1, 0))
            c11 = _combine(_shift(i, 1, 0), _shift(j, 1, 0))
            aij = a[i, j]
            a_p = 0.25 * (aij[_sl(c00)] + aij[_sl(c10)] + aij[_sl(c01)] + aij[_sl(c11)])
            q = 0.5 * h * wb[k] * a_p
            diag[_sl(c00)] += q
            diag[_sl(c11)] += q
            diag[_sl(c10)] -= q
            diag[_sl(c01)] -= q
            ei, ej = np.array(_AXES[i]), np.array(_AXES[j])
            add(tuple(ei + ej), c00, -q)
            add(tuple(-ei - ej), c11, -q)
            add(tuple(-ei + ej), c10, q)
            add(tuple(ei - ej), c01, q)
    return Stencil(diag, off)


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w
