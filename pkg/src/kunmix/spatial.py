"""Four-neighbour difference operators on a periodic pixel grid.

``apply_H`` maps an ``R x N`` abundance matrix ``A`` to the ``R x 4N``
matrix ``A H`` whose four ``R x N`` blocks hold, for every pixel, its
difference with the left, right, upper and lower neighbour. Boundaries wrap
around, which makes ``I + H H'`` block circulant and lets the V-update be
solved exactly in the 2-D Fourier domain.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "GridStencil",
    "apply_H",
    "apply_Ht",
    "regularizer_value",
    "soft_threshold",
    "update_V",
    "update_U",
    "dense_H",
]

# (axis, shift) of the neighbour: left, right, up, down
_NEIGHBOURS = ((1, 1), (1, -1), (0, 1), (0, -1))


class GridStencil:
    """Geometry of a ``w x h`` periodic grid plus the cached Fourier symbol
    of ``I + H H'``."""

    def __init__(self, w, h):
        if w < 1 or h < 1:
            raise ValueError("grid dimensions must be positive")
        self.w, self.h = int(w), int(h)
        kx = 2.0 * np.pi * np.arange(self.w) / self.w
        ky = 2.0 * np.pi * np.arange(self.h) / self.h
        self.eigenvalues = (
            1.0
            + 4.0 * (1.0 - np.cos(ky))[:, None]
            + 4.0 * (1.0 - np.cos(kx))[None, :]
        )

    @property
    def n_pixels(self):
        return self.w * self.h

    def __repr__(self):
        return f"GridStencil(w={self.w}, h={self.h})"

    def _grid(self, X, blocks=1):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != blocks * self.n_pixels:
            raise ValueError(
                f"expected {blocks * self.n_pixels} columns for a {self.w}x{self.h} grid, got shape {X.shape}"
            )
        return X.reshape(X.shape[0], blocks, self.h, self.w)


def apply_H(A, stencil):
    """Return ``A H`` (``R x 4N``)."""
    G = stencil._grid(A)[:, 0]
    out = np.empty((G.shape[0], 4, stencil.h, stencil.w))
    for d, (axis, shift) in enumerate(_NEIGHBOURS):
        out[:, d] = G - np.roll(G, shift, axis=axis + 1)
    return out.reshape(G.shape[0], 4 * stencil.n_pixels)


def apply_Ht(B, stencil):
    """Return ``B H'`` (``R x N``), the exact adjoint of :func:`apply_H`."""
    G = stencil._grid(B, blocks=4)
    out = np.zeros((G.shape[0], stencil.h, stencil.w))
    for d, (axis, shift) in enumerate(_NEIGHBOURS):
        out += G[:, d] - np.roll(G[:, d], -shift, axis=axis + 1)
    return out.reshape(G.shape[0], stencil.n_pixels)


def regularizer_value(A, stencil):
    """``||A H||_{1,1}``: every neighbour pair counted once per direction."""
    return float(np.abs(apply_H(A, stencil)).sum())


def soft_threshold(x, tau):
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def update_V(A, U, D1, D2, stencil):
    """Closed-form minimizer of ``||A - V - D1||^2 + ||U - V H - D2||^2``.

    ``V = (A - D1 + (U - D2) H') (I + H H')^{-1}``, solved row by row with
    the 2-D FFT.
    """
    rhs = np.asarray(A) - np.asarray(D1) + apply_Ht(np.asarray(U) - np.asarray(D2), stencil)
    G = rhs.reshape(rhs.shape[0], stencil.h, stencil.w)
    V = np.fft.ifft2(np.fft.fft2(G) / stencil.eigenvalues).real
    return V.reshape(rhs.shape)


def update_U(V, D2, eta, zeta, stencil):
    """``Thresh(V H + D2, eta / zeta)`` componentwise."""
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    return soft_threshold(apply_H(V, stencil) + D2, eta / zeta)


def dense_H(stencil):
    """Materialize the ``N x 4N`` matrix ``H`` (small grids, testing only)."""
    N = stencil.n_pixels
    if N > 4096:
        raise ValueError("refusing to materialize H for more than 4096 pixels")
    return apply_H(np.eye(N), stencil)
