"""Reproducing kernels over endmember band vectors and their Gram matrix.

Kernel inputs are rows of the endmember matrix ``M`` (``L x R``): the vector
of all endmember reflectances at a single band.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["KernelSpec", "eval_kernel", "gram", "parse_kernel", "NonPSDGramError"]

VARIANTS = ("polynomial", "gaussian")


class NonPSDGramError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice.

    ``polynomial`` is ``(1 + (x - 1/2)'(y - 1/2) / R**2) ** 2`` with ``R`` the
    number of endmembers; ``gaussian`` is ``exp(-|x - y|**2 / (2 sigma**2))``.
    """

    variant: str = "polynomial"
    sigma: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("gaussian kernel needs a positive bandwidth")
        elif self.sigma is not None:
            raise ValueError("polynomial kernel takes no bandwidth")


def parse_kernel(text):
    """Parse ``poly`` / ``polynomial`` / ``gaussian:<sigma>``."""
    name, _, arg = text.partition(":")
    if name in ("poly", "polynomial"):
        if arg:
            raise ValueError("polynomial kernel takes no parameter")
        return KernelSpec("polynomial")
    if name == "gaussian":
        return KernelSpec("gaussian", float(arg) if arg else 1.0)
    raise ValueError(f"unknown kernel {text!r}")


def _pairwise(spec, X, Y, R):
    if spec.variant == "polynomial":
        inner = (X - 0.5) @ (Y - 0.5).T / R**2
        return (1.0 + inner) ** 2
    sq = (
        np.sum(X**2, axis=1)[:, None]
        + np.sum(Y**2, axis=1)[None, :]
        - 2.0 * X @ Y.T
    )
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * spec.sigma**2))


def eval_kernel(spec, x, y, R=None):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"kernel arguments differ in length ({x.size} vs {y.size})")
    if R is None:
        R = x.size
    elif R != x.size:
        raise ValueError(f"arguments have length {x.size}, expected R={R}")
    return float(_pairwise(spec, x[None, :], y[None, :], R)[0, 0])


def gram(spec, M, check_psd=True):
    """``L x L`` Gram matrix of the kernel over the rows of ``M``.

    The upper triangle is computed and mirrored so the result is exactly
    symmetric. Raises NonPSDGramError if an eigenvalue falls below
    ``-1e-10 * ||K||``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("endmember matrix must be 2-D (L x R)")
    R = M.shape[1]
    K = _pairwise(spec, M, M, R)
    K = np.triu(K) + np.triu(K, 1).T
    if check_psd:
        lo = np.linalg.eigvalsh(K)[0]
        if lo < -1e-10 * np.linalg.norm(K, 2):
            raise NonPSDGramError(f"Gram matrix has eigenvalue {lo:.3g}")
    return K
