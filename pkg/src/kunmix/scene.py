"""Hyperspectral scene containers and file I/O.

Pixels are flattened row-major: pixel ``n`` sits at ``(n // w, n % w)``, so
its horizontal neighbours are ``n - 1`` / ``n + 1`` and its vertical
neighbours ``n - w`` / ``n + w``. All indices are 0-based.

File formats
------------
HSC cube
    One JSON header line ``{"w": .., "h": .., "bands": ..}`` followed by
    ``bands * w * h`` little-endian float64 values, band-major (each band's
    N pixel values are contiguous, pixels in flatten order).
Endmember CSV
    L rows, R comma-separated columns, ``#`` comment lines allowed.
Abundance CSV
    R rows, N columns in flatten order. Optional binary PGM (P5) maps, one
    per endmember, with abundance 1.0 mapped to gray 255.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SceneCube",
    "SceneFormatError",
    "flatten_index",
    "unflatten_index",
    "load_cube",
    "save_cube",
    "load_endmembers",
    "save_endmembers",
    "load_abundances",
    "save_abundances",
    "check_abundances",
    "abundance_to_gray",
]


class SceneFormatError(ValueError):
    """Raised for malformed or inconsistent scene files and arrays."""


def flatten_index(row, col, w, h):
    """Sequential (row-major) index of the pixel at ``(row, col)``."""
    if not (0 <= row < h and 0 <= col < w):
        raise IndexError(f"pixel ({row}, {col}) outside a {h}x{w} grid")
    return row * w + col


def unflatten_index(n, w, h):
    """Inverse of :func:`flatten_index`; returns ``(row, col)``."""
    if not 0 <= n < w * h:
        raise IndexError(f"pixel index {n} outside a grid of {w * h} pixels")
    return divmod(n, w)


@dataclass(frozen=True)
class SceneCube:
    """An observed image as an ``L x N`` reflectance matrix.

    Column ``n`` of ``data`` is the spectrum of pixel ``n``. The array is
    copied and made read-only on construction.
    """

    data: np.ndarray
    w: int
    h: int

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise SceneFormatError("cube data must be a 2-D (bands x pixels) array")
        if self.w < 1 or self.h < 1:
            raise SceneFormatError("grid dimensions must be positive")
        if data.shape[1] != self.w * self.h:
            raise SceneFormatError(
                f"cube has {data.shape[1]} pixels, grid {self.w}x{self.h} needs {self.w * self.h}"
            )
        if data.shape[0] < 1:
            raise SceneFormatError("cube needs at least one band")
        if not np.all(np.isfinite(data)):
            raise SceneFormatError("cube contains non-finite reflectances")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def n_pixels(self):
        return self.data.shape[1]

    def as_image(self):
        """View as an ``(h, w, L)`` array."""
        return self.data.T.reshape(self.h, self.w, self.bands)

    @classmethod
    def from_image(cls, image):
        """Build from an ``(h, w, L)`` array."""
        image = np.asarray(image, dtype=np.float64)
        h, w, L = image.shape
        return cls(image.reshape(h * w, L).T, w=w, h=h)

    def subsample_bands(self, index):
        return SceneCube(self.data[np.asarray(index)], w=self.w, h=self.h)


def save_cube(cube, path):
    header = {"w": int(cube.w), "h": int(cube.h), "bands": int(cube.bands)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(cube.data, dtype="<f8").tobytes())


def load_cube(path):
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line.decode("ascii"))
        w, h, bands = int(header["w"]), int(header["h"]), int(header["bands"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"{path}: malformed HSC header") from exc
    if min(w, h, bands) < 1:
        raise SceneFormatError(f"{path}: non-positive dimension in header")
    expected = bands * w * h * 8
    if len(payload) != expected:
        raise SceneFormatError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype="<f8").reshape(bands, w * h)
    return SceneCube(data.astype(np.float64), w=w, h=h)


def _read_csv_matrix(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise SceneFormatError(f"{path}:{lineno}: {exc}") from exc
            if len(rows[-1]) != len(rows[0]):
                raise SceneFormatError(
                    f"{path}:{lineno}: ragged row ({len(rows[-1])} columns, expected {len(rows[0])})"
                )
    if not rows:
        raise SceneFormatError(f"{path}: no data rows")
    out = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise SceneFormatError(f"{path}: non-finite entries")
    return out


def _write_csv_matrix(matrix, path, comment=None):
    with open(path, "w") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        for row in np.atleast_2d(matrix):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_endmembers(path):
    """Read an ``L x R`` endmember matrix (columns are signatures)."""
    return _read_csv_matrix(path)


def save_endmembers(M, path, comment=None):
    _write_csv_matrix(np.asarray(M, dtype=np.float64), path, comment)


def load_abundances(path):
    return _read_csv_matrix(path)


def check_abundances(A, sum_to_one=False, tol=1e-6):
    """Validate an ``R x N`` abundance matrix, raising SceneFormatError."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise SceneFormatError("abundances must be a 2-D (R x N) array")
    if not np.all(np.isfinite(A)):
        raise SceneFormatError("abundances contain non-finite values")
    if np.any(A < 0):
        raise SceneFormatError(f"negative abundance {A.min():.3g}")
    if sum_to_one:
        dev = np.max(np.abs(A.sum(axis=0) - 1.0))
        if dev > tol:
            raise SceneFormatError(f"column sums deviate from 1 by {dev:.3g} (tol {tol:g})")
    return A


def abundance_to_gray(a):
    """Map abundances to 8-bit gray (round half up of ``a * 255``, clipped)."""
    return np.clip(np.floor(np.asarray(a, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_abundances(A, path, w, h, sum_to_one=False, pgm_dir=None, tol=1e-6):
    """Write abundances as CSV and optionally one PGM map per endmember.

    Returns the list of PGM paths written.
    """
    A = check_abundances(A, sum_to_one=sum_to_one, tol=tol)
    if A.shape[1] != w * h:
        raise SceneFormatError(f"{A.shape[1]} abundance columns do not fit a {w}x{h} grid")
    _write_csv_matrix(A, path)
    written = []
    if pgm_dir is not None:
        pgm_dir = Path(pgm_dir)
        pgm_dir.mkdir(parents=True, exist_ok=True)
        for i, row in enumerate(A):
            target = pgm_dir / f"abundance_{i:02d}.pgm"
            with open(target, "wb") as fh:
                fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
                fh.write(abundance_to_gray(row).tobytes())
            written.append(target)
    return written
