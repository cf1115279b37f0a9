"""Seeded synthetic scenes: abundance fields, mixtures and noise."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from itertools import combinations

import numpy as np

from .scene import SceneCube, load_endmembers

__all__ = [
    "MixtureSpec",
    "AbundanceFieldSpec",
    "gen_abundances",
    "mix",
    "add_noise",
    "realized_snr",
    "pick_endmembers",
    "synthetic_library",
    "bundled_library",
    "band_subsample_index",
    "make_scene",
]

MODELS = ("linear", "bilinear", "pnmm")
PATTERNS = ("patches", "smooth")


@dataclass(frozen=True)
class MixtureSpec:
    model: str = "bilinear"
    pnmm_exponent: float = 0.7
    snr_db: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown mixture model {self.model!r}")
        if not self.pnmm_exponent > 0:
            raise ValueError("pnmm exponent must be positive")
        if np.isnan(self.snr_db) or self.snr_db == -np.inf:
            raise ValueError("snr_db must be a number or +inf")


@dataclass(frozen=True)
class AbundanceFieldSpec:
    """Spatially correlated abundance maps.

    ``patches`` tiles the grid into ``patch_size`` squares, each dominated
    by one random endmember with abundance in [0.6, 1] (exactly 1 for a
    ``pure_fraction`` share of the patches) and the remainder split evenly
    over the others. ``smooth`` exponentiates Gaussian-filtered white noise
    with the given ``corr_length`` (pixels) and normalizes each pixel.
    """

    pattern: str = "patches"
    w: int = 50
    h: int = 50
    R: int = 5
    patch_size: int = 10
    pure_fraction: float = 0.1
    corr_length: float = 5.0
    contrast: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown abundance pattern {self.pattern!r}")
        if self.R < 2:
            raise ValueError("need at least two endmembers")
        if self.w < 1 or self.h < 1:
            raise ValueError("grid dimensions must be positive")
        if self.pattern == "patches" and not 1 <= self.patch_size <= min(self.w, self.h):
            raise ValueError(f"patch size {self.patch_size} does not fit a {self.w}x{self.h} grid")
        if not 0.0 <= self.pure_fraction <= 1.0:
            raise ValueError("pure_fraction must lie in [0, 1]")
        if self.corr_length < 0:
            raise ValueError("corr_length must be nonnegative")


def _patches(spec, rng):
    s, R = spec.patch_size, spec.R
    by, bx = -(-spec.h // s), -(-spec.w // s)
    dominant = rng.integers(0, R, size=(by, bx))
    level = rng.uniform(0.6, 1.0, size=(by, bx))
    level[rng.random((by, bx)) < spec.pure_fraction] = 1.0
    blocks = np.empty((R, by, bx))
    blocks[:] = ((1.0 - level) / (R - 1))[None]
    np.put_along_axis(blocks, dominant[None], level[None], axis=0)
    grid = np.repeat(np.repeat(blocks, s, axis=1), s, axis=2)[:, :spec.h, :spec.w]
    return grid.reshape(R, -1)


def _smooth(spec, rng):
    R, h, w = spec.R, spec.h, spec.w
    field = rng.standard_normal((R, h, w))
    if spec.corr_length > 0:
        fy = np.fft.fftfreq(h)[:, None]
        fx = np.fft.fftfreq(w)[None, :]
        # Fourier transform of a periodic Gaussian with std corr_length
        kernel = np.exp(-2.0 * (np.pi * spec.corr_length) ** 2 * (fx**2 + fy**2))
        field = np.fft.ifft2(np.fft.fft2(field) * kernel).real
    field -= field.mean(axis=(1, 2), keepdims=True)
    std = field.std(axis=(1, 2), keepdims=True)
    field /= np.where(std > 0, std, 1.0)
    A = np.exp(spec.contrast * field).reshape(R, -1)
    return A / A.sum(axis=0)


def gen_abundances(spec):
    """Return an ``R x N`` abundance matrix on the simplex, deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    A = _patches(spec, rng) if spec.pattern == "patches" else _smooth(spec, rng)
    return A / A.sum(axis=0)


def mix(A, M, spec):
    """Noiseless mixture of abundances ``A`` (``R x N``) and endmembers ``M``."""
    A = np.asarray(A, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if M.shape[1] != A.shape[0]:
        raise ValueError(f"M has {M.shape[1]} endmembers, A has {A.shape[0]}")
    Y = M @ A
    if spec.model == "bilinear":
        pairs = list(combinations(range(M.shape[1]), 2))
        if pairs:
            i, j = np.array(pairs).T
            Y = Y + (M[:, i] * M[:, j]) @ (A[i] * A[j])
    elif spec.model == "pnmm":
        if np.any(Y < 0):
            raise ValueError("post-nonlinear mixing needs a nonnegative linear mixture")
        Y = Y**spec.pnmm_exponent
    return Y


def add_noise(Y, snr_db, seed):
    """Add white Gaussian noise at ``snr_db`` relative to the mean squared entry."""
    Y = np.asarray(Y, dtype=np.float64)
    if np.isinf(snr_db) and snr_db > 0:
        return Y.copy()
    power = np.mean(Y**2)
    if power == 0:
        raise ValueError("cannot set an SNR on an all-zero signal")
    sigma = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    return Y + sigma * np.random.default_rng(seed).standard_normal(Y.shape)


def realized_snr(clean, noisy):
    clean = np.asarray(clean)
    return float(10.0 * np.log10(np.mean(clean**2) / np.mean((np.asarray(noisy) - clean) ** 2)))


def synthetic_library(n_spectra=16, bands=224, seed=2014):
    """Smooth random reflectance spectra, one per column.

    Bright baselines (0.6 to 0.9) with a linear tilt and a few Gaussian
    absorption / reflection features, clipped to [0.02, 0.98]. Bright
    endmembers keep the bilinear interaction terms at a realistic strength.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, bands)
    out = np.empty((bands, n_spectra))
    for k in range(n_spectra):
        spec = rng.uniform(0.6, 0.9) + rng.uniform(-0.3, 0.3) * (t - 0.5)
        for _ in range(rng.integers(3, 7)):
            centre = rng.uniform(0.0, 1.0)
            width = rng.uniform(0.03, 0.15)
            spec += rng.uniform(-0.2, 0.2) * np.exp(-0.5 * ((t - centre) / width) ** 2)
        out[:, k] = np.clip(spec, 0.02, 0.98)
    return out


def bundled_library():
    """The 16-spectrum, 224-band library shipped with the package."""
    with resources.as_file(resources.files("kunmix") / "data" / "synthetic_library.csv") as p:
        return load_endmembers(p)


def pick_endmembers(library, R, seed):
    """Choose ``R`` distinct library columns uniformly at random."""
    if isinstance(library, (str, bytes)) or hasattr(library, "__fspath__"):
        library = load_endmembers(library)
    library = np.asarray(library, dtype=np.float64)
    if R > library.shape[1]:
        raise ValueError(f"library has {library.shape[1]} spectra, {R} requested")
    cols = np.random.default_rng(seed).choice(library.shape[1], size=R, replace=False)
    return library[:, cols], cols


def band_subsample_index(L, k):
    """``k`` band indices at a uniform stride over ``0 .. L-1``."""
    if not 1 <= k <= L:
        raise ValueError(f"cannot pick {k} of {L} bands")
    return np.unique(np.round(np.linspace(0, L - 1, k)).astype(int))


def make_scene(field, mixture, library=None, bands=None):
    """Generate a full scene.

    Returns ``(noisy cube, clean cube, true abundances, endmembers)``.
    Endmembers are drawn with ``mixture.seed`` and noise with
    ``mixture.seed + 1``.
    """
    library = bundled_library() if library is None else library
    M, _ = pick_endmembers(library, field.R, mixture.seed)
    if bands is not None:
        M = M[band_subsample_index(M.shape[0], bands)]
    A = gen_abundances(field)
    clean = mix(A, M, mixture)
    noisy = add_noise(clean, mixture.snr_db, mixture.seed + 1)
    return (SceneCube(noisy, field.w, field.h), SceneCube(clean, field.w, field.h), A, M)
