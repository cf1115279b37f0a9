"""One-call unmixing and the method x model benchmark sweep."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bregman import DEFAULT_ETA, BregmanConfig, UnmixResult, run, solve_pixels
from .kernels import KernelSpec, gram
from .metrics import rmse
from .pixelwise import DEFAULT_MU, METHODS, PixelModel
from .synth import AbundanceFieldSpec, MixtureSpec, make_scene

__all__ = [
    "ALL_METHODS",
    "DEFAULT_MU",
    "DEFAULT_ETA",
    "split_method",
    "summarize",
    "unmix",
    "BenchRow",
    "benchmark",
]

# Spatially regularized variants carry an "s" prefix.
ALL_METHODS = ("fcls", "ncls", "sfcls", "sncls", "khype", "nkhype", "skhype", "snkhype")


def split_method(name):
    """``"skhype"`` -> ``("khype", True)``; ``"khype"`` -> ``("khype", False)``."""
    if name in METHODS:
        return name, False
    if name.startswith("s") and name[1:] in METHODS:
        return name[1:], True
    raise ValueError(f"unknown method {name!r}; choose from {', '.join(ALL_METHODS)}")


def unmix(cube, M, method="skhype", mu=DEFAULT_MU, eta=None, zeta0=1.0, kernel=None,
          max_outer=10, tol=1e-5, adapt_zeta=True, threads=1, skip_bad_pixels=False):
    """Estimate abundances of ``cube`` given endmembers ``M``.

    Returns an :class:`~kunmix.bregman.UnmixResult`; for methods without
    spatial regularization its history is empty and ``converged`` is True.
    """
    base, spatial = split_method(method)
    model = PixelModel(base, mu)
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != cube.bands:
        raise ValueError(f"endmembers have {M.shape[0]} bands, cube has {cube.bands}")
    K = gram(kernel or KernelSpec(), M) if model.kernel else None
    if spatial:
        config = BregmanConfig(
            model=model, eta=eta, zeta0=zeta0,
            max_outer=max_outer, tol=tol, adapt_zeta=adapt_zeta, threads=threads,
            skip_bad_pixels=skip_bad_pixels,
        )
        return run(cube, M, K, config)
    t0 = time.perf_counter()
    A, betas, _, bad = solve_pixels(cube.data, M, K, model, threads=threads,
                                    skip_bad_pixels=skip_bad_pixels)
    violation = max(0.0, -float(A.min()))
    if model.sum_to_one:
        violation = max(violation, float(np.max(np.abs(A.sum(axis=0) - 1.0))))
    return UnmixResult(A=A, history=[], converged=True, iterations=0, betas=betas,
                       bad_pixels=bad, max_violation=violation,
                       seconds=time.perf_counter() - t0)


@dataclass
class BenchRow:
    method: str
    model: str
    seed: int
    rmse: float
    ms_per_pixel: float
    iterations: int


def benchmark(methods=ALL_METHODS, models=("bilinear", "pnmm"), seeds=range(5), w=50, h=50,
              R=5, bands=50, snr_db=20.0, pattern="patches", library=None, unmix_opts=None,
              progress=None, patch_size=None):
    """Run every ``method x model x seed`` combination on generated scenes.

    Scenes for a given ``(model, seed)`` are shared by all methods.
    ``patch_size`` defaults to ``min(10, w, h)``.
    """
    patch_size = patch_size or min(10, w, h)
    rows = []
    unmix_opts = dict(unmix_opts or {})
    for model in models:
        for seed in seeds:
            field = AbundanceFieldSpec(pattern=pattern, w=w, h=h, R=R, patch_size=patch_size,
                                       seed=seed)
            cube, _, A_true, M = make_scene(field, MixtureSpec(model=model, snr_db=snr_db, seed=seed),
                                            library=library, bands=bands)
            for method in methods:
                res = unmix(cube, M, method, **unmix_opts)
                row = BenchRow(method, model, seed, rmse(A_true, res.A),
                               1e3 * res.seconds / cube.n_pixels, res.iterations)
                rows.append(row)
                if progress:
                    progress(row)
    return rows


def summarize(rows, methods=None, models=None):
    """Mean and std of RMSE and mean ms/pixel per ``(method, model)``."""
    methods = methods or list(dict.fromkeys(r.method for r in rows))
    models = models or list(dict.fromkeys(r.model for r in rows))
    table = {}
    for m in methods:
        for mod in models:
            sel = [r for r in rows if r.method == m and r.model == mod]
            if sel:
                e = np.array([r.rmse for r in sel])
                table[m, mod] = (float(e.mean()), float(e.std()),
                                 float(np.mean([r.ms_per_pixel for r in sel])))
    return table
