"""Kernel-based nonlinear hyperspectral unmixing with l1 spatial regularization.

The usual entry point is :func:`unmix`, which runs one of the eight methods
(``fcls``, ``ncls``, ``khype``, ``nkhype`` and their spatially regularized
``s``-prefixed variants) on a :class:`SceneCube`.
"""
from .bregman import BregmanConfig, UnmixResult, run
from .kernels import KernelSpec, gram, parse_kernel
from .metrics import EvalReport, evaluate, rmse
from .pipeline import ALL_METHODS, benchmark, summarize, unmix
from .pixelwise import PixelModel, solve_pixel_kernel, solve_pixel_linear
from .qp import QpProblem, solve_qp, solve_simplex_qp
from .scene import SceneCube, load_abundances, load_cube, load_endmembers, save_cube
from .synth import AbundanceFieldSpec, MixtureSpec, make_scene

__version__ = "0.1.0"

__all__ = [
    "ALL_METHODS",
    "AbundanceFieldSpec",
    "BregmanConfig",
    "EvalReport",
    "KernelSpec",
    "MixtureSpec",
    "PixelModel",
    "QpProblem",
    "SceneCube",
    "UnmixResult",
    "benchmark",
    "evaluate",
    "gram",
    "load_abundances",
    "load_cube",
    "load_endmembers",
    "make_scene",
    "parse_kernel",
    "rmse",
    "run",
    "save_cube",
    "solve_pixel_kernel",
    "solve_pixel_linear",
    "solve_qp",
    "solve_simplex_qp",
    "summarize",
    "unmix",
]
