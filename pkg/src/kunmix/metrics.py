"""Abundance and reconstruction error measures."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

__all__ = ["EvalReport", "rmse", "per_endmember_rmse", "reconstruction_rmse", "evaluate"]


def _pair(A_true, A_est):
    A_true = np.asarray(A_true, dtype=np.float64)
    A_est = np.asarray(A_est, dtype=np.float64)
    if A_true.shape != A_est.shape:
        raise ValueError(f"shape mismatch: {A_true.shape} vs {A_est.shape}")
    return A_true, A_est


def rmse(A_true, A_est):
    """``sqrt(1/(N R) sum_n ||alpha_n - alpha*_n||^2)``."""
    A_true, A_est = _pair(A_true, A_est)
    return float(np.sqrt(np.mean((A_true - A_est) ** 2)))


def per_endmember_rmse(A_true, A_est):
    """RMSE restricted to each endmember's row (a diagnostic extension)."""
    A_true, A_est = _pair(A_true, A_est)
    return np.sqrt(np.mean((A_true - A_est) ** 2, axis=1))


def reconstruction_rmse(Y, M, A, K=None, betas=None):
    """RMS of ``Y - (M A + K B)``; ``betas`` omitted for linear methods."""
    Y = np.asarray(Y, dtype=np.float64)
    fit = np.asarray(M) @ np.asarray(A)
    if betas is not None:
        fit = fit + np.asarray(K) @ np.asarray(betas)
    if fit.shape != Y.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {fit.shape}")
    return float(np.sqrt(np.mean((Y - fit) ** 2)))


@dataclass
class EvalReport:
    rmse: float
    per_endmember_rmse: list
    reconstruction_rmse: float | None = None
    runtime_ms_per_pixel: float | None = None

    def to_dict(self):
        out = asdict(self)
        out["per_endmember_rmse_note"] = "extension: RMSE of each endmember's abundance row"
        return out


def evaluate(A_true, A_est, Y=None, M=None, K=None, betas=None, seconds=None):
    rep = EvalReport(rmse(A_true, A_est), per_endmember_rmse(A_true, A_est).tolist())
    if Y is not None and M is not None:
        rep.reconstruction_rmse = reconstruction_rmse(Y, M, A_est, K, betas)
    if seconds is not None:
        rep.runtime_ms_per_pixel = 1e3 * seconds / np.shape(A_est)[1]
    return rep
