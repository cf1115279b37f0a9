"""Per-pixel abundance solvers.

Linear baselines (FCLS / NCLS) and the kernel solvers (K-Hype with the
sum-to-one constraint, NK-Hype without) all accept an optional proximal
term ``zeta/2 ||alpha - xi||^2``; ``zeta = 0`` gives the plain methods and
``zeta > 0`` the abundance subproblem of the split-Bregman loop.

Kernel pixels are solved through their dual. For one pixel ``r`` the primal

    min  1/2 (||alpha||^2 + ||psi||^2 + ||e||^2 / mu + zeta ||alpha - xi||^2)
    s.t. e = r - M alpha - psi(rows of M),  alpha >= 0,  1'alpha = 1

has Lagrangian stationarity ``alpha = (M'beta + gamma - lambda 1 + zeta xi) /
(1 + zeta)``, ``psi = sum_l beta_l k(., m_l)``, ``e = mu beta``. Substituting
back gives a QP in ``x = (beta, gamma, lambda)`` with ``gamma >= 0``::

    min 1/2 x'Px - q'x,   P = Q / (1 + zeta),   q = c / (1 + zeta)

    Q = [[(1+zeta)(K + mu I) + M M',  M,  -M 1],
         [M',                         I,  -1  ],
         [-1'M',                     -1',  R  ]]
    c = ((1+zeta) r - zeta M xi,  -zeta xi,  zeta xi'1 - (1+zeta))

The lambda row and column are dropped without the sum-to-one constraint.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .qp import FactorCache, QpError, QpProblem, solve_qp

__all__ = [
    "METHODS",
    "DEFAULT_MU",
    "PixelModel",
    "DualSolution",
    "PixelSolveError",
    "build_proximal_dual",
    "dual_matrix",
    "dual_linear_term",
    "recover_abundance",
    "solve_pixel_kernel",
    "solve_pixel_linear",
    "KernelPixelSolver",
    "LinearPixelSolver",
    "make_pixel_solver",
]

# method -> (uses kernel, sum-to-one)
METHODS = {
    "fcls": (False, True),
    "ncls": (False, False),
    "khype": (True, True),
    "nkhype": (True, False),
}

# Tuned on seeded 50x50, 20 dB scenes; larger values let the linear part
# absorb too much of the bilinear interaction.
DEFAULT_MU = 0.01

FEASIBILITY_TOL = 1e-6
# batched free-set search for linear methods
BATCH_MAX_R = 8
KKT_TOL = 1e-12


class PixelSolveError(QpError):
    def __init__(self, msg, pixel=None):
        super().__init__(msg if pixel is None else f"pixel {pixel}: {msg}")
        self.pixel = pixel


@dataclass(frozen=True)
class PixelModel:
    method: str = "khype"
    mu: float = DEFAULT_MU

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown pixel method {self.method!r}")
        if self.kernel and not self.mu > 0:
            raise ValueError("mu must be positive for kernel methods")

    @property
    def kernel(self):
        return METHODS[self.method][0]

    @property
    def sum_to_one(self):
        return METHODS[self.method][1]


@dataclass
class DualSolution:
    """Dual variables of one kernel pixel and what they imply.

    ``lam`` is None without the sum-to-one constraint. ``fit`` is the model
    reconstruction ``M alpha + K beta`` and ``e = mu beta`` its residual.
    """

    beta: np.ndarray
    gamma: np.ndarray
    lam: float | None
    alpha: np.ndarray
    e: np.ndarray
    fit: np.ndarray
    x: np.ndarray
    iterations: int = 0
    kkt_residual: float = 0.0


def _check_dims(r, M, K=None):
    M = np.asarray(M, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64).ravel()
    if M.ndim != 2:
        raise ValueError("M must be an L x R matrix")
    if r.size != M.shape[0]:
        raise ValueError(f"pixel has {r.size} bands, M has {M.shape[0]}")
    if K is not None and np.shape(K) != (M.shape[0], M.shape[0]):
        raise ValueError("Gram matrix must be L x L")
    return r, M


def _check_prox(zeta, xi, R):
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    if xi is None:
        if zeta > 0:
            raise ValueError("xi is required when zeta > 0")
        return np.zeros(R)
    xi = np.asarray(xi, dtype=np.float64).ravel()
    if xi.size != R:
        raise ValueError(f"xi has {xi.size} entries, expected {R}")
    return xi


def dual_matrix(M, K, mu, zeta=0.0, sum_to_one=True):
    """Quadratic part ``P`` of the negated dual; independent of the pixel."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    M = np.asarray(M, dtype=np.float64)
    L, R = M.shape
    m1 = M.sum(axis=1)
    d = L + R + (1 if sum_to_one else 0)
    Q = np.empty((d, d))
    Q[:L, :L] = (1.0 + zeta) * (np.asarray(K) + mu * np.eye(L)) + M @ M.T
    Q[:L, L:L + R] = M
    Q[L:L + R, :L] = M.T
    Q[L:L + R, L:L + R] = np.eye(R)
    if sum_to_one:
        Q[:L, -1] = Q[-1, :L] = -m1
        Q[L:L + R, -1] = Q[-1, L:L + R] = -1.0
        Q[-1, -1] = R
    Q /= 1.0 + zeta
    return 0.5 * (Q + Q.T)


def dual_linear_term(r, M, zeta=0.0, xi=None, sum_to_one=True):
    r, M = _check_dims(r, M)
    R = M.shape[1]
    xi = _check_prox(zeta, xi, R)
    parts = [(1.0 + zeta) * r - zeta * (M @ xi), -zeta * xi]
    if sum_to_one:
        parts.append([zeta * xi.sum() - (1.0 + zeta)])
    return np.concatenate(parts) / (1.0 + zeta)


def _nonneg_mask(L, R, sum_to_one):
    mask = np.zeros(L + R + (1 if sum_to_one else 0), dtype=bool)
    mask[L:L + R] = True
    return mask


def build_proximal_dual(r, M, K, mu, zeta=0.0, xi=None, sum_to_one=True):
    """Negated-dual QP of the (proximal) kernel pixel problem."""
    r, M = _check_dims(r, M, K)
    L, R = M.shape
    return QpProblem(
        dual_matrix(M, K, mu, zeta, sum_to_one),
        dual_linear_term(r, M, zeta, xi, sum_to_one),
        _nonneg_mask(L, R, sum_to_one),
    )


def recover_abundance(beta, gamma, lam, M, zeta=0.0, xi=None):
    """Abundances from optimal duals, clamped after a feasibility check."""
    M = np.asarray(M, dtype=np.float64)
    R = M.shape[1]
    xi = _check_prox(zeta, xi, R)
    s = M.T @ np.asarray(beta) + np.asarray(gamma)
    if lam is not None:
        s = s - lam
    alpha = (s + zeta * xi) / (1.0 + zeta)
    if alpha.min() < -FEASIBILITY_TOL:
        raise PixelSolveError(f"recovered abundance {alpha.min():.3g} is infeasible")
    return np.maximum(alpha, 0.0)


def _unpack(x, L, R, sum_to_one):
    beta, gamma = x[:L], x[L:L + R]
    lam = float(x[-1]) if sum_to_one else None
    return beta, gamma, lam


class KernelPixelSolver:
    """Solves many pixels that share ``M``, ``K``, ``mu`` and ``zeta``.

    The dual Hessian and its factorizations are built once and reused.
    """

    def __init__(self, M, K, model, zeta=0.0, qp_opts=None):
        if not model.kernel:
            raise ValueError(f"{model.method} is not a kernel method")
        self.M = np.asarray(M, dtype=np.float64)
        self.K = np.asarray(K, dtype=np.float64)
        self.model = model
        self.zeta = float(zeta)
        L, R = self.M.shape
        self.P = dual_matrix(self.M, self.K, model.mu, self.zeta, model.sum_to_one)
        self.mask = _nonneg_mask(L, R, model.sum_to_one)
        self.cache = FactorCache()
        self.qp_opts = dict(qp_opts or {})

    def solve(self, r, xi=None, warm_start=None):
        M, model, zeta = self.M, self.model, self.zeta
        L, R = M.shape
        r, _ = _check_dims(r, M)
        xi = _check_prox(zeta, xi, R)
        q = dual_linear_term(r, M, zeta, xi, model.sum_to_one)
        problem = QpProblem.trusted(self.P, q, self.mask)
        sol = solve_qp(problem, warm_start=warm_start, cache=self.cache, **self.qp_opts)
        beta, gamma, lam = _unpack(sol.x, L, R, model.sum_to_one)
        alpha = recover_abundance(beta, gamma, lam, M, zeta, xi)
        fit = M @ alpha + self.K @ beta
        return DualSolution(beta, gamma, lam, alpha, model.mu * beta, fit, sol.x,
                            sol.iterations, sol.kkt_residual)


class LinearPixelSolver:
    """FCLS / NCLS with optional proximal term, sharing ``M'M + zeta I``.

    ``solve_batch`` settles most pixels of a block with vectorized linear
    algebra; the remainder go through the active-set solver one by one.
    """

    def __init__(self, M, model, zeta=0.0, qp_opts=None):
        if model.kernel:
            raise ValueError(f"{model.method} is not a linear method")
        self.M = np.asarray(M, dtype=np.float64)
        self.model = model
        self.zeta = float(zeta)
        if self.zeta < 0:
            raise ValueError("zeta must be nonnegative")
        R = self.M.shape[1]
        P = self.M.T @ self.M + self.zeta * np.eye(R)
        self.P = 0.5 * (P + P.T)
        self.mask = np.ones(R, dtype=bool)
        self.eq = (np.ones(R), 1.0) if model.sum_to_one else None
        self.cache = FactorCache()
        self.qp_opts = dict(qp_opts or {})

    def _linear_term(self, r, xi):
        return self.M.T @ r + self.zeta * xi

    def solve(self, r, xi=None, warm_start=None):
        r, M = _check_dims(r, self.M)
        R = M.shape[1]
        if self.model.sum_to_one and R == 1:
            return np.ones(1), None
        xi = _check_prox(self.zeta, xi, R)
        problem = QpProblem.trusted(self.P, self._linear_term(r, xi), self.mask, self.eq)
        sol = solve_qp(problem, warm_start=warm_start, cache=self.cache, **self.qp_opts)
        return np.maximum(sol.x, 0.0), sol

    def solve_batch(self, Y, Xi=None):
        """Exact solutions for many pixels at once by checking candidate free sets.

        Every subset of endmembers is tried as the free set, largest first;
        a pixel is settled by the first subset whose equality-constrained
        optimum satisfies the KKT conditions. Returns ``(A, solved)``;
        columns with ``solved`` False (singular blocks, near-degenerate
        pixels, or ``R > BATCH_MAX_R``) are left for :meth:`solve`.
        """
        Y = np.asarray(Y, dtype=np.float64)
        R = self.M.shape[1]
        N = Y.shape[1]
        A = np.zeros((R, N))
        solved = np.zeros(N, dtype=bool)
        if R > BATCH_MAX_R or N == 0:
            return A, solved
        Q = self.M.T @ Y
        if Xi is not None and self.zeta > 0:
            Q = Q + self.zeta * np.asarray(Xi, dtype=np.float64)
        tol = KKT_TOL * (1.0 + np.abs(Q).max(axis=0))
        eq = self.model.sum_to_one
        for F in _free_sets(R):
            todo = np.flatnonzero(~solved)
            if todo.size == 0:
                break
            try:
                c = cho_factor(self.P[np.ix_(F, F)], lower=True)
            except LinAlgError:
                continue
            Qt = Q[:, todo]
            Z = cho_solve(c, Qt[F])
            if eq:
                y = cho_solve(c, np.ones(len(F)))
                nu = (Z.sum(axis=0) - 1.0) / y.sum()
                Z = Z - y[:, None] * nu[None, :]
            else:
                nu = 0.0
            ok = Z.min(axis=0) >= -tol[todo]
            if len(F) < R:
                mult = self.P[:, F] @ Z - Qt + nu
                mult = np.delete(mult, F, axis=0)
                ok &= mult.min(axis=0) >= -tol[todo]
            hit = todo[ok]
            A[np.ix_(F, hit)] = np.maximum(Z[:, ok], 0.0)
            solved[hit] = True
        return A, solved


def _free_sets(R):
    """Index lists of all nonempty subsets of ``range(R)``, largest first."""
    subsets = [list(c) for k in range(R, 0, -1) for c in combinations(range(R), k)]
    return subsets

def make_pixel_solver(M, K, model, zeta=0.0, qp_opts=None):
    if model.kernel:
        return KernelPixelSolver(M, K, model, zeta, qp_opts)
    return LinearPixelSolver(M, model, zeta, qp_opts)


def solve_pixel_kernel(r, M, K, model, zeta=0.0, xi=None, warm_start=None):
    """K-Hype / NK-Hype (``zeta = 0``) or their proximal variant."""
    return KernelPixelSolver(M, K, model, zeta).solve(r, xi, warm_start)


def solve_pixel_linear(r, M, model, zeta=0.0, xi=None):
    """FCLS / NCLS abundances, optionally with the proximal term."""
    alpha, _ = LinearPixelSolver(M, model, zeta).solve(r, xi)
    return alpha
