"""Dense primal active-set solver for small convex QPs.

Solves::

    minimize    1/2 x'Px - q'x
    subject to  x_i >= 0         for i in ``nonneg``
                a'x = b          (optional, at most one equality)

Each iteration fixes the working set ``W`` (bounds held at zero) and solves
the equality-constrained subproblem on the free variables with a Cholesky
factorization; the single equality is eliminated through a rank-one Schur
complement. Factorizations are keyed on the free set so callers that solve
many problems sharing ``P`` (one per pixel) can pass a ``FactorCache``.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

__all__ = [
    "QpProblem",
    "QpSolution",
    "QpError",
    "QpConvergenceError",
    "FactorCache",
    "solve_qp",
    "solve_simplex_qp",
    "kkt_residual",
]


class QpError(RuntimeError):
    pass


class QpConvergenceError(QpError):
    def __init__(self, msg, residual=np.nan, iterations=0):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    nonneg: np.ndarray
    eq: tuple | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        q = np.asarray(self.q, dtype=np.float64).ravel()
        d = q.size
        if P.shape != (d, d):
            raise ValueError(f"P has shape {P.shape}, expected {(d, d)}")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(q))):
            raise QpError("non-finite entries in P or q")
        scale = max(np.max(np.abs(P)), 1e-300) if d else 1.0
        if d and np.max(np.abs(P - P.T)) > 1e-12 * scale:
            raise ValueError("P is not symmetric")
        mask = np.zeros(d, dtype=bool)
        nonneg = np.asarray(self.nonneg)
        if nonneg.dtype == bool:
            if nonneg.shape != (d,):
                raise ValueError("boolean nonneg mask has the wrong length")
            mask[:] = nonneg
        elif nonneg.size:
            idx = nonneg.astype(int).ravel()
            if idx.min() < 0 or idx.max() >= d:
                raise ValueError("nonneg index out of range")
            mask[idx] = True
        eq = self.eq
        if eq is not None:
            a = np.asarray(eq[0], dtype=np.float64).ravel()
            if a.shape != (d,) or not np.any(a):
                raise ValueError("equality row must be a nonzero vector of length d")
            eq = (a, float(eq[1]))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "nonneg", mask)
        object.__setattr__(self, "eq", eq)

    @classmethod
    def trusted(cls, P, q, nonneg, eq=None):
        """Build without validation (float arrays, boolean mask, eq as (a, b))."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "P", P)
        object.__setattr__(obj, "q", q)
        object.__setattr__(obj, "nonneg", nonneg)
        object.__setattr__(obj, "eq", eq)
        return obj

    @property
    def dim(self):
        return self.q.size

    def objective(self, x):
        return 0.5 * x @ self.P @ x - self.q @ x


@dataclass
class QpSolution:
    x: np.ndarray
    iterations: int
    kkt_residual: float
    eq_multiplier: float = 0.0
    ridge: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def active(self):
        return np.flatnonzero(self.x == 0.0)


class FactorCache:
    """Cholesky factors of principal submatrices of one fixed ``P``."""

    def __init__(self, maxsize=256):
        self._store = {}
        self.maxsize = maxsize

    def get(self, key):
        return self._store.get(key)

    def put(self, key, value):
        if len(self._store) >= self.maxsize:
            self._store.pop(next(iter(self._store)))
        self._store[key] = value


def kkt_residual(problem, x, nu=0.0):
    """Largest violation among stationarity, feasibility and complementarity."""
    g = problem.P @ x - problem.q
    if problem.eq is not None:
        g = g + nu * problem.eq[0]
    nonneg = problem.nonneg
    # free entries: |g|; bounded entries: primal, dual and complementarity gaps
    viol = np.where(
        nonneg,
        np.maximum(np.maximum(-x, -g), np.abs(np.maximum(x, 0.0) * g)),
        np.abs(g),
    )
    res = max(float(viol.max(initial=0.0)), 0.0)
    if problem.eq is not None:
        a, b = problem.eq
        res = max(res, abs(a @ x - b))
    return res


def _initial_point(problem, warm_start):
    d = problem.dim
    nonneg = problem.nonneg
    if warm_start is not None:
        x = np.array(warm_start, dtype=np.float64).ravel()
        if x.shape == (d,) and np.all(np.isfinite(x)):
            x[nonneg] = np.maximum(x[nonneg], 0.0)
            if problem.eq is None:
                return x
            a, b = problem.eq
            if abs(a @ x - b) <= 1e-12 * (1.0 + abs(b)):
                return x
    x = np.zeros(d)
    if problem.eq is None:
        return x
    a, b = problem.eq
    cand = np.flatnonzero((~nonneg) & (a != 0))
    if cand.size:
        x[cand[0]] = b / a[cand[0]]
        return x
    # cheapest feasible vertex, lowest index on ties
    best, best_val = -1, np.inf
    for j in np.flatnonzero(nonneg & (a != 0)):
        t = b / a[j]
        if t < 0:
            continue
        val = 0.5 * problem.P[j, j] * t * t - problem.q[j] * t
        if val < best_val:
            best, best_val = j, val
    if best < 0:
        raise QpError("equality constraint has no nonnegative solution")
    x[best] = b / a[best]
    return x


def _factor(P, free, ridge, cache):
    key = (free.tobytes(), ridge)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    sub = P[np.ix_(free, free)]
    if ridge:
        sub = sub + ridge * np.eye(sub.shape[0])
    c = cho_factor(sub, lower=True, check_finite=False)
    # cho_factor only fails on exactly non-positive pivots; reject near-singular ones
    diag = abs(c[0].diagonal())
    if diag.size and diag.min() <= 1e-7 * max(diag.max(), 1e-300):
        raise LinAlgError("near-singular free block")
    if cache is not None:
        cache.put(key, c)
    return c


def _subproblem(P, q, eq, free, ridge, cache):
    """Minimize on the free set with the bounded set held at zero."""
    if not free.any():
        if eq is not None and eq[1] != 0.0:
            raise LinAlgError("equality row vanishes on the free set")
        return np.zeros(0), 0.0
    c = _factor(P, free, ridge, cache)
    z = cho_solve(c, q[free], check_finite=False)
    if eq is None:
        return z, 0.0
    a, b = eq
    af = a[free]
    y = cho_solve(c, af, check_finite=False)
    denom = af @ y
    if abs(denom) <= 1e-14 * max(abs(af).max(), 1e-300) ** 2:
        raise LinAlgError("equality row vanishes on the free set")
    nu = (af @ z - b) / denom
    return z - nu * y, nu


def solve_qp(problem, max_iter=None, tol=1e-10, ridge=None, warm_start=None,
             trace=False, cache=None):
    """Solve a :class:`QpProblem` by the primal active-set method.

    Parameters
    ----------
    problem : QpProblem
    max_iter : int, optional
        Iteration cap, default ``50 + 5 * d``.
    tol : float
        Relative threshold on negative bound multipliers.
    ridge : float, optional
        Diagonal shift. By default none is used unless a free block turns
        out singular, in which case ``1e-10 * trace(P) / d`` is added once
        for the rest of the solve.
    warm_start : array_like, optional
        Starting point; nonnegative entries that are zero start in the
        working set. Ignored if it violates the equality.
    trace : bool
        Record the objective after every iteration. Forced on, with the
        values echoed to stderr, after ``set_stderr_trace(True)``.
    cache : FactorCache, optional
        Shared factorizations; only valid across problems with the same P.
    """
    P, q, nonneg, eq = problem.P, problem.q, problem.nonneg, problem.eq
    d = problem.dim
    if d == 0:
        return QpSolution(np.zeros(0), 0, 0.0)
    trace = trace or _TRACE_STDERR
    if max_iter is None:
        max_iter = 50 + 5 * d
    auto_ridge = ridge is None
    ridge = 0.0 if ridge is None else float(ridge)
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    scale = 1.0 + abs(q).max()

    x = _initial_point(problem, warm_start)
    working = nonneg & (x <= 0.0)
    x[working] = 0.0
    history = []
    nu = 0.0

    for it in range(1, max_iter + 1):
        free = ~working
        try:
            z, nu = _subproblem(P, q, eq, free, ridge, cache)
        except LinAlgError:
            if not auto_ridge or ridge:
                raise QpError("singular subproblem; supply a larger ridge")
            ridge = 1e-10 * max(np.trace(P), 1e-300) / d
            try:
                z, nu = _subproblem(P, q, eq, free, ridge, cache)
            except LinAlgError as exc:
                raise QpError("singular subproblem even after ridge") from exc

        xf = x[free]
        step = z - xf
        bounded = nonneg[free]
        feas_tol = 1e-13 * (1.0 + abs(z).max(initial=0.0))
        blocking = bounded & (z < -feas_tol) & (step < 0)
        if blocking.any():
            idx = np.flatnonzero(blocking)
            ratios = xf[idx] / -step[idx]
            k = idx[np.argmin(ratios)]
            t = max(ratios.min(), 0.0)
            x[free] = xf + t * step
            j = np.flatnonzero(free)[k]
            x[j] = 0.0
            working[j] = True
        else:
            z[bounded] = np.maximum(z[bounded], 0.0)
            x[free] = z
            x[working] = 0.0
            if not working.any():
                if trace:
                    history.append(problem.objective(x))
                break
            g = P @ x - q
            if eq is not None:
                g += nu * eq[0]
            widx = np.flatnonzero(working)
            mult = g[widx]
            k = np.argmin(mult)
            if mult[k] >= -tol * scale:
                if trace:
                    history.append(problem.objective(x))
                break
            working[widx[k]] = False
        if trace:
            history.append(problem.objective(x))
    else:
        res = kkt_residual(problem, x, nu)
        raise QpConvergenceError(
            f"active set did not converge in {max_iter} iterations (KKT residual {res:.3g})",
            residual=res, iterations=max_iter,
        )

    if _TRACE_STDERR:
        for i, val in enumerate(history):
            print(f"qp iter {i}: objective {val:.17g}", file=sys.stderr)
    return QpSolution(x, it, kkt_residual(problem, x, nu), eq_multiplier=nu,
                      ridge=ridge, trace=history)


_TRACE_STDERR = False


def set_stderr_trace(flag):
    """Echo per-iteration objectives of traced solves to stderr."""
    global _TRACE_STDERR
    _TRACE_STDERR = bool(flag)


def solve_simplex_qp(P, q, sum_to_one=True, **opts):
    """Minimize ``1/2 x'Px - q'x`` over ``x >= 0`` (and ``1'x = 1``)."""
    q = np.asarray(q, dtype=np.float64).ravel()
    d = q.size
    if sum_to_one and d == 1:
        return QpSolution(np.ones(1), 0, 0.0)
    eq = (np.ones(d), 1.0) if sum_to_one else None
    problem = QpProblem(P, q, np.ones(d, dtype=bool), eq)
    return solve_qp(problem, **opts)
