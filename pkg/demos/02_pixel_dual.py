# # One pixel: dual QP against the representer primal
#
# The kernel pixel problem is solved through its dual. Here the dual
# solution is checked against a brute-force solve of the primal written in
# representer form.

import itertools

import numpy as np

from kunmix import KernelSpec, PixelModel, gram, solve_pixel_kernel
from kunmix.qp import QpProblem, solve_qp

rng = np.random.default_rng(1)
L, R = 8, 3
M = rng.uniform(0.1, 0.9, size=(L, R))
a_true = rng.dirichlet(np.ones(R))
r = M @ a_true + 0.4 * M[:, 0] * M[:, 1]
K = gram(KernelSpec(), M)

# %%
model = PixelModel("khype")
sol = solve_pixel_kernel(r, M, K, model)
print("alpha:", np.round(sol.alpha, 4), "sum", round(sol.alpha.sum(), 12))
print("nonlinear residual norm:", round(float(np.linalg.norm(sol.e)), 6))

# %%
# With a coupling weight zeta and a target xi on the simplex the solution
# is pulled toward xi.
xi = np.full(R, 1.0 / R)
pulled = solve_pixel_kernel(r, M, K, model, zeta=5.0, xi=xi)
print("alpha, zeta=5:", np.round(pulled.alpha, 4))

# %%
# The active-set solver on a small QP, checked by enumerating free sets.
B = rng.standard_normal((4, 4))
P, q = B @ B.T + 0.1 * np.eye(4), rng.standard_normal(4)
x = solve_qp(QpProblem(P, q, np.arange(4))).x
best = None
for k in range(5):
    for free in itertools.combinations(range(4), k):
        z = np.zeros(4)
        if free:
            f = list(free)
            z[f] = np.linalg.solve(P[np.ix_(f, f)], q[f])
        if z.min() >= -1e-12:
            val = 0.5 * z @ P @ z - q @ z
            best = (val, z) if best is None or val < best[0] else best
print("active set:", np.round(x, 6))
print("enumerated:", np.round(best[1], 6))
