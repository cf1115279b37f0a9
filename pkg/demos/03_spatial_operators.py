# # Spatial operators
#
# The difference operator H maps an R x N abundance matrix to its four
# periodic neighbour differences (R x 4N). The V-update solves a circulant
# system in the Fourier domain; U is a soft-threshold.

import numpy as np

from kunmix.spatial import (GridStencil, apply_H, apply_Ht, dense_H, regularizer_value,
                            soft_threshold, update_V)

rng = np.random.default_rng(0)
stc = GridStencil(5, 3)
N = stc.w * stc.h
A = rng.random((2, N))

# %%
# Adjointness: <H a, b> equals <a, H^T b>.
B = rng.standard_normal((2, 4 * N))
print("adjoint gap:", abs(np.sum(apply_H(A, stc) * B) - np.sum(A * apply_Ht(B, stc))))
print("dense H shape:", dense_H(stc).shape)
print("l1 regularizer:", regularizer_value(A, stc))

# %%
# The FFT V-update against a dense solve of V (I + H H') = A - D1 + (U - D2) H'.
U, D1, D2 = rng.standard_normal((2, 4 * N)), rng.random((2, N)), rng.standard_normal((2, 4 * N))
G = apply_Ht(apply_H(np.eye(N), stc), stc)
rhs = A - D1 + apply_Ht(U - D2, stc)
V_dense = np.linalg.solve((np.eye(N) + G).T, rhs.T).T
print("FFT vs dense:", np.abs(update_V(A, U, D1, D2, stc) - V_dense).max())

# %%
print("soft threshold:", soft_threshold(np.array([-2.0, -0.1, 0.0, 0.3, 1.5]), 0.25))
