import numpy as np
import pytest

from kunmix.kernels import KernelSpec, gram
from kunmix.metrics import evaluate, per_endmember_rmse, reconstruction_rmse, rmse
from kunmix.pixelwise import PixelModel, solve_pixel_kernel


def test_rmse_examples():
    A = np.random.default_rng(0).random((3, 4))
    assert rmse(A, A) == 0.0
    assert rmse([[0.5]], [[0.4]]) == pytest.approx(0.1)
    diff = np.array([[0.1, 0.0], [0.0, 0.3]])
    assert rmse(np.zeros((2, 2)), diff) == pytest.approx(0.15811, abs=5e-6)
    with pytest.raises(ValueError):
        rmse(np.zeros((2, 2)), np.zeros((2, 3)))


def test_rmse_properties():
    rng = np.random.default_rng(1)
    A, B, C = rng.random((3, 4, 6))
    assert rmse(A, B) == rmse(B, A)
    assert rmse(A, C) <= rmse(A, B) + rmse(B, C) + 1e-15
    perm = rng.permutation(6)
    assert rmse(A[:, perm], B[:, perm]) == pytest.approx(rmse(A, B), rel=1e-14)


def test_per_endmember():
    A = np.zeros((2, 2))
    B = np.array([[0.2, 0.2], [0.0, 0.0]])
    assert np.allclose(per_endmember_rmse(A, B), [0.2, 0.0])


def test_reconstruction_rmse_kernel_residual():
    rng = np.random.default_rng(2)
    M = rng.random((7, 3))
    K = gram(KernelSpec(), M)
    model = PixelModel("khype", 0.3)
    Y = rng.random((7, 4))
    sols = [solve_pixel_kernel(Y[:, n], M, K, model) for n in range(4)]
    A = np.stack([s.alpha for s in sols], axis=1)
    B = np.stack([s.beta for s in sols], axis=1)
    expected = np.sqrt(model.mu**2 * np.sum(B**2) / B.size)
    assert reconstruction_rmse(Y, M, A, K, B) == pytest.approx(expected, rel=1e-8)


def test_reconstruction_rmse_zero_cube():
    M = np.array([[1.0, 0.0], [0.0, 2.0]])
    A = np.array([[1.0], [0.0]])
    assert reconstruction_rmse(np.zeros((2, 1)), M, A) == pytest.approx(np.sqrt(0.5))


def test_report():
    A = np.array([[0.5, 0.5], [0.5, 0.5]])
    rep = evaluate(A, A, seconds=0.002)
    d = rep.to_dict()
    assert d["rmse"] == 0.0 and d["runtime_ms_per_pixel"] == pytest.approx(1.0)
    assert "extension" in d["per_endmember_rmse_note"]
    assert d["reconstruction_rmse"] is None
