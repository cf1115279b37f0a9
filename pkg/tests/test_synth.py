import numpy as np
import pytest

from kunmix.kernels import KernelSpec
from kunmix.pixelwise import PixelModel
from kunmix.bregman import solve_pixels
from kunmix.spatial import GridStencil, regularizer_value
from kunmix.synth import (
    AbundanceFieldSpec,
    MixtureSpec,
    add_noise,
    band_subsample_index,
    bundled_library,
    gen_abundances,
    make_scene,
    mix,
    pick_endmembers,
    realized_snr,
    synthetic_library,
)


@pytest.mark.parametrize("pattern", ["patches", "smooth"])
def test_abundances_on_simplex_and_seeded(pattern):
    spec = AbundanceFieldSpec(pattern=pattern, w=23, h=17, R=4, patch_size=5, seed=3)
    A = gen_abundances(spec)
    assert A.shape == (4, 23 * 17)
    assert A.min() >= 0
    assert np.abs(A.sum(axis=0) - 1).max() < 1e-12
    assert np.array_equal(A, gen_abundances(spec))
    other = gen_abundances(AbundanceFieldSpec(pattern=pattern, w=23, h=17, R=4, patch_size=5, seed=4))
    assert not np.array_equal(A, other)


def test_patches_structure():
    spec = AbundanceFieldSpec(w=20, h=20, R=5, patch_size=10, pure_fraction=0.0, seed=0)
    A = gen_abundances(spec)
    block = A.reshape(5, 20, 20)[:, :10, :10].reshape(5, -1)
    assert np.all(block == block[:, :1])
    top = block[:, 0].max()
    assert 0.6 <= top <= 1.0
    pure = gen_abundances(AbundanceFieldSpec(w=20, h=20, R=5, pure_fraction=1.0))
    assert np.all(pure.max(axis=0) == 1.0)


def test_field_validation():
    with pytest.raises(ValueError):
        AbundanceFieldSpec(w=5, h=5, patch_size=6)
    with pytest.raises(ValueError):
        AbundanceFieldSpec(R=1)
    with pytest.raises(ValueError):
        AbundanceFieldSpec(pattern="stripes")


def test_correlation_length_controls_roughness():
    stc = GridStencil(32, 32)
    ratios = []
    for seed in range(5):
        rough = gen_abundances(AbundanceFieldSpec("smooth", 32, 32, R=5, corr_length=0.0, seed=seed))
        smooth = gen_abundances(AbundanceFieldSpec("smooth", 32, 32, R=5, corr_length=10.0, seed=seed))
        ratios.append(regularizer_value(rough, stc) / regularizer_value(smooth, stc))
    assert min(ratios) > 2


def test_mix_examples():
    rng = np.random.default_rng(0)
    M = rng.random((6, 3))
    A = np.array([[1.0], [0.0], [0.0]])
    assert np.array_equal(mix(A, M, MixtureSpec("bilinear")), M[:, :1])
    M4 = np.full((5, 2), 0.25)
    y = mix(np.array([[1.0], [0.0]]), M4, MixtureSpec("pnmm"))
    assert np.allclose(y, 0.25**0.7) and y[0, 0] == pytest.approx(0.37893, abs=5e-6)
    A = rng.dirichlet(np.ones(3), 10).T
    lin, bil = mix(A, M, MixtureSpec("linear")), mix(A, M, MixtureSpec("bilinear"))
    assert np.array_equal(lin, M @ A)
    assert np.all(bil >= lin)
    expected = M @ A[:, 0] + sum(A[i, 0] * A[j, 0] * M[:, i] * M[:, j]
                                 for i in range(3) for j in range(i + 1, 3))
    assert np.allclose(bil[:, 0], expected, atol=1e-15)


def test_pnmm_rejects_negative_mixture():
    with pytest.raises(ValueError):
        mix(np.array([[1.0]]), np.array([[-0.5]]), MixtureSpec("pnmm"))


def test_noise_calibration():
    # unit signal power at 20 dB -> sigma^2 = 0.01
    Y = np.ones((100, 100))
    noisy = add_noise(Y, 20.0, seed=1)
    assert np.var(noisy - Y) == pytest.approx(0.01, rel=0.05)
    assert np.array_equal(add_noise(Y, np.inf, seed=1), Y)
    with pytest.raises(ValueError):
        add_noise(np.zeros((2, 2)), 20.0, seed=0)
    big = np.random.default_rng(2).random((50, 64 * 64))
    assert abs(realized_snr(big, add_noise(big, 20.0, seed=3)) - 20.0) < 0.2


def test_noise_is_zero_mean():
    Y = np.linspace(0.1, 1.0, 12).reshape(3, 4)
    draws = np.stack([add_noise(Y, 20.0, seed=s) for s in range(100)])
    sigma = np.sqrt(np.mean(Y**2) / 100.0)
    assert np.all(np.abs(draws.mean(axis=0) - Y) < 3 * sigma / np.sqrt(100) * 1.5)


def test_library_and_selection():
    lib = bundled_library()
    assert lib.shape == (224, 16)
    assert np.allclose(lib, synthetic_library(), atol=1e-15)
    M, cols = pick_endmembers(lib, 5, seed=7)
    assert len(set(cols)) == 5 and np.array_equal(M, lib[:, cols])
    M2, cols2 = pick_endmembers(lib, 5, seed=7)
    assert np.array_equal(cols, cols2)
    _, full = pick_endmembers(lib, 16, seed=1)
    assert sorted(full) == list(range(16))
    with pytest.raises(ValueError):
        pick_endmembers(lib, 17, seed=0)


def test_band_subsampling():
    idx = band_subsample_index(224, 50)
    assert len(idx) == 50 and idx[0] == 0 and idx[-1] == 223
    assert np.all(np.diff(idx) > 0)
    with pytest.raises(ValueError):
        band_subsample_index(10, 11)


def test_make_scene_linear_fcls_round_trip():
    field = AbundanceFieldSpec(w=12, h=10, R=5, patch_size=4, seed=2)
    cube, clean, A, M = make_scene(field, MixtureSpec("linear", snr_db=np.inf, seed=2), bands=40)
    assert np.array_equal(cube.data, clean.data)
    A_hat, *_ = solve_pixels(cube.data, M, None, PixelModel("fcls"))
    assert np.sqrt(np.mean((A_hat - A) ** 2)) < 1e-6


def test_make_scene_is_deterministic():
    field = AbundanceFieldSpec(w=8, h=8, R=3, patch_size=4, seed=5)
    a = make_scene(field, MixtureSpec(seed=5), bands=20)
    b = make_scene(field, MixtureSpec(seed=5), bands=20)
    assert a[0].data.tobytes() == b[0].data.tobytes()
    assert np.array_equal(a[3], b[3])
