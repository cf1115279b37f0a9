import numpy as np
import pytest
from hypothesis import given, strategies as st

from kunmix.scene import (
    SceneCube,
    SceneFormatError,
    abundance_to_gray,
    check_abundances,
    flatten_index,
    load_abundances,
    load_cube,
    load_endmembers,
    save_abundances,
    save_cube,
    save_endmembers,
    unflatten_index,
)


@pytest.mark.parametrize("row,col,n", [(0, 0, 0), (1, 0, 4), (2, 3, 11)])
def test_flatten_examples(row, col, n):
    assert flatten_index(row, col, 4, 3) == n


@pytest.mark.parametrize("row,col", [(3, 0), (0, 4), (-1, 0)])
def test_flatten_rejects_out_of_range(row, col):
    with pytest.raises(IndexError):
        flatten_index(row, col, 4, 3)


@given(st.integers(1, 40), st.integers(1, 40), st.data())
def test_flatten_unflatten_inverse(w, h, data):
    row = data.draw(st.integers(0, h - 1))
    col = data.draw(st.integers(0, w - 1))
    n = flatten_index(row, col, w, h)
    assert 0 <= n < w * h
    assert unflatten_index(n, w, h) == (row, col)


def test_cube_validation():
    with pytest.raises(SceneFormatError):
        SceneCube(np.zeros((3, 5)), w=2, h=2)
    with pytest.raises(SceneFormatError):
        SceneCube(np.full((3, 4), np.nan), w=2, h=2)
    cube = SceneCube(np.arange(12.0).reshape(3, 4), w=2, h=2)
    assert cube.bands == 3 and cube.n_pixels == 4
    assert not cube.data.flags.writeable


def test_image_view_follows_flatten_order():
    data = np.arange(18.0).reshape(3, 6)
    cube = SceneCube(data, w=3, h=2)
    img = cube.as_image()
    assert img.shape == (2, 3, 3)
    n = flatten_index(1, 2, 3, 2)
    assert np.array_equal(img[1, 2], data[:, n])
    assert np.array_equal(SceneCube.from_image(img).data, data)


def test_cube_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    cube = SceneCube(rng.random((3, 4)), w=2, h=2)
    save_cube(cube, tmp_path / "c.hsc")
    back = load_cube(tmp_path / "c.hsc")
    assert (back.w, back.h) == (2, 2)
    assert back.data.tobytes() == cube.data.tobytes()


def test_cube_payload_is_band_major(tmp_path):
    data = np.arange(8.0).reshape(2, 4)
    save_cube(SceneCube(data, w=2, h=2), tmp_path / "c.hsc")
    raw = (tmp_path / "c.hsc").read_bytes().split(b"\n", 1)[1]
    assert np.array_equal(np.frombuffer(raw, "<f8"), np.arange(8.0))


def test_cube_header_payload_mismatch(tmp_path):
    path = tmp_path / "bad.hsc"
    path.write_bytes(b'{"w": 2, "h": 2, "bands": 1}\n' + np.zeros(3).tobytes())
    with pytest.raises(SceneFormatError, match="payload"):
        load_cube(path)


def test_cube_rejects_nan_payload(tmp_path):
    path = tmp_path / "nan.hsc"
    path.write_bytes(b'{"w": 2, "h": 1, "bands": 1}\n' + np.array([0.0, np.nan]).tobytes())
    with pytest.raises(SceneFormatError):
        load_cube(path)


def test_cube_malformed_header(tmp_path):
    path = tmp_path / "hdr.hsc"
    path.write_bytes(b"not json\n")
    with pytest.raises(SceneFormatError, match="header"):
        load_cube(path)


def test_endmember_csv(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("# library\n0.1,0.2\n0.3,0.4\n\n0.5,0.6\n")
    M = load_endmembers(path)
    assert M.shape == (3, 2)
    save_endmembers(M, tmp_path / "m2.csv", comment="copy")
    assert np.array_equal(load_endmembers(tmp_path / "m2.csv"), M)


def test_ragged_csv_rejected(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(SceneFormatError, match="ragged"):
        load_endmembers(path)


def test_abundance_round_trip_and_pgm(tmp_path):
    A = np.array([[0.5, 1.0, 0.0, 0.25], [0.5, 0.0, 1.0, 0.75]])
    pgms = save_abundances(A, tmp_path / "a.csv", 2, 2, sum_to_one=True, pgm_dir=tmp_path / "maps")
    assert np.array_equal(load_abundances(tmp_path / "a.csv"), A)
    assert [p.name for p in pgms] == ["abundance_00.pgm", "abundance_01.pgm"]
    raw = pgms[0].read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    assert list(raw[-4:]) == [128, 255, 0, 64]


def test_gray_mapping():
    assert abundance_to_gray(0.5) == 128
    assert abundance_to_gray(1.0) == 255
    assert abundance_to_gray(1.2) == 255


def test_negative_abundance_rejected(tmp_path):
    with pytest.raises(SceneFormatError, match="negative"):
        save_abundances(np.array([[-0.1, 1.0]]), tmp_path / "a.csv", 2, 1)


def test_sum_to_one_tolerance():
    A = np.array([[0.5, 0.5], [0.5, 0.5]])
    check_abundances(A + np.array([[1e-7, 0], [0, 0]]), sum_to_one=True)
    with pytest.raises(SceneFormatError):
        check_abundances(A + np.array([[1e-2, 0], [0, 0]]), sum_to_one=True)
    check_abundances(A + 1e-2, sum_to_one=False)
