import csv
import json

import numpy as np
import pytest

import kunmix.cli as cli
from kunmix.cli import main
from kunmix.qp import QpError
from kunmix.scene import load_abundances


@pytest.fixture
def scene_dir(tmp_path):
    out = tmp_path / "scene"
    assert main(["generate", "--w", "8", "--h", "6", "--r", "3", "--bands", "20",
                 "--model", "linear", "--snr", "inf", "--seed", "1",
                 "--output-dir", str(out)]) == 0
    return out


def unmix_args(scene_dir, out, *extra):
    return ["unmix", "--cube", str(scene_dir / "cube.hsc"),
            "--endmembers", str(scene_dir / "endmembers.csv"),
            "--output-dir", str(out), *extra]


def test_generate_outputs(scene_dir):
    names = sorted(p.name for p in scene_dir.iterdir())
    assert names == ["abundances_true.csv", "clean.hsc", "cube.hsc", "endmembers.csv",
                     "manifest.json"]
    manifest = json.loads((scene_dir / "manifest.json").read_text())
    assert manifest["command"] == "generate"
    assert manifest["config"]["snr"] == "inf"
    assert set(manifest["outputs"]) == set(names) - {"manifest.json"}


def test_fcls_then_eval_is_exact(scene_dir, tmp_path, capsys):
    out = tmp_path / "fcls"
    assert main(unmix_args(scene_dir, out, "--method", "fcls")) == 0
    capsys.readouterr()
    assert main(["eval", "--truth", str(scene_dir / "abundances_true.csv"),
                 "--est", str(out / "abundances.csv"),
                 "--cube", str(scene_dir / "cube.hsc"),
                 "--endmembers", str(scene_dir / "endmembers.csv")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["rmse"] < 1e-6
    assert report["reconstruction_rmse"] < 1e-8
    assert report["runtime_ms_per_pixel"] > 0
    assert len(report["per_endmember_rmse"]) == 3


def test_unmix_outputs_and_replay(scene_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(unmix_args(scene_dir, out, "--method", "skhype", "--max-iter", "3")) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["abundances.csv", "betas.csv", "history.csv", "manifest.json", "maps"]
    assert len(list(out.glob("*.json"))) == 1
    assert len(list((out / "maps").glob("abundance_*.pgm"))) == 3
    with open(out / "history.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "rho_A", "rho_U", "r_p", "r_d", "zeta", "objective"]
    assert len(rows) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["iterations"] == 3 and manifest["converged"] is False
    assert manifest["config"]["method"] == "skhype" and manifest["config"]["threads"] == 1
    capsys.readouterr()
    assert main(["replay", str(out / "manifest.json"), "--output-dir", str(tmp_path / "again")]) == 0
    assert "identical" in capsys.readouterr().out
    a = (out / "abundances.csv").read_bytes()
    assert a == (tmp_path / "again" / "abundances.csv").read_bytes()


def test_replay_detects_difference(scene_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(unmix_args(scene_dir, out, "--method", "fcls")) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["outputs"]["abundances.csv"] = "0" * 64
    (out / "manifest.json").write_text(json.dumps(manifest))
    assert main(["replay", str(out / "manifest.json"), "--output-dir", str(tmp_path / "r")]) == 1


def test_dry_run_writes_nothing(scene_dir, tmp_path, capsys):
    out = tmp_path / "dry"
    assert main(unmix_args(scene_dir, out, "--dry-run")) == 0
    assert not out.exists()
    assert json.loads(capsys.readouterr().out)["valid"] is True
    assert main(["bench", "--output-dir", str(out), "--dry-run"]) == 0
    assert json.loads(capsys.readouterr().out)["runs"] == 80
    assert not out.exists()


def test_threads_env_fallback(scene_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("UNMIX_THREADS", "2")
    out = tmp_path / "t"
    assert main(unmix_args(scene_dir, out, "--method", "sfcls", "--max-iter", "2")) == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["threads"] == 2
    ref = tmp_path / "t1"
    assert main(unmix_args(scene_dir, ref, "--method", "sfcls", "--max-iter", "2",
                           "--threads", "1")) == 0
    assert np.array_equal(load_abundances(out / "abundances.csv"),
                          load_abundances(ref / "abundances.csv"))
    monkeypatch.setenv("UNMIX_THREADS", "many")
    assert main(unmix_args(scene_dir, tmp_path / "x")) == 2


def test_exit_codes(scene_dir, tmp_path, monkeypatch, capsys):
    assert main(["unmix", "--cube", "missing.hsc", "--endmembers", "x.csv",
                 "--output-dir", str(tmp_path / "o")]) == 3
    assert main(unmix_args(scene_dir, tmp_path / "o", "--method", "nope")) == 2
    assert main(unmix_args(scene_dir, tmp_path / "o", "--mu", "-1")) == 2
    assert main(unmix_args(scene_dir, tmp_path / "o", "--kernel", "rbf")) == 2
    assert main(unmix_args(scene_dir, tmp_path / "o", "--bands", "500")) == 2
    assert main(["generate", "--r", "1", "--output-dir", str(tmp_path / "g")]) == 2
    assert main([]) == 2

    def boom(*a, **k):
        raise QpError("did not converge")

    monkeypatch.setattr(cli, "unmix", boom)
    assert main(unmix_args(scene_dir, tmp_path / "o")) == 4
    assert "solver failure" in capsys.readouterr().err


def test_qp_trace(scene_dir, tmp_path, capsys):
    assert main(unmix_args(scene_dir, tmp_path / "q", "--method", "khype", "--qp-trace")) == 0
    assert "qp iter" in capsys.readouterr().err


def test_bench_layout(tmp_path, capsys):
    out = tmp_path / "bench"
    assert main(["bench", "--seeds", "2", "--w", "5", "--h", "5", "--r", "3", "--bands", "12",
                 "--max-iter", "2", "--output-dir", str(out)]) == 0
    with open(out / "bench.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["method", "bilinear_rmse_mean", "bilinear_rmse_std", "bilinear_ms_per_pixel",
                       "pnmm_rmse_mean", "pnmm_rmse_std", "pnmm_ms_per_pixel"]
    assert [r[0] for r in rows[1:]] == list(cli.ALL_METHODS)
    with open(out / "bench_runs.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 8 * 2 * 2
    assert (out / "manifest.json").exists()
