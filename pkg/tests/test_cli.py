import json
import subprocess
import sys

import numpy as np
import pytest

from deepkpm.cli import main, sha256
from deepkpm.image import Image, write_image


def run(*argv):
    return main([str(a) for a in argv])


def test_metrics_identical_files(tmp_path, capsys):
    write_image(Image(np.full((6, 8, 3), 0.3)), tmp_path / "a.pfm")
    assert run("metrics", "--a", tmp_path / "a.pfm", "--b", tmp_path / "a.pfm", "--out-dir", tmp_path) == 0
    out = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert float(out["rmse"]) == 0.0 and float(out["ssim"]) == 1.0 and out["psnr"] == "inf"
    assert (tmp_path / "run_metrics.json").exists()


def test_usage_errors(tmp_path, capsys):
    assert run("render-pt", "--scene", "caustic", "--spp", 0, "--out", tmp_path / "x.pfm") == 2
    assert "spp" in capsys.readouterr().err
    assert run("render-pt", "--bogus") == 2
    assert run() == 2
    assert run("render-pm", "--scene", "caustic", "--photons", "p", "--k", 50, "--method", "ours",
               "--out", "x.pfm", "--out-dir", tmp_path) in (1, 2)


def test_runtime_errors_exit_1(tmp_path, capsys):
    assert run("trace-photons", "--scene", tmp_path / "nope.scene", "--n-emit", 10, "--out", "p.bin",
               "--out-dir", tmp_path) == 1
    (tmp_path / "bad.scene").write_text("camera { position 0 0 0 }\n")
    assert run("trace-photons", "--scene", tmp_path / "bad.scene", "--n-emit", 10, "--out", "p.bin",
               "--out-dir", tmp_path) == 1
    assert "error [" in capsys.readouterr().err
    (tmp_path / "a.pfm").write_bytes(b"garbage")
    assert run("metrics", "--a", tmp_path / "a.pfm", "--b", tmp_path / "a.pfm", "--out-dir", tmp_path) == 1


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "deepkpm", "--help"], capture_output=True, text=True)
    assert p.returncode == 0 and "eval-grid" in p.stdout


def pipeline(d, threads):
    common = ["--out-dir", d, "--threads", threads, "--seed", 7]
    assert run("trace-photons", "--scene", "caustic_heldout", "--n-emit", 4000, "--out", "ph.bin", *common) == 0
    assert run("render-pt", "--scene", "caustic_heldout", "--spp", 2, "--mode", "no_ls", "--out", "pt.pfm",
               *common) == 0
    assert run("train", "--scenes", "caustic", "--k", 50, "--steps", 30, "--photons", 2000, 4000, "--points", 40,
               "--maps", 2, "--maps-per-point", 1, "--ref-factor", 10, "--out-ckpt", "k50.dpmk",
               "--loss-curve", "curve.csv", *common) == 0
    assert run("render-pm", "--scene", "caustic_heldout", "--photons", d / "ph.bin", "--k", 50, "--method", "ours",
               "--ckpt", d / "k50.dpmk", "--out", "ours.pfm", *common) == 0
    assert run("render-pm", "--scene", "caustic_heldout", "--photons", d / "ph.bin", "--k", 50,
               "--method", "classic", "--out", "pm.pfm", *common) == 0
    assert run("composite", "--pm", d / "ours.pfm", "--pt", d / "pt.pfm", "--out", "final.pfm", *common) == 0
    assert run("eval-grid", "--scene", "caustic_heldout", "--ks", "50,500", "--ms", "2000,4000",
               "--ckpt50", d / "k50.dpmk", "--ref", d / "pm.pfm", "--out-table", "table.csv", *common) == 0
    return ["ph.bin", "pt.pfm", "k50.dpmk", "curve.csv", "ours.pfm", "pm.pfm", "final.pfm", "table.csv"]


@pytest.mark.slow
def test_pipeline_deterministic_across_threads(tmp_path, capsys):
    a, b = tmp_path / "t1", tmp_path / "t8"
    files = pipeline(a, 1)
    pipeline(b, 8)
    for f in files:
        assert sha256(a / f) == sha256(b / f), f
    table = (a / "table.csv").read_text().splitlines()
    assert table[0] == "K,M,method,rmse,psnr,ssim" and len(table) == 9
    assert sum("absent" in ln for ln in table) == 2
    assert np.isfinite(np.loadtxt(a / "curve.csv", delimiter=",", skiprows=1)).all()
    man = json.loads((a / "run_train.json").read_text())
    other = json.loads((b / "run_train.json").read_text())
    assert man["parameters"] == other["parameters"] and man["runtime"]["threads"] == 1
    assert sorted(map(str, man["outputs"].values())) == sorted(map(str, other["outputs"].values()))
    assert "threads" not in man["parameters"]
