import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from salpcc import __version__
from salpcc.ply import load_ply, save_ply
from salpcc.synth import fibonacci_sphere


def run_cli(*args, env=None):
    import os

    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "salpcc.cli", *map(str, args)],
        capture_output=True, text=True, env=full_env,
    )


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    save_ply(d / "sphere.ply", fibonacci_sphere(800))
    return d


@pytest.fixture(scope="module")
def encoded(workdir):
    out = workdir / "sphere.sapc"
    vox = workdir / "vox.ply"
    proc = run_cli("encode", workdir / "sphere.ply", out, "--s-thresh", "0.5",
                   "--save-voxelized", vox)
    assert proc.returncode == 0, proc.stderr
    return out, vox


class TestEncodeDecode:
    def test_encode_report(self, workdir, encoded):
        proc = run_cli("encode", workdir / "sphere.ply",
                       workdir / "again.sapc", "--s-thresh", "0.5")
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        assert report["version"] == __version__
        assert report["n"] > 0
        assert report["config"]["s_thresh"] == 0.5
        assert report["bytes"] == (workdir / "again.sapc").stat().st_size

    def test_decode_roundtrip(self, workdir, encoded):
        stream, vox = encoded
        out = workdir / "decoded.ply"
        proc = run_cli("decode", stream, out, "--report",
                       workdir / "dec.json")
        assert proc.returncode == 0, proc.stderr
        report = json.loads((workdir / "dec.json").read_text())
        assert report["converged"] is True
        ref = load_ply(vox).points
        dec = load_ply(out).points
        assert dec.shape == ref.shape

    def test_threads_do_not_change_bytes(self, workdir):
        a = workdir / "t1.sapc"
        b = workdir / "t8.sapc"
        assert run_cli("encode", workdir / "sphere.ply", a,
                       "--threads", "1").returncode == 0
        assert run_cli("encode", workdir / "sphere.ply", b,
                       "--threads", "8").returncode == 0
        assert a.read_bytes() == b.read_bytes()

    def test_threads_env_var(self, workdir):
        a = workdir / "env.sapc"
        proc = run_cli("encode", workdir / "sphere.ply", a,
                       env={"SALPCC_THREADS": "2"})
        assert proc.returncode == 0
        report = json.loads(proc.stdout)
        assert report["config"]["threads"] == 2

    def test_flag_beats_env(self, workdir):
        proc = run_cli("encode", workdir / "sphere.ply",
                       workdir / "flag.sapc", "--threads", "3",
                       env={"SALPCC_THREADS": "7"})
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["config"]["threads"] == 3

    def test_config_file_and_flag_override(self, workdir):
        cfg = workdir / "run.cfg"
        cfg.write_text("s_thresh=0.25\ndepth=9\n")
        proc = run_cli("encode", workdir / "sphere.ply",
                       workdir / "cfg.sapc", "--config", cfg)
        assert proc.returncode == 0
        report = json.loads(proc.stdout)
        assert report["config"]["s_thresh"] == 0.25
        assert report["config"]["depth"] == 9
        proc = run_cli("encode", workdir / "sphere.ply",
                       workdir / "cfg2.sapc", "--config", cfg,
                       "--s-thresh", "0.75")
        assert json.loads(proc.stdout)["config"]["s_thresh"] == 0.75


class TestEvaluate:
    def test_stream_restricts_to_visible(self, workdir, encoded):
        stream, vox = encoded
        out = workdir / "decoded.ply"
        run_cli("decode", stream, out)
        proc = run_cli("evaluate", vox, out, "--stream", stream)
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        assert report["restricted_to_visible"] is True
        assert report["bpp"] > 0
        assert np.isfinite(report["d1_psnr"])
        proc = run_cli("evaluate", vox, out, "--stream", stream,
                       "--no-mask-restrict")
        assert json.loads(proc.stdout)["restricted_to_visible"] is False

    def test_heatmap_written(self, workdir, encoded):
        stream, vox = encoded
        out = workdir / "decoded.ply"
        heat = workdir / "heat.ply"
        run_cli("decode", stream, out)
        proc = run_cli("evaluate", vox, out, "--heatmap", heat)
        assert proc.returncode == 0, proc.stderr
        cloud = load_ply(heat)
        assert cloud.colors is not None

    def test_identical_clouds_inf(self, workdir, encoded):
        _, vox = encoded
        proc = run_cli("evaluate", vox, vox)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["d1_psnr"] == float("inf") or \
            json.loads(proc.stdout)["d1_psnr"] == "Infinity"


class TestSaliency:
    def test_csv_and_heatmap(self, workdir):
        out = workdir / "sal.csv"
        heat = workdir / "sal.ply"
        proc = run_cli("saliency", workdir / "sphere.ply", out,
                       "--heatmap", heat)
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == report["n_visible"]
        assert set(rows[0]) == {"index", "a", "s1", "s2", "s3", "s4", "s"}
        scores = np.array([float(r["s"]) for r in rows])
        assert scores.min() >= 0.0 and scores.max() <= 1.0
        cloud = load_ply(heat)
        assert cloud.n == report["n"]
        assert cloud.colors is not None

    def test_uniform_mode_rejected(self, workdir):
        proc = run_cli("saliency", workdir / "sphere.ply",
                       workdir / "x.csv", "--uniform")
        assert proc.returncode == 1


class TestSweepAndBd:
    def test_sweep_csv(self, workdir):
        out = workdir / "sweep.csv"
        proc = run_cli("sweep", workdir / "sphere.ply", out,
                       "--thresholds", "0.05,0.1,0.3,1.0")
        assert proc.returncode == 0, proc.stderr
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert all(r["status"] == "ok" for r in rows)
        bpps = [float(r["bpp"]) for r in rows]
        assert bpps == sorted(bpps)

    def test_bdpsnr_identical_curves(self, workdir):
        sweep = workdir / "sweep.csv"
        if not sweep.exists():
            run_cli("sweep", workdir / "sphere.ply", sweep,
                    "--thresholds", "0.05,0.1,0.3,1.0")
        proc = run_cli("bdpsnr", sweep, sweep)
        assert proc.returncode == 0, proc.stderr
        assert abs(json.loads(proc.stdout)["bd_psnr"]) < 1e-12

    def test_sweep_needs_two_thresholds(self, workdir):
        proc = run_cli("sweep", workdir / "sphere.ply", workdir / "x.csv",
                       "--thresholds", "0.5")
        assert proc.returncode == 1
        assert "two" in proc.stderr


class TestExitCodes:
    def test_missing_input(self, workdir):
        proc = run_cli("encode", workdir / "nope.ply", workdir / "x.sapc")
        assert proc.returncode == 2
        assert "error" in proc.stderr

    def test_corrupt_stream(self, workdir):
        bad = workdir / "bad.sapc"
        bad.write_bytes(b"JUNKJUNKJUNK" * 8)
        proc = run_cli("decode", bad, workdir / "x.ply")
        assert proc.returncode == 2

    def test_bad_subcommand(self):
        proc = run_cli("frobnicate")
        assert proc.returncode == 1

    def test_bad_flag_value(self, workdir):
        proc = run_cli("encode", workdir / "sphere.ply", workdir / "x.sapc",
                       "--depth", "not-an-int")
        assert proc.returncode == 1

    def test_bad_env_threads(self, workdir):
        proc = run_cli("encode", workdir / "sphere.ply", workdir / "x.sapc",
                       env={"SALPCC_THREADS": "many"})
        assert proc.returncode == 1

    def test_negative_s_thresh_is_data_error(self, workdir):
        proc = run_cli("encode", workdir / "sphere.ply", workdir / "x.sapc",
                       "--s-thresh", "-1")
        assert proc.returncode == 2

    def test_version(self):
        proc = run_cli("--version")
        assert proc.returncode == 0
        assert __version__ in proc.stdout
