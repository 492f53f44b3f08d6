"""Command-line runner: config handling, PGM output, subcommands."""

import csv
import dataclasses

import numpy as np
import pytest

from hybrid_krylov import cli
from hybrid_krylov.cli import (
    ExperimentConfig,
    config_to_text,
    parse_config_text,
    read_pgm,
    write_pgm,
)


def _read_meta(path):
    out = {}
    for line in path.read_text().splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_config_text_round_trip():
    cfg = ExperimentConfig(
        problem="tomo",
        n=24,
        noise=0.037,
        seed=9,
        seeds=3,
        method="hybrid-lsmr",
        rule="dp",
        rules="dp,wgcv",
        lam=0.125,
        eta=1.05,
        epsilon="auto",
        sigma2=1e-4,
        omega=0.8,
        max_iter=33,
        min_iter=2,
        tau_lambda=3e-5,
        outdir="elsewhere",
    )
    back = parse_config_text(config_to_text(cfg))
    assert dataclasses.asdict(back) == dataclasses.asdict(cfg)


def test_parse_config_rejects_garbage():
    with pytest.raises(ValueError):
        parse_config_text("just some words\n")
    with pytest.raises(ValueError):
        parse_config_text("not_a_key=3\n")
    cfg = parse_config_text("# comment\n\nn=20\n")
    assert cfg.n == 20


def test_write_pgm_gradient_and_round_trip(tmp_path):
    path = tmp_path / "grad.pgm"
    lo, hi = write_pgm(np.array([[0.0, 1.0], [2.0, 3.0]]), path)
    assert (lo, hi) == (0.0, 3.0)
    back = read_pgm(path)
    assert back.shape == (2, 2)
    assert back.tolist() == [[0, 85], [170, 255]]


def test_write_pgm_constant_image(tmp_path):
    path = tmp_path / "flat.pgm"
    write_pgm(np.full((3, 4), 7.5), path)
    back = read_pgm(path)
    assert back.shape == (3, 4)
    assert np.all(back == 128)


def test_write_pgm_rejects_non_finite(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(np.array([[1.0, np.nan]]), tmp_path / "bad.pgm")


def test_cmd_run_outputs(tmp_path):
    rc = cli.main(
        [
            "run",
            "--problem", "deblur",
            "--n", "16",
            "--noise", "0.01",
            "--seed", "1",
            "--rule", "wgcv",
            "--max-iter", "15",
            "--outdir", str(tmp_path),
        ]
    )
    assert rc == 0
    meta = _read_meta(tmp_path / "meta.txt")
    assert meta["termination"] in ("max_iter", "stabilized")
    header, rows = _read_csv(tmp_path / "log.csv")
    assert header == ["k", "lambda", "relres", "relerr", "sol_norm", "rule_value", "stop_flags"]
    assert len(rows) == int(meta["iterations"])
    ks = [int(r[0]) for r in rows]
    assert ks == list(range(1, len(rows) + 1))
    relres = np.array([float(r[2]) for r in rows])
    assert np.all(relres > 0.0) and relres[-1] < relres[0]
    assert set(rows[0][6]) <= {"0", "1"}
    assert read_pgm(tmp_path / "solution.pgm").shape == (16, 16)
    assert read_pgm(tmp_path / "truth.pgm").shape == (16, 16)
    assert read_pgm(tmp_path / "data.pgm").shape == (16, 16)


def test_cmd_run_fixed_lambda(tmp_path):
    rc = cli.main(
        [
            "run",
            "--problem", "deblur",
            "--n", "16",
            "--rule", "fixed",
            "--lambda", "0.5",
            "--max-iter", "6",
            "--outdir", str(tmp_path),
        ]
    )
    assert rc == 0
    _, rows = _read_csv(tmp_path / "log.csv")
    assert all(float(r[1]) == 0.5 for r in rows)


def test_cmd_run_epsilon_auto(tmp_path):
    rc = cli.main(
        [
            "run",
            "--problem", "deblur",
            "--n", "16",
            "--noise", "0.05",
            "--seed", "4",
            "--rule", "dp",
            "--epsilon", "auto",
            "--max-iter", "20",
            "--outdir", str(tmp_path),
        ]
    )
    assert rc == 0
    meta = _read_meta(tmp_path / "meta.txt")
    assert meta["epsilon_source"].startswith("auto")
    assert float(meta["epsilon_used"]) > 0.0


def test_config_file_with_flag_override(tmp_path):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text("problem=tomo\nn=8\nnoise=0.02\nseed=1\n")
    out = tmp_path / "out"
    rc = cli.main(
        [
            "testproblem",
            "--config", str(cfg_path),
            "--seed", "5",
            "--outdir", str(out),
        ]
    )
    assert rc == 0
    meta = _read_meta(out / "meta.txt")
    assert meta["problem"] == "tomo"
    assert meta["n"] == "8"
    assert meta["seed"] == "5"
    with np.load(out / "problem.npz") as z:
        assert int(z["seed"]) == 5
        assert z["b"].shape == z["b_true"].shape
        assert float(z["sigma"]) > 0.0


def test_sweep_sequential_and_parallel_bytes_identical(tmp_path, monkeypatch):
    args = [
        "sweep",
        "--problem", "deblur",
        "--n", "16",
        "--noise", "0.01",
        "--seed", "0",
        "--seeds", "2",
        "--rules", "wgcv,dp",
        "--epsilon", "true",
        "--max-iter", "12",
    ]
    out1, out8 = tmp_path / "seq", tmp_path / "par"
    monkeypatch.setenv("HYBRID_KRYLOV_THREADS", "1")
    assert cli.main(args + ["--outdir", str(out1)]) == 0
    monkeypatch.setenv("HYBRID_KRYLOV_THREADS", "8")
    assert cli.main(args + ["--outdir", str(out8)]) == 0
    for name in ("sweep.csv", "rre_surface.csv"):
        assert (out1 / name).read_bytes() == (out8 / name).read_bytes()
    header, rows = _read_csv(out1 / "sweep.csv")
    assert header == ["seed", "rule", "stop_k", "lambda_final", "relerr_final"]
    assert [(r[0], r[1]) for r in rows] == [
        ("0", "dp"), ("0", "wgcv"), ("1", "dp"), ("1", "wgcv")
    ]
    header, rows = _read_csv(out1 / "rre_surface.csv")
    assert header == ["k", "lambda", "relerr"]
    assert len(rows) == 12 * 25


def test_run_custom_npz(tmp_path):
    rng = np.random.default_rng(5)
    A = rng.standard_normal((20, 12))
    x = rng.standard_normal(12)
    b = A @ x + 1e-3 * rng.standard_normal(20)
    npz = tmp_path / "prob.npz"
    np.savez(npz, A=A, b=b, x_true=x)
    out = tmp_path / "out"
    rc = cli.main(
        [
            "run",
            "--problem", "custom",
            "--custom", str(npz),
            "--rule", "gcv",
            "--max-iter", "12",
            "--outdir", str(out),
        ]
    )
    assert rc == 0
    _, rows = _read_csv(out / "log.csv")
    assert float(rows[-1][3]) < 0.1


def test_cmd_check_exit_zero(capsys):
    assert cli.main(["check", "--n", "16"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4
    assert all(ln.endswith("ok") for ln in lines)


def test_main_error_paths(tmp_path):
    assert cli.main(["run", "--problem", "custom"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("mystery=1\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
