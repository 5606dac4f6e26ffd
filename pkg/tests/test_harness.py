from __future__ import annotations

import math

import numpy as np
import pytest

from rlncbp import cli
from rlncbp.harness import (
    CSV_HEADER,
    PSNR_LOSSLESS,
    ConfigError,
    ResultRow,
    emit_csv,
    fit_laplacian_p,
    format_csv,
    parse_config,
    psnr_db,
    read_csv,
    read_pgm,
    run_bound_sweep,
    run_experiment,
    run_image_experiment,
    run_sensor_experiment,
    trial_rng,
    write_pgm,
)

# --------------------------------------------------------------------------
# config


def test_config_values_and_ranges():
    cfg = parse_config("N = 12  # sources\nq = 16, 32\np = 0.1\nL = 0..3, 7\n", "bound")
    assert cfg["N"] == 12
    assert cfg["q"] == [16, 32]
    assert cfg["p"] == [0.1]
    assert cfg["L"] == [0, 1, 2, 3, 7]
    assert cfg["delta"] == []


def test_config_types_and_defaults():
    cfg = parse_config("use_prior = false\nbeta = 1\nn_samples = 3\n", "sensor")
    assert cfg["use_prior"] is False
    assert cfg["beta"] == [1.0]
    assert cfg["k_max"] == 100
    img = parse_config("frames = x\nlaplace_p = 0.3\n", "images")
    assert img["laplace_p"] == 0.3
    assert parse_config("frames = x", "images")["laplace_p"] == "fit"


@pytest.mark.parametrize("text,exp", [
    ("bogus = 1", "bound"),
    ("N = 3\nN = 4", "bound"),
    ("N", "bound"),
    ("N = ", "bound"),
    ("N = 2.5", "bound"),
    ("p = 1.5", "bound"),
    ("q = 12", "bound"),
    ("q = 16\nalphabet = 32", "bound"),
    ("L = 5..2", "bound"),
    ("experiment = sensor", "bound"),
    ("q = 4\nn_bits = 3", "sensor"),
    ("use_prior = 3", "sensor"),
    ("n_bits = 4", "images"),
    ("frames = x\nlaplace_p = maybe", "images"),
])
def test_config_rejects(text, exp):
    with pytest.raises(ConfigError):
        parse_config(text, exp)


def test_resolved_lines_reparse():
    cfg = parse_config("N = 6\nq = 8\np = 0.25\nL = 0..4\ndelta = 0.1", "bound")
    again = parse_config("\n".join(cfg.resolved_lines()).replace("alphabet = none\n", ""), "bound")
    assert again.values == cfg.values


# --------------------------------------------------------------------------
# CSV


def test_csv_round_trip(tmp_path):
    rows = [ResultRow("sensor", 20, 8, "beta=0.01;n_bits=3", 14, "error_rate", 0.125, 1000),
            ResultRow("images", 5, 16, "n_bits=4;frame=2", 5, "psnr_db", math.inf, 99),
            ResultRow("bound", 30, 32, "p=0.05;alphabet=32", 0, "bound", 1.0 / 3.0, 0)]
    path = tmp_path / "r.csv"
    emit_csv(rows, path, ["N = 20", "seed = 3"])
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.startswith(b"# N = 20\n# seed = 3\n" + ",".join(CSV_HEADER).encode() + b"\n")
    assert read_csv(path) == rows
    assert read_csv(format_csv(rows)) == rows


def test_csv_bad_header():
    with pytest.raises(ValueError):
        read_csv("a,b\n1,2\n")


# --------------------------------------------------------------------------
# PGM and PSNR


def test_pgm_round_trip(tmp_path):
    img = np.arange(35, dtype=np.uint8).reshape(5, 7) * 7
    write_pgm(tmp_path / "a.pgm", img)
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)


def test_pgm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n3 2\n255\n" + bytes([0, 1, 2, 250, 251, 252]))
    np.testing.assert_array_equal(read_pgm(p), [[0, 1, 2], [250, 251, 252]])


@pytest.mark.parametrize("data", [
    b"P2\n2 2\n255\n0 0 0 0",
    b"P5\n2 2\n65535\n" + bytes(8),
    b"P5\n2 2\n255\n\x00\x01",
    b"P5\n2",
    b"P5\nx 2\n255\n" + bytes(4),
])
def test_pgm_rejects(tmp_path, data):
    p = tmp_path / "bad.pgm"
    p.write_bytes(data)
    with pytest.raises(ValueError):
        read_pgm(p)


def test_psnr_examples():
    a = np.zeros((4, 4))
    assert psnr_db(a, np.full((4, 4), 15.0), 4) == pytest.approx(0.0, abs=1e-12)
    b = np.full((2, 2), 25.5)
    assert psnr_db(a[:2, :2], b, 8) == pytest.approx(20.0, abs=1e-9)
    assert psnr_db(a, a, 4) == PSNR_LOSSLESS


def test_psnr_direct():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 16, (9, 11))
    y = np.where(rng.random(x.shape) < 0.2, rng.integers(0, 16, x.shape), x)
    mse = np.mean((x - y) ** 2)
    assert abs(psnr_db(x, y, 4) - 10 * np.log10(225 / mse)) < 1e-9


def test_fit_laplacian_is_ml():
    rng = np.random.default_rng(1)
    w = rng.integers(-3, 4, 500) * (rng.random(500) < 0.4)
    p_hat = fit_laplacian_p(w)
    grid = np.linspace(0.01, 0.99, 9801)
    ll = len(w) * np.log((1 - grid) / (1 + grid)) + np.abs(w).sum() * np.log(grid)
    assert abs(grid[np.argmax(ll)] - p_hat) < 2e-4
    assert fit_laplacian_p(np.zeros(5)) == 1e-6


# --------------------------------------------------------------------------
# experiments


def test_trial_rng_independent_streams():
    a = trial_rng(5, 1, 0).random(3)
    assert np.array_equal(a, trial_rng(5, 1, 0).random(3))
    assert not np.array_equal(a, trial_rng(5, 1, 1).random(3))
    assert not np.array_equal(a, trial_rng(6, 1, 0).random(3))


def test_bound_sweep_rows():
    cfg = parse_config("N = 10\nq = 8\np = 0.1, 0.5\nL = 0..12\ndelta = 0.01", "bound")
    rows = run_bound_sweep(cfg)
    metrics = {r.metric for r in rows}
    assert metrics == {"bound", "rho_star", "regime", "min_l_over_n"}
    b = [r.value for r in rows if r.metric == "bound" and r.param.startswith("p=0.1;")]
    assert len(b) == 13 and b[0] == 1.0 and b[-1] < b[0]
    mins = [r for r in rows if r.metric == "min_l_over_n"]
    assert all(r.L == math.ceil(r.value * 10 - 1e-9) for r in mins)


def test_bound_sweep_lifted_alphabet():
    # zero-mass field values leave the partition sum unchanged: only q matters
    from rlncbp.bounds import ErrorBound
    from rlncbp.gf import get_field
    from rlncbp.model import AlphabetMap, chain_laplacian_model, lift_pmf

    cfg = parse_config("N = 6\nq = 16\nalphabet = 4\np = 0.2\nL = 0..8", "bound")
    rows = [r for r in run_bound_sweep(cfg) if r.metric == "bound"]
    f = chain_laplacian_model(6, 0.2, 4)
    lifted = lift_pmf(f, AlphabetMap(f.alphabet, get_field(16))).joint
    eb = ErrorBound(lifted, 16)
    for r in rows:
        assert abs(r.value - eb.upper_bound(r.L).bound) < 1e-12


def _small_sensor(workers=1):
    return parse_config(f"N = 8\nq = 8\nbeta = 0.05, 0.5\nL = 5..9\nn_samples = 12\n"
                        f"k_max = 30\nworkers = {workers}", "sensor")


def test_sensor_experiment_basic():
    rows = run_sensor_experiment(_small_sensor(), seed=11)
    assert len(rows) == 2 * 5
    assert all(r.samples == 12 and 0.0 <= r.value <= 1.0 for r in rows)
    # full-rank matrices almost surely decode exactly at L = N + 1
    assert all(r.value <= 1 / 12 for r in rows if r.L == 9)


def test_sensor_workers_do_not_change_results():
    a = run_sensor_experiment(_small_sensor(1), seed=4)
    b = run_sensor_experiment(_small_sensor(2), seed=4)
    assert a == b


def test_image_experiment(frames_dir):
    cfg = parse_config(f"frames = {frames_dir}\nL = 3..5", "images")
    rows = run_image_experiment(cfg, seed=2)
    err = {r.L: r.value for r in rows if r.metric == "error_rate"}
    assert err[5] == 0.0
    assert err[3] >= err[4] >= err[5]
    ps = [r for r in rows if r.metric == "psnr_db" and r.L == 5]
    assert len(ps) == 5 and all(math.isinf(r.value) for r in ps)


def test_image_experiment_unshared_and_fixed_p(frames_dir):
    cfg = parse_config(f"frames = {frames_dir}\nN = 3\nL = 3\nshared_matrix = false\n"
                       f"laplace_p = 0.4\nwindow = 2\nn_bits = 2", "images")
    rows = run_image_experiment(cfg, seed=2)
    err = [r for r in rows if r.metric == "error_rate"]
    assert err[0].N == 3 and err[0].q == 4
    # each pixel gets its own matrix; only rank-deficient ones can fail
    from rlncbp.coding import random_coding_matrix, rank
    from rlncbp.gf import get_field

    f = get_field(4)
    deficient = sum(rank(random_coding_matrix(3, 3, f, trial_rng(2, 3, 1 + px)), f) < 3
                    for px in range(err[0].samples))
    assert 0 < err[0].value * err[0].samples <= deficient


def test_image_experiment_errors(tmp_path, frames_dir):
    with pytest.raises(ValueError):
        run_image_experiment(parse_config(f"frames = {tmp_path / 'nope'}", "images"))
    with pytest.raises(ValueError):
        run_image_experiment(parse_config(f"frames = {frames_dir}\nN = 9", "images"))
    write_pgm(frames_dir / "zz.pgm", np.zeros((3, 3), np.uint8))
    with pytest.raises(ValueError):
        run_image_experiment(parse_config(f"frames = {frames_dir}\nN = 6", "images"))


def test_run_experiment_deterministic(frames_dir):
    cfg = parse_config(f"frames = {frames_dir}\nL = 4..5", "images")
    assert format_csv(run_experiment(cfg, 9)) == format_csv(run_experiment(cfg, 9))


# --------------------------------------------------------------------------
# CLI


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_cli_bound_success(tmp_path, capsys):
    cfg = _write(tmp_path, "b.cfg", "N = 6\nq = 4\np = 0.2\nL = 0..6\n")
    out = tmp_path / "o.csv"
    assert cli.main(["bound", "--config", str(cfg), "--seed", "1", "--out", str(out)]) == 0
    text = out.read_text()
    assert "# seed = 1\n" in text
    assert len(read_csv(out)) == 7 * 3


def test_cli_images_relative_frames(tmp_path, frames_dir):
    cfg = _write(frames_dir.parent, "i.cfg", "frames = frames\nL = 5\n")
    out = tmp_path / "i.csv"
    assert cli.main(["images", "--config", str(cfg), "--seed", "0", "--out", str(out)]) == 0
    assert read_csv(out)[0].metric == "error_rate"


@pytest.mark.parametrize("cmd,text,code", [
    ("bound", None, 1),
    ("bound", "N = 6\nwhat = 1\n", 2),
    ("sensor", "experiment = bound\n", 2),
    ("images", "frames = /does/not/exist\n", 1),
])
def test_cli_errors(tmp_path, capsys, cmd, text, code):
    cfg = tmp_path / "c.cfg"
    if text is not None:
        cfg.write_text(text)
    rc = cli.main([cmd, "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "o.csv")])
    assert rc == code
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("seed", ["-1", "18446744073709551616", "abc"])
def test_cli_bad_seed(tmp_path, seed):
    with pytest.raises(SystemExit) as e:
        cli.main(["bound", "--config", "x", "--seed", seed, "--out", "y"])
    assert e.value.code != 0


def test_cli_unwritable_output(tmp_path, capsys):
    cfg = _write(tmp_path, "b.cfg", "N = 4\nq = 4\np = 0.2\nL = 1\n")
    rc = cli.main(["bound", "--config", str(cfg), "--seed", "1",
                   "--out", str(tmp_path / "missing" / "o.csv")])
    assert rc == 1
    assert "error" in capsys.readouterr().err
