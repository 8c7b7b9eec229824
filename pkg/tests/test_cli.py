import json

import pytest

from rbmm.cli import main, parse_seeds
from rbmm.config_io import read_csv

CONFIG = """\
[run]
n_particles = 40
batch_size = 4
tau = 0.001
t_end = 0.004
delta = 0.1
save_every = 2

[kernel]
id = BiotSavart
"""


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(CONFIG)
    return path


def _json(capsys):
    return json.loads(capsys.readouterr().out)


@pytest.mark.parametrize("text,expected", [("3", [0, 1, 2]), ("4,9", [4, 9]), ("2:5", [2, 3, 4]), (None, list(range(10)))])
def test_parse_seeds(text, expected):
    assert parse_seeds(text) == expected


def test_simulate_writes_trajectories(cfg, tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    summary = _json(capsys)
    assert summary["steps"] == 4 and set(summary["terminal_l2_error"]) == {"RBM", "RBMM"}
    header, rows = read_csv(out)
    assert header == ["solver", "step", "time", "particle", "x0", "x1"]
    assert len(rows) == 3 * 3 * 40
    assert {r[1] for r in rows} == {0, 2, 4}


def test_simulate_without_config_is_a_usage_error(capsys):
    assert main(["simulate"]) == 2
    assert "needs --config" in capsys.readouterr().err


def test_bad_config_returns_error_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[run]\nbeta = 1.5\n[kernel]\nid = BiotSavart\n")
    assert main(["simulate", "--config", str(path)]) == 2
    assert "beta" in capsys.readouterr().err


def test_sweep_tau_from_config(cfg, tmp_path, capsys):
    out = tmp_path / "tau.csv"
    assert main(["sweep-tau", "--config", str(cfg), "--taus", "0.002,0.001", "--seeds", "2", "--out", str(out)]) == 0
    assert _json(capsys)["summary"]["slope_rbmm"] is not None
    header, rows = read_csv(out)
    assert [r[0] for r in rows].count("seed") == 4
    assert (tmp_path / "tau.csv.json").exists()


def test_sweep_beta_from_config(cfg, capsys):
    assert main(["sweep-beta", "--config", str(cfg), "--betas", "0,0.1", "--seeds", "1"]) == 0
    assert _json(capsys)["summary"]["ratios"]["0.0"] == 1.0


def test_compare_kernels_rejects_unknown_row(capsys):
    assert main(["compare-kernels", "--kernels", "K9"]) == 2


def test_sweep_steepness_from_config(tmp_path, capsys):
    path = tmp_path / "s.ini"
    path.write_text("[run]\nn_particles = 20\nbatch_size = 4\nt_end = 0.002\ninit = UniformInterval1D\n"
                    "[kernel]\nid = Steepness\n")
    assert main(["sweep-steepness", "--config", str(path), "--alphas", "0.01", "--seeds", "10"]) == 0
    assert "0.01" in _json(capsys)["summary"]["advantage"]


def test_bench_small(cfg, capsys):
    assert main(["bench", "--config", str(cfg), "--sizes", "20,40", "--reps", "3"]) == 0
    assert _json(capsys)["summary"]["exponent_reference"] is not None


def test_estimator_stats(tmp_path, capsys):
    out = tmp_path / "est.csv"
    assert main(["estimator-stats", "--n-particles", "8", "--batch-size", "2", "--samples", "2000",
                 "--steps", "10", "--out", str(out)]) == 0
    summary = _json(capsys)
    assert summary["contraction_bound"] == pytest.approx(0.8181818181818181)
    header, rows = read_csv(out)
    assert header == ["quantity", "particle", "step", "mean_norm", "variance", "n_samples", "beta", "tau"]
    assert len(rows) == 24
