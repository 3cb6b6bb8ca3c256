import os

import numpy as np
import pytest

from dmis import cli, refsolve, training
from dmis.errors import ConfigError, MissingArtifactError


@pytest.fixture
def out_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "out"))
    return tmp_path


# ---------------------------------------------------------------------------
# config parsing / echo
# ---------------------------------------------------------------------------


def test_parse_config_basics():
    text = "benchmark=kdv\nseed = 7\nlearning_rate=0.01  # comment\n\n# note\n"
    out = cli.parse_config_text(text)
    assert out == {"benchmark": "kdv", "seed": 7, "learning_rate": 0.01}
    assert isinstance(out["seed"], int)


def test_parse_config_rejects_unknown_and_malformed():
    with pytest.raises(ConfigError):
        cli.parse_config_text("optimizer=adam\n")
    with pytest.raises(ConfigError):
        cli.parse_config_text("just a line\n")
    with pytest.raises(ConfigError):
        cli.parse_config_text("seed=three\n")


def test_config_echo_roundtrip():
    cfg = training.default_config("allen-cahn", seed=9, max_iters=123)
    text = cli.config_echo_text(cfg)
    back = cli.resolve_config(cli.parse_config_text(text))
    assert back == cfg


def test_resolve_config_validates():
    with pytest.raises(ConfigError):
        cli.resolve_config({"benchmark": "burgers", "learning_rate": -1.0})


# ---------------------------------------------------------------------------
# reference subcommand
# ---------------------------------------------------------------------------


def test_reference_idempotent(out_env, capsys):
    argv = ["reference", "burgers", "--nx", "256", "--nt", "21"]
    assert cli.main(argv) == cli.EXIT_OK
    first = capsys.readouterr().out
    assert first.startswith("wrote:")
    path = first.split(": ", 1)[1].strip()
    assert os.path.exists(path)
    mtime = os.path.getmtime(path)
    assert cli.main(argv) == cli.EXIT_OK
    second = capsys.readouterr().out
    assert second.startswith("cached:")
    assert os.path.getmtime(path) == mtime


def test_reference_instability_exit_code(out_env, capsys):
    rc = cli.main(["reference", "kdv", "--nx", "16", "--nt", "11"])
    assert rc == cli.EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# train subcommand
# ---------------------------------------------------------------------------


def _train_argv(out_dir, extra=()):
    return [
        "train", "--benchmark", "burgers", "--sampler", "uniform",
        "--seed", "0", "--max-iters", "50",
        "--set", "n_f=500", "--set", "n_i=50", "--set", "n_b=50",
        "--set", "batch_f=32", "--set", "batch_i=16", "--set", "batch_b=16",
        "--set", "s_size=40", "--set", "recompute_every=10",
        "--out", out_dir, *extra,
    ]


def test_train_writes_artifacts(out_env):
    run_dir = str(out_env / "run")
    assert cli.main(_train_argv(run_dir)) == cli.EXIT_OK
    for name in ("config.echo", "log.csv", "checkpoint.bin", "rebuilds.csv"):
        assert os.path.exists(os.path.join(run_dir, name)), name
    log = open(os.path.join(run_dir, "log.csv")).read().splitlines()
    assert log[0] == "iter,L,L_f,L_i,L_b,ms,rebuild"
    assert len(log) == 51
    assert log[1].startswith("1,")
    reb = open(os.path.join(run_dir, "rebuilds.csv")).read().splitlines()
    assert reb[0] == "event,iter,sim,s_size"
    echo = cli.parse_config_text(open(os.path.join(run_dir, "config.echo")).read())
    assert echo["max_iters"] == 50 and echo["sampler"] == "uniform"


def test_train_zero_iters(out_env):
    run_dir = str(out_env / "r0")
    argv = ["train", "--benchmark", "burgers", "--sampler", "uniform",
            "--max-iters", "0", "--set", "n_f=500", "--set", "n_i=50",
            "--set", "n_b=50", "--set", "batch_f=32", "--set", "batch_i=16",
            "--set", "batch_b=16", "--out", run_dir]
    assert cli.main(argv) == cli.EXIT_OK
    log = open(os.path.join(run_dir, "log.csv")).read().splitlines()
    assert log == ["iter,L,L_f,L_i,L_b,ms,rebuild"]


def test_train_bad_config_exit_code(out_env, capsys):
    rc = cli.main(["train", "--set", "learning_rate=-5"])
    assert rc == cli.EXIT_CONFIG
    rc = cli.main(["train", "--config", str(out_env / "nope.cfg")])
    assert rc == cli.EXIT_MISSING


def test_read_log_records_roundtrip(out_env):
    run_dir = str(out_env / "run")
    cli.main(_train_argv(run_dir))
    recs = cli.read_log_records(os.path.join(run_dir, "log.csv"))
    assert len(recs) == 50
    assert recs[0].iter == 1 and recs[-1].iter == 50
    assert all(np.isfinite(r.loss) for r in recs)
    with pytest.raises(MissingArtifactError):
        cli.read_log_records(os.path.join(run_dir, "missing.csv"))


# ---------------------------------------------------------------------------
# evaluate subcommand
# ---------------------------------------------------------------------------


def test_evaluate_run_and_rerun_identical(out_env, capsys):
    run_dir = str(out_env / "run")
    cli.main(_train_argv(run_dir))
    grid_path = str(out_env / "b.grid")
    cli.main(["reference", "burgers", "--nx", "256", "--nt", "21",
              "--out", grid_path])
    capsys.readouterr()
    assert cli.main(["evaluate", run_dir, grid_path]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "benchmark: burgers" in out and "RMSE" in out
    err_csv = os.path.join(run_dir, "errors.csv")
    conv_csv = os.path.join(run_dir, "convergence.csv")
    first = (open(err_csv).read(), open(conv_csv).read())
    assert cli.main(["evaluate", run_dir, grid_path]) == cli.EXIT_OK
    assert (open(err_csv).read(), open(conv_csv).read()) == first
    assert first[0].splitlines()[0] == "benchmark,segment,me,mae,rmse"
    conv_head = first[1].splitlines()[0].split(",")
    for col in ("NC_2", "NC_3", "TC_2", "TC_3"):
        assert col in conv_head


def test_evaluate_wrong_grid_rejected(out_env, capsys):
    run_dir = str(out_env / "run")
    cli.main(_train_argv(run_dir))
    grid_path = str(out_env / "k.grid")
    cli.main(["reference", "kdv", "--nx", "256", "--nt", "21",
              "--out", grid_path])
    assert cli.main(["evaluate", run_dir, grid_path]) == cli.EXIT_CONFIG


def test_evaluate_missing_run_exit_code(out_env, capsys):
    grid_path = str(out_env / "b.grid")
    cli.main(["reference", "burgers", "--nx", "256", "--nt", "21",
              "--out", grid_path])
    rc = cli.main(["evaluate", str(out_env / "no-run"), grid_path])
    assert rc == cli.EXIT_MISSING


# ---------------------------------------------------------------------------
# compare subcommand
# ---------------------------------------------------------------------------


def test_compare_end_to_end(out_env, capsys, monkeypatch):
    # shrink the default burgers configuration so the comparison is fast
    small = dict(training.BENCHMARK_DEFAULTS)
    small["burgers"] = (2, 8, 0.005, 40, 0.4, 1.5, 600, 150, 150)
    monkeypatch.setattr(training, "BENCHMARK_DEFAULTS", small)
    monkeypatch.setitem(refsolve.DEFAULT_NX, "burgers", 256)
    out_dir = str(out_env / "cmp")
    rc = cli.main([
        "compare", "--benchmark", "burgers", "--seeds", "0,1",
        "--samplers", "uniform,dmis", "--max-iters", "40",
        "--nt", "21", "--out", out_dir,
    ])
    assert rc == cli.EXIT_OK
    lines = open(os.path.join(out_dir, "comparison.csv")).read().splitlines()
    assert lines[0] == "sampler,runs,me,mae,rmse,NC_2,NC_3,TC_2,TC_3"
    assert len(lines) == 3
    assert lines[1].startswith("uniform,2,") and lines[2].startswith("dmis,2,")
    curve = open(os.path.join(out_dir, "curve-uniform-0.csv")).read().splitlines()
    assert curve[0] == "iter,L"
    assert curve[1].startswith("1,")
    assert curve[-1].startswith("40,")
    for sampler in ("uniform", "dmis"):
        for seed in (0, 1):
            assert os.path.isdir(os.path.join(out_dir, f"{sampler}-seed{seed}"))


def test_compare_requires_seed(out_env):
    rc = cli.main(["compare", "--benchmark", "burgers", "--seeds", ""])
    assert rc == cli.EXIT_CONFIG
