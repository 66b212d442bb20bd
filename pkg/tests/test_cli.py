"""Command-line surface: exit codes, override precedence, output artifacts."""

import numpy as np
import pytest

from tdmpc_srl.checkpoint import load_checkpoint, save_checkpoint
from tdmpc_srl.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, main
from tdmpc_srl.config import make_config, parse_config_text
from tdmpc_srl.trainer import METRICS_HEADER, Trainer

TINY = """
env = pendulum_swingup
d_latent = 8
hidden = 16
batch_size = 8
horizon = 3
episode_length = 25
seed_steps = 32
total_env_steps = 120
eval_interval = 60
eval_episodes = 2
plan_j = 1
n_gauss = 8
n_policy = 2
top_k = 2
capacity = 2000
checkpoint_interval = 0
seed = 0
"""


@pytest.fixture()
def cfg_file(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY, encoding="utf-8")
    return p


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One CLI training run shared by the eval/plot tests."""
    tmp = tmp_path_factory.mktemp("cli_run")
    cfg = tmp / "tiny.cfg"
    cfg.write_text(TINY, encoding="utf-8")
    out = tmp / "run"
    rc = main(["train", "--config", str(cfg), "--out", str(out)])
    assert rc == EXIT_OK
    return out


def test_train_writes_artifacts(trained, capsys):
    assert (trained / "metrics.csv").exists()
    assert (trained / "config.resolved").exists()
    assert (trained / "checkpoint_final.bin").exists()


def test_train_c4_zero_reconstruction_column(cfg_file, tmp_path, capsys):
    out = tmp_path / "c4zero"
    rc = main(["train", "--config", str(cfg_file), "--c4", "0", "--out", str(out)])
    assert rc == EXIT_OK
    assert f"metrics={out / 'metrics.csv'}" in capsys.readouterr().out
    assert parse_config_text((out / "config.resolved").read_text())["c4"] == 0.0
    rows = [line.split(",") for line in
            (out / "metrics.csv").read_text().splitlines()[1:]]
    rec = [r[5] for r in rows if r[1] != "" and r[2] != ""]
    assert rec and all(v == "0.0" for v in rec)


def test_train_set_overrides_beat_file(cfg_file, tmp_path):
    out = tmp_path / "ovr"
    rc = main(["train", "--config", str(cfg_file), "--out", str(out),
               "--set", "gamma=0.9", "--set", "total_env_steps=60",
               "--set", "eval_interval=1000"])
    assert rc == EXIT_OK
    resolved = parse_config_text((out / "config.resolved").read_text())
    assert resolved["gamma"] == 0.9
    assert resolved["total_env_steps"] == 60


def test_train_rejects_bad_config(cfg_file, tmp_path, capsys):
    rc = main(["train", "--config", str(cfg_file), "--set", "warp_factor=9",
               "--out", str(tmp_path / "x")])
    assert rc == EXIT_CONFIG
    assert "warp_factor" in capsys.readouterr().err
    rc = main(["train", "--config", str(cfg_file), "--steps", "10",
               "--out", str(tmp_path / "y")])
    assert rc == EXIT_CONFIG  # seed phase longer than the whole run
    rc = main(["train", "--config", str(cfg_file), "--set", "notanassignment",
               "--out", str(tmp_path / "z")])
    assert rc == EXIT_CONFIG


def test_train_missing_config_file(tmp_path, capsys):
    rc = main(["train", "--config", str(tmp_path / "absent.cfg")])
    assert rc == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_train_divergence_exit_code(cfg_file, tmp_path, capsys):
    # poison only the reconstruction head: planning stays finite, but every
    # update hits a non-finite loss and the rescue path must trip
    cfg = make_config(file_path=cfg_file, overrides={"total_env_steps": "60"})
    tr = Trainer(cfg)
    tensors = tr._tensor_dict()
    for key in tensors:
        if key.startswith(("theta.h_inv.", "target.h_inv.")):
            tensors[key] = np.full_like(tensors[key], np.nan)
    bad = tmp_path / "poisoned.bin"
    save_checkpoint(bad, tensors, env_step=0)
    out = tmp_path / "div"
    rc = main(["train", "--config", str(cfg_file), "--out", str(out),
               "--set", "total_env_steps=60",
               "--init-checkpoint", str(bad)])
    assert rc == EXIT_DIVERGED
    assert "non-finite" in capsys.readouterr().err
    assert (out / "checkpoint_diverged.bin").exists()


# ---------------------------------------------------------------------------
# eval


def test_eval_prints_machine_readable_line(trained, capsys):
    ckpt = trained / "checkpoint_final.bin"
    rc = main(["eval", "--checkpoint", str(ckpt), "--episodes", "2"])
    assert rc == EXIT_OK
    line = capsys.readouterr().out.strip()
    assert line.startswith("eval_mean=")
    mean = float(line.split()[0].split("=")[1])
    std = float(line.split()[1].split("=")[1])
    assert np.isfinite(mean) and std >= 0.0
    rc = main(["eval", "--checkpoint", str(ckpt), "--episodes", "2"])
    assert capsys.readouterr().out.strip() == line  # same suite, same answer


def test_eval_single_episode_zero_std(trained, capsys):
    rc = main(["eval", "--checkpoint", str(trained / "checkpoint_final.bin"),
               "--episodes", "1"])
    assert rc == EXIT_OK
    assert capsys.readouterr().out.strip().endswith("eval_std=0.0")


def test_eval_bad_checkpoint(tmp_path, capsys):
    rc = main(["eval", "--checkpoint", str(tmp_path / "nope.bin")])
    assert rc == EXIT_CONFIG
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"definitely not a checkpoint")
    rc = main(["eval", "--checkpoint", str(junk)])
    assert rc == EXIT_CONFIG
    assert "magic" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# plot


def test_plot_from_run_directory(trained, tmp_path, capsys):
    out = tmp_path / "curve.svg"
    rc = main(["plot", "--runs", str(trained), "--out", str(out)])
    assert rc == EXIT_OK
    printed = capsys.readouterr().out
    assert f"plot={out}" in printed
    assert out.read_text().startswith("<svg")
    assert (tmp_path / "curve.summary.csv").exists()


def test_plot_missing_runs(tmp_path, capsys):
    rc = main(["plot", "--runs", str(tmp_path / "ghost"), "--out",
               str(tmp_path / "p.svg")])
    assert rc == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "no metrics.csv" in err


def test_plot_unknown_metric(trained, tmp_path, capsys):
    rc = main(["plot", "--runs", str(trained), "--metric", "banana",
               "--out", str(tmp_path / "p.svg")])
    assert rc == EXIT_CONFIG
    assert "unknown metric" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# pretrain


def test_pretrain_zero_steps_equals_fresh_init(cfg_file, tmp_path, capsys):
    out = tmp_path / "pre0"
    rc = main(["pretrain", "--config", str(cfg_file), "--pretrain-steps", "0",
               "--out", str(out)])
    assert rc == EXIT_OK
    path = out / "checkpoint_pretrained.bin"
    assert f"checkpoint={path}" in capsys.readouterr().out
    tensors, step = load_checkpoint(path)
    assert step == 0
    fresh = Trainer(make_config(file_path=cfg_file, overrides={"out_dir": str(out)}))
    for name, t in fresh.theta.named_tensors():
        assert tensors[f"theta.{name}"].tobytes() == t.array.tobytes(), name


def test_pretrain_checkpoint_feeds_train(cfg_file, tmp_path):
    pre = tmp_path / "pre"
    rc = main(["pretrain", "--config", str(cfg_file), "--pretrain-steps", "64",
               "--out", str(pre), "--set", "updates_per_env_step=0.25"])
    assert rc == EXIT_OK
    out = tmp_path / "warm"
    rc = main(["train", "--config", str(cfg_file), "--out", str(out),
               "--set", "total_env_steps=60", "--set", "eval_interval=1000",
               "--init-checkpoint", str(pre / "checkpoint_pretrained.bin")])
    assert rc == EXIT_OK
    assert (out / "checkpoint_final.bin").exists()


def test_pretrain_requires_reconstruction_term(cfg_file, tmp_path, capsys):
    rc = main(["pretrain", "--config", str(cfg_file), "--pretrain-steps", "64",
               "--c4", "0", "--out", str(tmp_path / "nope")])
    assert rc == EXIT_CONFIG
    assert "c4" in capsys.readouterr().err
