"""Checkpoint format: bitwise round-trips, atomicity, corruption rejection."""

import numpy as np
import pytest

from tdmpc_srl.checkpoint import (
    CONFIG_KEY,
    CheckpointError,
    MAGIC,
    decode_config_text,
    encode_config_text,
    load_checkpoint,
    save_checkpoint,
)
from tdmpc_srl.config import make_config, serialize
from tdmpc_srl.model import WorldModel
from tdmpc_srl.envs import EnvSpec


def sample_tensors(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "h.fc1.W": rng.normal(size=(8, 3)),
        "h.fc1.b": rng.normal(size=8),
        "step_scalar": np.float64(3.25),
        "optimizer.m.q1.fc3.W": rng.normal(size=(1, 8)),
    }


def test_round_trip_bitwise(tmp_path):
    path = tmp_path / "model.bin"
    tensors = sample_tensors()
    save_checkpoint(path, tensors, env_step=12345)
    loaded, env_step = load_checkpoint(path)
    assert env_step == 12345
    assert set(loaded) == set(tensors)
    for name, arr in tensors.items():
        got = loaded[name]
        assert got.shape == np.asarray(arr).shape
        assert np.array_equal(got, np.asarray(arr, dtype=np.float64))
        # bitwise, not just numerically close
        assert got.tobytes() == np.asarray(arr, dtype=np.float64).tobytes()


def test_rank_zero_scalar_round_trip(tmp_path):
    path = tmp_path / "s.bin"
    save_checkpoint(path, {"x": np.float64(-0.0)})
    loaded, _ = load_checkpoint(path)
    assert loaded["x"].shape == ()
    assert loaded["x"].tobytes() == np.float64(-0.0).tobytes()


def test_save_is_deterministic(tmp_path):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save_checkpoint(a, sample_tensors(), env_step=7)
    save_checkpoint(b, sample_tensors(), env_step=7)
    assert a.read_bytes() == b.read_bytes()


def test_no_tmp_file_left_behind(tmp_path):
    path = tmp_path / "c.bin"
    save_checkpoint(path, sample_tensors())
    assert [p.name for p in tmp_path.iterdir()] == ["c.bin"]


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_bad_version_rejected(tmp_path):
    path = tmp_path / "v.bin"
    save_checkpoint(path, {"x": np.zeros(2)})
    raw = bytearray(path.read_bytes())
    raw[len(MAGIC)] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_truncation_rejected(tmp_path):
    path = tmp_path / "t.bin"
    save_checkpoint(path, sample_tensors())
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 5])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "g.bin"
    save_checkpoint(path, sample_tensors())
    path.write_bytes(path.read_bytes() + b"\x00\x01")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_negative_env_step_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "n.bin", {}, env_step=-1)


def test_world_model_params_round_trip(tmp_path):
    spec = EnvSpec(name="pendulum_swingup")
    wm = WorldModel(spec.obs_shape, spec.action_dim, d_latent=6, hidden=16)
    theta = wm.init_params(np.random.default_rng(4))
    tensors = {name: t.array for name, t in theta.named_tensors()}
    path = tmp_path / "wm.bin"
    save_checkpoint(path, tensors, env_step=100)
    loaded, step = load_checkpoint(path)
    assert step == 100
    for name, t in theta.named_tensors():
        assert loaded[name].tobytes() == t.array.tobytes(), name


def test_config_embedding_round_trip(tmp_path):
    cfg = make_config(text="gamma=0.97\nlambda=0.8\nseed=3")
    text = serialize(cfg)
    path = tmp_path / "e.bin"
    save_checkpoint(path, {CONFIG_KEY: encode_config_text(text), "w": np.ones(3)})
    loaded, _ = load_checkpoint(path)
    assert decode_config_text(loaded[CONFIG_KEY]) == text
    assert make_config(text=decode_config_text(loaded[CONFIG_KEY])) == cfg


def test_decode_config_rejects_malformed():
    with pytest.raises(CheckpointError):
        decode_config_text(np.array([72.0, 300.0]))
    with pytest.raises(CheckpointError):
        decode_config_text(np.ones((2, 2)))
