"""Config parsing, precedence, validation, and round-trip serialization."""

import pytest

from tdmpc_srl.config import (
    Config,
    ConfigError,
    make_config,
    parse_config_text,
    serialize,
)


def test_defaults():
    cfg = make_config()
    assert cfg.env == "pendulum_swingup"
    assert cfg.gamma == 0.99
    assert cfg.lam == 0.5
    assert cfg.horizon == 5
    assert (cfg.c1, cfg.c2, cfg.c3, cfg.c4) == (0.5, 0.1, 2.0, 0.25)
    assert cfg.eps_schedule == (0.5, 0.05, 15_000)


def test_parse_text_types_and_comments():
    vals = parse_config_text(
        "# comment line\n"
        "gamma = 0.9   # trailing comment\n"
        "horizon=3\n"
        "double_q = false\n"
        "\n"
        "env=point_reacher\n"
    )
    assert vals == {"gamma": 0.9, "horizon": 3, "double_q": False,
                    "env": "point_reacher"}


def test_lambda_key_maps_to_lam():
    cfg = make_config(text="lambda = 0.7")
    assert cfg.lam == 0.7
    # the internal field name is not a public key
    with pytest.raises(ConfigError):
        parse_config_text("lam = 0.7")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as ei:
        parse_config_text("warmup_steps = 10")
    assert "unknown key" in str(ei.value)


def test_malformed_line_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("gamma 0.9")
    with pytest.raises(ConfigError):
        parse_config_text("horizon = three")
    with pytest.raises(ConfigError):
        parse_config_text("double_q = maybe")


def test_file_then_override_precedence(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("gamma=0.9\nhorizon=4\n", encoding="utf-8")
    cfg = make_config(file_path=p, overrides={"gamma": "0.95"})
    assert cfg.gamma == 0.95   # flag wins
    assert cfg.horizon == 4    # file value survives


def test_bool_spellings():
    for raw, want in (("true", True), ("1", True), ("yes", True),
                      ("false", False), ("0", False), ("no", False)):
        assert parse_config_text(f"double_q={raw}")["double_q"] is want


@pytest.mark.parametrize("line", [
    "gamma=1.0",
    "lambda=0.0",
    "lambda=1.5",
    "zeta=1.0",
    "tau=0.0",
    "c3=-0.1",
    "horizon=0",
    "top_k=0",
    "sigma_init=0",
    "weight_mode=softmax",
    "env=cartpole",
    "obs_mode=sound",
    "batch_size=0",
    "eval_episodes=0",
])
def test_validation_rejects(line):
    with pytest.raises(ConfigError):
        make_config(text=line)


def test_validation_cross_field():
    # replay must hold a full batch of horizon+1 slices
    with pytest.raises(ConfigError):
        make_config(text="capacity=100\nbatch_size=128")
    with pytest.raises(ConfigError):
        make_config(text="episode_length=5\nhorizon=5")
    with pytest.raises(ConfigError):
        make_config(text="seed_steps=100\ntotal_env_steps=30000")
    with pytest.raises(ConfigError):
        make_config(text="seed_steps=2000\ntotal_env_steps=1999")


def test_eps_schedule_ordering():
    with pytest.raises(ConfigError):
        make_config(text="eps_start=0.01\neps_end=0.05")
    cfg = make_config(text="eps_start=0.3\neps_end=0.3")
    assert cfg.eps_schedule == (0.3, 0.3, 15_000)


def test_action_repeat_auto():
    assert make_config().resolved_action_repeat() == 1
    img = make_config(text="obs_mode=image\nbatch_size=32\nseed_steps=200")
    assert img.resolved_action_repeat() == 2
    forced = make_config(text="obs_mode=image\naction_repeat=1\n"
                              "batch_size=32\nseed_steps=200")
    assert forced.resolved_action_repeat() == 1


def test_env_spec_view():
    spec = make_config(text="env=point_reacher\nepisode_length=150").env_spec()
    assert spec.name == "point_reacher"
    assert spec.obs_mode == "state"
    assert spec.episode_length == 150
    assert spec.action_repeat == 1


def test_serialize_round_trip():
    cfg = make_config(text="gamma=0.97\nlambda=0.8\ndouble_q=false\nseed=7")
    text = serialize(cfg)
    assert "lambda=0.8" in text.splitlines()
    assert "double_q=false" in text.splitlines()
    again = make_config(text=text)
    assert again == cfg


def test_serialize_covers_every_field():
    import dataclasses
    text = serialize(make_config())
    keys = {line.split("=", 1)[0] for line in text.strip().splitlines()}
    assert len(keys) == len(dataclasses.fields(Config))
