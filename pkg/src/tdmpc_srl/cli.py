"""Command-line entry point: train, eval, plot, pretrain.

Configuration comes from an optional key=value file plus flags; flags win.
Exit codes: 0 success, 2 configuration or input error, 3 training divergence.
"""

import os
import sys


def _apply_thread_cap():
    # must happen before numpy first loads its BLAS backend, which is why the
    # package __init__ stays import-light
    v = os.environ.get("TDMPC_SRL_THREADS")
    if v:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = v


_apply_thread_cap()

import argparse
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ConfigError, make_config
from .plotting import PlotError, plot_runs
from .trainer import (Trainer, TrainingDiverged, evaluate, load_model_for_eval,
                      pretrain_world_model)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _add_override_args(p: argparse.ArgumentParser):
    p.add_argument("--config", type=str, default=None, help="key=value config file")
    p.add_argument("--env", type=str, default=None)
    p.add_argument("--obs-mode", type=str, default=None, choices=("state", "image"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="total environment steps")
    p.add_argument("--c4", type=float, default=None,
                   help="reconstruction loss coefficient")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--init-checkpoint", type=str, default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")


def _collect_overrides(args) -> dict:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    named = {"env": args.env, "obs_mode": args.obs_mode, "seed": args.seed,
             "total_env_steps": args.steps, "c4": args.c4, "out_dir": args.out,
             "init_checkpoint": args.init_checkpoint}
    for key, val in named.items():
        if val is not None:
            overrides[key] = str(val)
    return overrides


def cmd_train(args) -> int:
    cfg = make_config(args.config, _collect_overrides(args))
    trainer = Trainer(cfg)
    try:
        metrics_path = trainer.train()
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"metrics={metrics_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, wm, theta = load_model_for_eval(args.checkpoint)
    mean, std = evaluate(wm, theta, cfg, episodes=args.episodes, seed=args.seed)
    print(f"eval_mean={mean!r} eval_std={std!r}")
    return EXIT_OK


def cmd_plot(args) -> int:
    files = []
    for d in args.runs:
        p = Path(d)
        candidate = p if p.suffix == ".csv" else p / "metrics.csv"
        if candidate.exists():
            files.append(candidate)
        else:
            print(f"warning: no metrics.csv under {d}", file=sys.stderr)
    if not files:
        raise PlotError("no metrics.csv found in any of the given run directories")
    svg, summary = plot_runs(files, args.out, metric=args.metric)
    print(f"plot={svg}\nsummary={summary}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = make_config(args.config, _collect_overrides(args))
    trainer = pretrain_world_model(cfg, args.pretrain_steps)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "checkpoint_pretrained.bin"
    trainer.save_checkpoint(path)
    print(f"checkpoint={path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdmpc-srl",
        description="Latent world-model RL with MPPI planning and a "
                    "self-supervised reconstruction head.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a training loop")
    _add_override_args(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("plot", help="average metric curves across runs into an SVG")
    p.add_argument("--runs", type=str, nargs="+", required=True,
                   help="run directories (or metrics.csv paths)")
    p.add_argument("--metric", type=str, default="eval_mean")
    p.add_argument("--out", type=str, required=True, help="output .svg path")
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("pretrain", help="self-supervised world-model warm start")
    _add_override_args(p)
    p.add_argument("--pretrain-steps", type=int, required=True)
    p.set_defaults(fn=cmd_pretrain)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CheckpointError, PlotError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
