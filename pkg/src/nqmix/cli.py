"""Command-line front end: train, eval, ablate, plot, check."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness, learner as learner_mod
from .envs import make_env


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"--seed wants comma-separated ints: {err}")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (keys mirror RunConfig fields)")
    parser.add_argument("--seed", type=_parse_seeds, help="comma-separated seed list")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--algo", help=f"one of {learner_mod.ALGO_NAMES}")
    parser.add_argument("--env", help="matrix | two_step | product")
    parser.add_argument("--steps", type=int, help="total environment steps per seed")


def _build_config(args, default_algo: str | None = None) -> harness.RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.algo is not None:
        overrides["algo"] = args.algo
    if args.env is not None:
        overrides["env"] = args.env
    if args.steps is not None:
        overrides["total_steps"] = args.steps
    if args.config:
        return harness.parse_config(args.config, overrides)
    overrides.setdefault("algo", default_algo)
    if overrides["algo"] is None:
        raise SystemExit("either --config or --algo is required")
    return harness.RunConfig(**overrides)


def _cmd_train(args) -> int:
    config = _build_config(args)
    paths = harness.run_experiment(config)
    print(json.dumps(paths, indent=2))
    return 0


def _cmd_eval(args) -> int:
    env = make_env(args.env, json.loads(args.env_params) if args.env_params else None)
    learner = learner_mod.load_checkpoint(args.checkpoint, env)
    mean_ret, std_ret, success = harness.evaluate(learner, env, args.episodes, args.mode)
    print(f"mean_return={mean_ret!r} stddev={std_ret!r} success_rate={success!r}")
    return 0


def _cmd_ablate(args) -> int:
    config = _build_config(args, default_algo="nqmix")
    paths = harness.run_ablation(config)
    print(json.dumps(paths, indent=2))
    return 0


def _cmd_plot(args) -> int:
    path = harness.emit_plot(args.csvs, args.out)
    print(path)
    return 0


def _cmd_check(args) -> int:
    results = harness.run_checks(seed=args.seed_value)
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nqmix",
        description="Multi-agent value-factorization lab: training, ablation and checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one algorithm over the configured seeds")
    _add_run_flags(p_train)
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--env", default="matrix")
    p_eval.add_argument("--env-params", dest="env_params", help="JSON env parameters")
    p_eval.add_argument("--episodes", type=int, default=32)
    p_eval.add_argument("--mode", choices=("greedy", "stochastic"), default="greedy")
    p_eval.set_defaults(fn=_cmd_eval)

    p_ablate = sub.add_parser("ablate", help="run the nqmix / nqmix_m / qmix comparison")
    _add_run_flags(p_ablate)
    p_ablate.set_defaults(fn=_cmd_ablate)

    p_plot = sub.add_parser("plot", help="plot return curves from metrics CSVs")
    p_plot.add_argument("csvs", nargs="+")
    p_plot.add_argument("--out", required=True)
    p_plot.set_defaults(fn=_cmd_plot)

    p_check = sub.add_parser("check", help="run the quick invariant/oracle suite")
    p_check.add_argument("--seed", dest="seed_value", type=int, default=0)
    p_check.set_defaults(fn=_cmd_check)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
