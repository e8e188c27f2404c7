"""Command-line interface.

Subcommands: train, eval, dataset, oracle, plot. Exit codes: 0 success,
1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import Dict, List, Optional, Sequence

from .curriculum import STRATEGIES, build_test_set, build_training_set
from .env import RewardMode, new_episode, oracle_action, step
from .instructions import (NO_LANGUAGE, POLICY_BASED, STATE_BASED,
                           build_vocabulary, instruction_text)
from .models import MODEL_KINDS


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_INSTR_FLAG = {"policy": POLICY_BASED, "state": STATE_BASED, "none": NO_LANGUAGE}


def build_parser() -> _Parser:
    parser = _Parser(prog="numblocks",
                     description="Number-construction RL workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one or more seeds")
    p_train.add_argument("--config", required=True, help="JSON config path")
    p_train.add_argument("--seed", type=int, default=None,
                         help="train only this seed (default: all config seeds)")
    p_train.add_argument("--model", choices=MODEL_KINDS, default=None)
    p_train.add_argument("--instr", choices=sorted(_INSTR_FLAG), default=None)
    p_train.add_argument("--curriculum", choices=STRATEGIES, default=None)
    p_train.add_argument("--out", default=None, help="output directory")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--set", dest="which", required=True,
                        help="train | test | all | path to a CSV of numbers")
    p_eval.add_argument("--out", default=None)

    p_data = sub.add_parser("dataset", help="print the train or test set")
    p_data.add_argument("--max-actions", type=int, default=10)
    p_data.add_argument("--which", choices=("train", "test"), required=True)

    p_oracle = sub.add_parser("oracle", help="show the optimal play for a number")
    p_oracle.add_argument("--number", type=int, required=True)
    p_oracle.add_argument("--trace", action="store_true")

    p_plot = sub.add_parser("plot", help="re-aggregate seed curves from run dirs")
    p_plot.add_argument("--runs", nargs="+", required=True)
    p_plot.add_argument("--out", required=True)
    return parser


def _default_out(flag: Optional[str], fallback: str) -> str:
    if flag:
        return flag
    env = os.environ.get("NUMBLOCKS_OUT")
    return os.path.join(env, fallback) if env else fallback


def _cmd_train(args) -> int:
    from .harness import TrainConfig, emit_artifacts, train

    if not os.path.exists(args.config):
        raise UsageError(f"config file not found: {args.config}")
    config = TrainConfig.from_json(args.config)
    overrides = {}
    if args.model:
        overrides["model_kind"] = args.model
    if args.instr:
        overrides["instruction_mode"] = _INSTR_FLAG[args.instr]
    if args.curriculum:
        overrides["strategy"] = args.curriculum
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.out:
        overrides["out_dir"] = args.out
    if overrides:
        from dataclasses import replace
        config = replace(config, **overrides)
    out_dir = _default_out(config.out_dir, "run")
    results = []
    for seed in config.seeds:
        result = train(config, seed)
        print(f"seed {seed}: {result.status}, {result.frames} frames, "
              f"{result.episodes} episodes, final reward "
              f"{result.final_eval.overall_mean:.3f}, success "
              f"{result.final_eval.success_rate:.3f}")
        results.append(result)
    paths = emit_artifacts(out_dir, config, results)
    print(f"artifacts written to {out_dir}")
    return 0


def _numbers_for_eval(which: str, config: dict) -> List[int]:
    cur = config.get("curriculum", {})
    max_actions = cur.get("max_actions", 10)
    if which == "train":
        if cur.get("numbers"):
            return list(cur["numbers"])
        return build_training_set(max_actions)
    if which == "test":
        return build_test_set(max_actions)
    if which == "all":
        return list(range(1, 1000))
    if not os.path.exists(which):
        raise UsageError(f"--set must be train, test, all, or a CSV file: {which}")
    with open(which, newline="", encoding="utf-8") as fh:
        return [int(row[0]) for row in csv.reader(fh) if row]


def _cmd_eval(args) -> int:
    from . import checkpoint as ckpt
    from .harness import evaluate, write_ranges_csv
    from . import plots

    doc = ckpt.load(args.checkpoint)
    model = ckpt.restore_model(doc)
    config = doc.get("config", {})
    numbers = _numbers_for_eval(args.which, config)
    mode = config.get("instruction_mode", POLICY_BASED)
    reward_mode = RewardMode(config.get("reward_mode", "dense"))
    report = evaluate(model, numbers, mode, reward_mode)
    print(f"evaluated {len(numbers)} numbers: mean reward "
          f"{report.overall_mean:.3f}, success rate {report.success_rate:.3f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_ranges_csv(os.path.join(args.out, "eval_ranges.csv"), report.ranges)
        plots.save_ranges_plot(os.path.join(args.out, "ranges.svg"), report.ranges)
        print(f"artifacts written to {args.out}")
    return 0


def _cmd_dataset(args) -> int:
    if args.max_actions < 2:
        raise UsageError("--max-actions must be at least 2")
    numbers = (build_training_set(args.max_actions) if args.which == "train"
               else build_test_set(args.max_actions))
    for n in numbers:
        print(n)
    return 0


def _cmd_oracle(args) -> int:
    if not 1 <= args.number <= 999:
        raise UsageError("--number must lie in [1, 999]")
    vocab = build_vocabulary()  # noqa: F841  (warms the cache for instruction text)
    state = new_episode(args.number, RewardMode.DENSE)
    if not args.trace:
        action = oracle_action(state)
        print(f"{instruction_text(state, POLICY_BASED)} -> {action.name}")
        return 0
    i = 0
    while not state.done:
        action = oracle_action(state)
        text = instruction_text(state, POLICY_BASED)
        state, outcome = step(state, action)
        suffix = " solved" if state.solved else ""
        print(f"step {i}: {text} | {action.name} | reward {outcome.reward:g}{suffix}")
        i += 1
    return 0


def _cmd_plot(args) -> int:
    from .harness import CurvePoint, aggregate_seeds
    from . import plots

    curves: Dict[int, List[CurvePoint]] = {}
    for run_dir in args.runs:
        path = os.path.join(run_dir, "curve.csv")
        if not os.path.exists(path):
            raise UsageError(f"no curve.csv in {run_dir}")
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                point = CurvePoint(int(row["frames"]), int(row["seed"]),
                                   float(row["mean_reward"]),
                                   float(row["success_rate"]))
                curves.setdefault(point.seed, []).append(point)
    if not curves:
        raise UsageError("no curve data found")
    os.makedirs(args.out, exist_ok=True)
    plots.save_curve_plot(os.path.join(args.out, "curve.svg"), curves)
    if len(curves) >= 2:
        try:
            agg = aggregate_seeds(curves)
        except ValueError as exc:
            print(f"note: skipping aggregate CSV ({exc})")
        else:
            lines = ["frames,mean_reward,reward_halfwidth,"
                     "success_rate,success_halfwidth"]
            for p in agg:
                lines.append(f"{p.frames},{p.mean_reward!r},{p.reward_halfwidth!r},"
                             f"{p.success_rate!r},{p.success_halfwidth!r}")
            with open(os.path.join(args.out, "curve_aggregate.csv"), "w",
                      encoding="utf-8", newline="\n") as fh:
                fh.write("\n".join(lines) + "\n")
    print(f"plots written to {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "dataset": _cmd_dataset,
    "oracle": _cmd_oracle,
    "plot": _cmd_plot,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
