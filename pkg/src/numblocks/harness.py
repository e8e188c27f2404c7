"""Experiment orchestration: training loop, greedy evaluation, multi-seed
aggregation, and artifact emission (CSV metrics, SVG plots, checkpoints)."""
from __future__ import annotations

import json
import math
import os
import subprocess
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint as ckpt
from .curriculum import (CurriculumSchedule, RANDOM, STRATEGIES, TASK_EASE,
                         build_training_set, order)
from .env import RewardMode, new_episode, step
from .instructions import INSTRUCTION_MODES, POLICY_BASED, build_vocabulary
from .models import MODEL_KINDS, DENSE_LANGUAGE, Model, ModelConfig
from .neural import AdamConfig
from .ppo import PpoConfig, RolloutCollector, observe, update

Z_66 = 0.9542  # two-sided 66% normal quantile

RANGE_STARTS = tuple(range(0, 1000, 100))


@dataclass(frozen=True)
class AbortRule:
    after_frames: int
    min_avg_reward: float


@dataclass
class TrainConfig:
    model_kind: str = DENSE_LANGUAGE
    model: ModelConfig = field(default_factory=ModelConfig)
    instruction_mode: str = POLICY_BASED
    reward_mode: str = "dense"
    strategy: str = TASK_EASE
    strategy_seed: Optional[int] = None
    block_size: int = 10
    episodes_per_number: int = 500
    max_actions: int = 10
    numbers: Optional[Tuple[int, ...]] = None   # explicit set overrides max_actions
    ppo: PpoConfig = field(default_factory=PpoConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)
    seeds: Tuple[int, ...] = (0, 1, 2)
    eval_interval_frames: int = 50_000
    abort: Optional[AbortRule] = None
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.instruction_mode not in INSTRUCTION_MODES:
            raise ValueError(f"unknown instruction mode {self.instruction_mode!r}")
        if self.reward_mode not in ("dense", "sparse"):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown curriculum strategy {self.strategy!r}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be nonempty and unique")
        if self.eval_interval_frames < self.ppo.horizon:
            raise ValueError("eval_interval_frames must be at least the rollout horizon")

    def training_numbers(self) -> List[int]:
        return list(self.numbers) if self.numbers else build_training_set(self.max_actions)

    def to_dict(self) -> dict:
        return {
            "model": {"kind": self.model_kind, **asdict(self.model)},
            "instruction_mode": self.instruction_mode,
            "reward_mode": self.reward_mode,
            "curriculum": {
                "strategy": self.strategy,
                "strategy_seed": self.strategy_seed,
                "block_size": self.block_size,
                "episodes_per_number": self.episodes_per_number,
                "max_actions": self.max_actions,
                "numbers": list(self.numbers) if self.numbers else None,
            },
            "ppo": asdict(self.ppo),
            "adam": asdict(self.adam),
            "train": {
                "seeds": list(self.seeds),
                "eval_interval_frames": self.eval_interval_frames,
                "abort": asdict(self.abort) if self.abort else None,
                "out_dir": self.out_dir,
            },
        }

    @staticmethod
    def from_dict(doc: dict) -> "TrainConfig":
        model = dict(doc.get("model", {}))
        kind = model.pop("kind", DENSE_LANGUAGE)
        if model.get("hidden") is not None:
            model["hidden"] = tuple(model["hidden"])
        cur = doc.get("curriculum", {})
        train = doc.get("train", {})
        abort = AbortRule(**train["abort"]) if train.get("abort") else None
        return TrainConfig(
            model_kind=kind,
            model=ModelConfig(**model),
            instruction_mode=doc.get("instruction_mode", POLICY_BASED),
            reward_mode=doc.get("reward_mode", "dense"),
            strategy=cur.get("strategy", TASK_EASE),
            strategy_seed=cur.get("strategy_seed"),
            block_size=cur.get("block_size", 10),
            episodes_per_number=cur.get("episodes_per_number", 500),
            max_actions=cur.get("max_actions", 10),
            numbers=tuple(cur["numbers"]) if cur.get("numbers") else None,
            ppo=PpoConfig(**doc.get("ppo", {})),
            adam=AdamConfig(**doc.get("adam", {})),
            seeds=tuple(train.get("seeds", (0, 1, 2))),
            eval_interval_frames=train.get("eval_interval_frames", 50_000),
            abort=abort,
            out_dir=train.get("out_dir"),
        )

    @staticmethod
    def from_json(path: str) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return TrainConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class CurvePoint:
    frames: int
    seed: int
    mean_reward: float
    success_rate: float


@dataclass(frozen=True)
class RangeAggregate:
    start: int
    end: int
    mean_reward: float
    n: int


@dataclass
class EvalReport:
    per_number: Dict[int, float]
    solved: Dict[int, bool]
    ranges: List[RangeAggregate]
    overall_mean: float
    success_rate: float


@dataclass
class TrainResult:
    seed: int
    status: str                    # "completed" | "aborted"
    curve: List[CurvePoint]
    checkpoint: dict
    final_eval: EvalReport
    frames: int
    episodes: int


def greedy_episode(model: Model, target: int, vocab, instruction_mode: str,
                   reward_mode: RewardMode = RewardMode.DENSE) -> Tuple[float, bool]:
    """Run one episode with argmax actions; returns (cumulative reward, solved)."""
    from .models import policy_value

    state = new_episode(target, reward_mode)
    total = 0.0
    while not state.done:
        grid, ids = observe(state, vocab, instruction_mode)
        probs, _ = policy_value(model, grid, ids)
        state, outcome = step(state, int(np.argmax(probs)))
        total += outcome.reward
    return total, state.solved


def evaluate(model: Model, numbers: Sequence[int], instruction_mode: str,
             reward_mode: RewardMode = RewardMode.DENSE) -> EvalReport:
    """Greedy evaluation, one deterministic episode per number."""
    vocab = build_vocabulary()
    per_number: Dict[int, float] = {}
    solved: Dict[int, bool] = {}
    for n in numbers:
        if not 1 <= n <= 999:
            raise ValueError(f"evaluation number {n} out of range")
        per_number[n], solved[n] = greedy_episode(model, n, vocab, instruction_mode,
                                                  reward_mode)
    ranges = []
    for start in RANGE_STARTS:
        members = [per_number[n] for n in per_number if start <= n <= start + 99]
        mean = float(np.mean(members)) if members else 0.0
        ranges.append(RangeAggregate(start=start, end=start + 99,
                                     mean_reward=mean, n=len(members)))
    rewards = list(per_number.values())
    return EvalReport(
        per_number=per_number,
        solved=solved,
        ranges=ranges,
        overall_mean=float(np.mean(rewards)),
        success_rate=float(np.mean([solved[n] for n in solved])),
    )


def train(config: TrainConfig, seed: int) -> TrainResult:
    """Train one seed to curriculum exhaustion or early abort."""
    vocab = build_vocabulary()
    numbers = config.training_numbers()
    strategy_seed = config.strategy_seed if config.strategy_seed is not None else seed
    ordered = order(numbers, config.strategy,
                    seed=strategy_seed if config.strategy == RANDOM else None)
    schedule = CurriculumSchedule(tuple(ordered), config.block_size,
                                  config.episodes_per_number)
    reward_mode = RewardMode(config.reward_mode)
    model = Model(config.model_kind, vocab, config.model, seed=seed)
    action_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 101])))
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 202])))
    collector = RolloutCollector(model, schedule, vocab, config.instruction_mode,
                                 reward_mode, action_rng)

    curve: List[CurvePoint] = []
    status = "completed"
    next_eval = config.eval_interval_frames
    report: Optional[EvalReport] = None
    while True:
        buffer = collector.collect(config.ppo.horizon)
        if buffer is None:
            break
        update(model, buffer, config.ppo, config.adam, shuffle_rng)
        if collector.frames >= next_eval:
            report = evaluate(model, numbers, config.instruction_mode, reward_mode)
            curve.append(CurvePoint(collector.frames, seed,
                                    report.overall_mean, report.success_rate))
            next_eval += config.eval_interval_frames
            if (config.abort is not None
                    and collector.frames >= config.abort.after_frames
                    and report.overall_mean < config.abort.min_avg_reward):
                status = "aborted"
                break
    if not curve or curve[-1].frames != collector.frames:
        report = evaluate(model, numbers, config.instruction_mode, reward_mode)
        curve.append(CurvePoint(collector.frames, seed,
                                report.overall_mean, report.success_rate))
    doc = ckpt.checkpoint_dict(
        model,
        config=config.to_dict(),
        frames=collector.frames,
        rng_state=action_rng.bit_generator.state,
        vocab=vocab,
        status=status,
    )
    return TrainResult(seed=seed, status=status, curve=curve, checkpoint=doc,
                       final_eval=report, frames=collector.frames,
                       episodes=collector.episode_index)


@dataclass(frozen=True)
class AggregatePoint:
    frames: int
    mean_reward: float
    reward_halfwidth: float
    success_rate: float
    success_halfwidth: float


def _ci_halfwidth(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return Z_66 * float(np.std(values, ddof=1)) / math.sqrt(len(values))


def aggregate_seeds(curves: Dict[int, List[CurvePoint]]) -> List[AggregatePoint]:
    """Per-frame mean and 66% normal-approximation confidence half-width
    over seeds. Frame grids must coincide across seeds."""
    if len(curves) < 2:
        raise ValueError("seed aggregation requires at least two seeds")
    grids = [tuple(p.frames for p in pts) for pts in curves.values()]
    if len(set(grids)) != 1:
        raise ValueError("seed curves have misaligned frame grids")
    out = []
    for i, frames in enumerate(grids[0]):
        rewards = np.array([pts[i].mean_reward for pts in curves.values()])
        success = np.array([pts[i].success_rate for pts in curves.values()])
        out.append(AggregatePoint(
            frames=frames,
            mean_reward=float(rewards.mean()),
            reward_halfwidth=_ci_halfwidth(rewards),
            success_rate=float(success.mean()),
            success_halfwidth=_ci_halfwidth(success),
        ))
    return out


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=os.path.dirname(__file__), capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    from . import __version__
    return f"numblocks-{__version__}"


def write_curve_csv(path: str, results: Sequence[TrainResult]) -> None:
    lines = ["frames,seed,mean_reward,success_rate"]
    for result in sorted(results, key=lambda r: r.seed):
        for p in result.curve:
            lines.append(f"{p.frames},{p.seed},{p.mean_reward!r},{p.success_rate!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_ranges_csv(path: str, ranges: Sequence[RangeAggregate]) -> None:
    lines = ["range_start,range_end,mean_reward,n"]
    for r in ranges:
        lines.append(f"{r.start},{r.end},{r.mean_reward!r},{r.n}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def mean_ranges(reports: Sequence[EvalReport]) -> List[RangeAggregate]:
    """Average per-range rewards across seed reports (counts must agree)."""
    base = reports[0].ranges
    out = []
    for i, r in enumerate(base):
        if any(rep.ranges[i].n != r.n for rep in reports):
            raise ValueError("range counts differ across seed reports")
        mean = float(np.mean([rep.ranges[i].mean_reward for rep in reports]))
        out.append(RangeAggregate(start=r.start, end=r.end, mean_reward=mean, n=r.n))
    return out


def emit_artifacts(out_dir: str, config: TrainConfig,
                   results: Sequence[TrainResult]) -> Dict[str, str]:
    """Write curve.csv, eval_ranges.csv, curve.svg, ranges.svg,
    run_meta.json, and one checkpoint per seed."""
    from . import plots

    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    paths["curve_csv"] = os.path.join(out_dir, "curve.csv")
    write_curve_csv(paths["curve_csv"], results)

    ranges = mean_ranges([r.final_eval for r in results])
    paths["ranges_csv"] = os.path.join(out_dir, "eval_ranges.csv")
    write_ranges_csv(paths["ranges_csv"], ranges)

    curves = {r.seed: r.curve for r in results}
    paths["curve_svg"] = os.path.join(out_dir, "curve.svg")
    plots.save_curve_plot(paths["curve_svg"], curves)
    paths["ranges_svg"] = os.path.join(out_dir, "ranges.svg")
    plots.save_ranges_plot(paths["ranges_svg"], ranges)

    for result in results:
        path = os.path.join(out_dir, f"checkpoint_seed{result.seed}.json")
        ckpt.save(result.checkpoint, path)
        paths[f"checkpoint_seed{result.seed}"] = path

    meta = {
        "config": config.to_dict(),
        "version": version_string(),
        "status": {str(r.seed): r.status for r in results},
        "frames": {str(r.seed): r.frames for r in results},
        "episodes": {str(r.seed): r.episodes for r in results},
    }
    paths["run_meta"] = os.path.join(out_dir, "run_meta.json")
    with open(paths["run_meta"], "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
