"""Number-construction environment.

The agent builds a target number from hundreds/tens/units blocks. Six
discrete actions: pick one of the three block kinds, or place the carried
block into one of the three columns. Wrong picks/placements make the
solution unattainable and end the episode immediately with -1. Dense
rewards add +0.1 per correct placement and +1 on completion; sparse
rewards are the terminal +/-1 only.

All operations are pure: ``step`` returns a fresh state.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np


class BlockKind(enum.IntEnum):
    HUNDRED = 0
    TEN = 1
    UNIT = 2


class Action(enum.IntEnum):
    PICK_HUNDRED = 0
    PICK_TEN = 1
    PICK_UNIT = 2
    PLACE_HUNDRED = 3
    PLACE_TEN = 4
    PLACE_UNIT = 5

    @staticmethod
    def pick(kind: BlockKind) -> "Action":
        return Action(int(kind))

    @staticmethod
    def place(kind: BlockKind) -> "Action":
        return Action(3 + int(kind))

    @property
    def is_pick(self) -> bool:
        return self < 3

    @property
    def kind(self) -> BlockKind:
        return BlockKind(self % 3)


class RewardMode(enum.Enum):
    DENSE = "dense"
    SPARSE = "sparse"


class Status(enum.Enum):
    RUNNING = "running"
    SOLVED = "solved"
    FAILED = "failed"


class Reason(enum.Enum):
    NONE = "none"
    SOLVED = "solved"
    MISPLACEMENT = "misplacement"
    OVERFILL = "overfill"
    UNNEEDED_PICK = "unneeded_pick"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class EnvState:
    target: int
    digits: Tuple[int, int, int]          # (hundreds, tens, units)
    placed: Tuple[int, int, int]
    carried: Optional[BlockKind]
    steps_taken: int
    step_limit: int
    reward_mode: RewardMode
    status: Status
    fail_reason: Reason = Reason.NONE

    @property
    def solved(self) -> bool:
        return self.status == Status.SOLVED

    @property
    def done(self) -> bool:
        return self.status != Status.RUNNING

    def remaining(self, kind: BlockKind) -> int:
        return self.digits[kind] - self.placed[kind]


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    done: bool
    reason: Reason


def digits_of(target: int) -> Tuple[int, int, int]:
    return (target // 100, (target // 10) % 10, target % 10)


def optimal_step_count(target: int) -> int:
    """Minimum number of actions to build ``target``: one pick plus one
    place per block, so twice the digit sum."""
    _check_target(target)
    h, t, u = digits_of(target)
    return 2 * (h + t + u)


def _check_target(target: int) -> None:
    if not 1 <= target <= 999:
        raise ValueError(f"target must be in [1, 999], got {target}")


def new_episode(target: int, reward_mode: RewardMode = RewardMode.DENSE) -> EnvState:
    _check_target(target)
    limit = math.ceil(2.5 * optimal_step_count(target))
    return EnvState(
        target=target,
        digits=digits_of(target),
        placed=(0, 0, 0),
        carried=None,
        steps_taken=0,
        step_limit=limit,
        reward_mode=reward_mode,
        status=Status.RUNNING,
    )


def step(state: EnvState, action: Action) -> Tuple[EnvState, StepOutcome]:
    """Apply one action. Pure: the input state is never mutated."""
    if state.status != Status.RUNNING:
        raise RuntimeError("cannot step a terminated episode")

    action = Action(action)
    steps = state.steps_taken + 1
    placed = state.placed
    carried = state.carried
    status = Status.RUNNING
    reason = Reason.NONE
    reward = 0.0
    placed_ok = False

    if action.is_pick:
        kind = action.kind
        if carried is None:
            if state.remaining(kind) > 0:
                carried = kind
            else:
                # no put-back action exists: this pick dooms the episode
                status, reason, reward = Status.FAILED, Reason.UNNEEDED_PICK, -1.0
        # picking while carrying: no-op, step consumed
    else:
        col = action.kind
        if carried is None:
            pass  # placing with free hands: no-op
        elif col != carried:
            status, reason, reward = Status.FAILED, Reason.MISPLACEMENT, -1.0
        elif placed[col] == state.digits[col]:
            status, reason, reward = Status.FAILED, Reason.OVERFILL, -1.0
        else:
            new_placed = list(placed)
            new_placed[col] += 1
            placed = tuple(new_placed)
            carried = None
            reward = 0.1
            placed_ok = True
            if placed == state.digits:
                status, reason, reward = Status.SOLVED, Reason.SOLVED, 1.1

    if status == Status.RUNNING and steps == state.step_limit:
        status = Status.FAILED
        reason = Reason.TIMEOUT
        if not placed_ok:
            reward = -1.0

    if state.reward_mode == RewardMode.SPARSE:
        if status == Status.SOLVED:
            reward = 1.0
        elif status == Status.FAILED:
            reward = -1.0
        else:
            reward = 0.0

    new_state = replace(
        state,
        placed=placed,
        carried=carried,
        steps_taken=steps,
        status=status,
        fail_reason=reason,
    )
    return new_state, StepOutcome(reward=reward, done=status != Status.RUNNING, reason=reason)


def oracle_action(state: EnvState) -> Action:
    """Optimal action: place whatever is carried, otherwise pick the
    highest place with remaining need (hundreds before tens before units)."""
    if state.status != Status.RUNNING:
        raise ValueError("oracle_action requires a running episode")
    if state.carried is not None:
        if state.remaining(state.carried) <= 0:
            raise ValueError("state is not solvable: carried block has no slot")
        return Action.place(state.carried)
    for kind in (BlockKind.HUNDRED, BlockKind.TEN, BlockKind.UNIT):
        if state.remaining(kind) > 0:
            return Action.pick(kind)
    raise ValueError("no remaining need: episode should be terminal")


GRID_SHAPE = (3, 10, 3)  # channels x rows x columns


def render_grid(state: EnvState) -> np.ndarray:
    """Symbolic observation: channel 0 = placed stacks, channel 1 =
    target-digit one-hot, channel 2 = carried-block column indicator."""
    grid = np.zeros(GRID_SHAPE, dtype=np.float64)
    for col in range(3):
        grid[0, : state.placed[col], col] = 1.0
        grid[1, state.digits[col], col] = 1.0
    if state.carried is not None:
        grid[2, :, int(state.carried)] = 1.0
    return grid


_COLUMN_FILL = ("#4da6ff", "#ff9ecb", "#ffd24d")  # hundreds, tens, units
_CELL_H = 14
_CELL_W = 44
_COL_GAP = 16


def render_debug_image(state: EnvState) -> str:
    """Human-readable SVG echoing the environment's color scheme."""
    width = 3 * (_CELL_W + _COL_GAP) + _COL_GAP
    height = 10 * _CELL_H + 60
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="16">{state.target}</text>',
    ]
    base_y = height - _CELL_H - 4
    for col in range(3):
        x = _COL_GAP + col * (_CELL_W + _COL_GAP)
        outline_h = 10 * _CELL_H
        parts.append(
            f'<rect class="outline" x="{x}" y="{base_y - outline_h + _CELL_H}" '
            f'width="{_CELL_W}" height="{outline_h}" fill="none" stroke="#444"/>'
        )
        for row in range(state.placed[col]):
            y = base_y - row * _CELL_H
            parts.append(
                f'<rect class="placed" x="{x + 2}" y="{y}" width="{_CELL_W - 4}" '
                f'height="{_CELL_H - 2}" fill="{_COLUMN_FILL[col]}" stroke="#222"/>'
            )
    if state.carried is not None:
        x = _COL_GAP + int(state.carried) * (_CELL_W + _COL_GAP)
        parts.append(
            f'<rect class="carried" x="{x + 2}" y="28" width="{_CELL_W - 4}" '
            f'height="{_CELL_H - 2}" fill="#000"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
