"""Training/test number sets and curriculum presentation schedules."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .env import optimal_step_count

ASCENDING = "ascending"
TASK_EASE = "task-ease"
DESCENDING = "descending"
RANDOM = "random"
STRATEGIES = (ASCENDING, TASK_EASE, DESCENDING, RANDOM)


def build_training_set(max_actions: int = 10) -> List[int]:
    """All numbers in [1, 999] solvable in at most ``max_actions`` actions,
    ascending."""
    return [n for n in range(1, 1000) if optimal_step_count(n) <= max_actions]


def build_test_set(max_actions: int = 10) -> List[int]:
    """Complement of the training set within [1, 999], ascending."""
    return [n for n in range(1, 1000) if optimal_step_count(n) > max_actions]


def order(numbers: Sequence[int], strategy: str, seed: Optional[int] = None) -> List[int]:
    """Permute ``numbers`` according to a curriculum strategy."""
    nums = list(numbers)
    if len(set(nums)) != len(nums) or not nums:
        raise ValueError("numbers must be nonempty and unique")
    if strategy == ASCENDING:
        return sorted(nums)
    if strategy == DESCENDING:
        return sorted(nums, reverse=True)
    if strategy == TASK_EASE:
        return _task_ease_order(nums)
    if strategy == RANDOM:
        if seed is None:
            raise ValueError("random ordering requires a seed")
        rng = np.random.Generator(np.random.PCG64(seed))
        return [nums[i] for i in rng.permutation(len(nums))]
    raise ValueError(f"unknown ordering strategy {strategy!r}")


def _task_ease_order(nums: List[int]) -> List[int]:
    # primary key: optimal cost; within an equal-cost group, round-robin
    # across digit lengths so easy 1/2/3-digit numbers stay mixed
    by_cost = {}
    for n in sorted(nums):
        by_cost.setdefault(optimal_step_count(n), []).append(n)
    out: List[int] = []
    for cost in sorted(by_cost):
        buckets = [[n for n in by_cost[cost] if len(str(n)) == d] for d in (1, 2, 3)]
        i = 0
        while any(buckets):
            if buckets[i % 3]:
                out.append(buckets[i % 3].pop(0))
            i += 1
    return out


@dataclass(frozen=True)
class CurriculumSchedule:
    numbers: tuple
    block_size: int = 10
    episodes_per_number: int = 500

    def __post_init__(self):
        if not self.numbers or len(set(self.numbers)) != len(self.numbers):
            raise ValueError("schedule numbers must be nonempty and unique")
        if any(not 1 <= n <= 999 for n in self.numbers):
            raise ValueError("schedule numbers must lie in [1, 999]")
        if self.block_size < 1 or self.episodes_per_number % self.block_size != 0:
            raise ValueError(
                "episodes_per_number must be a positive multiple of block_size"
            )

    @property
    def total_episodes(self) -> int:
        return len(self.numbers) * self.episodes_per_number


def schedule_number(schedule: CurriculumSchedule, episode_index: int) -> int:
    """Number presented at a given episode: blocks of ``block_size``
    consecutive episodes per number, cycling through the ordered set."""
    if not 0 <= episode_index < schedule.total_episodes:
        raise ValueError(f"episode index {episode_index} out of range")
    b = schedule.block_size
    return schedule.numbers[(episode_index // b) % len(schedule.numbers)]
