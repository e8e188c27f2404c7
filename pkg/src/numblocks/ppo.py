"""Rollout collection, generalized advantage estimation, and the combined
actor/critic/entropy loss with importance ratios and optional clipping."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import neural as nn
from .curriculum import CurriculumSchedule, schedule_number
from .env import EnvState, RewardMode, new_episode, render_grid, step
from .instructions import Vocabulary, instruction_text, tokenize
from .models import Model
from .neural import AdamConfig, adam_step, sample_categorical


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    value_coef: float = 0.5
    policy_coef: float = 1.0
    entropy_coef: float = 0.01
    clip_epsilon: Optional[float] = 0.2
    epochs: int = 4
    minibatch_size: int = 64
    horizon: int = 512
    normalize_advantages: bool = True
    grad_clip: Optional[float] = 0.5

    def __post_init__(self):
        if min(self.value_coef, self.policy_coef, self.entropy_coef) < 0:
            raise ValueError("loss coefficients must be nonnegative")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lambda must lie in [0, 1]")
        if self.minibatch_size > self.horizon:
            raise ValueError("minibatch_size cannot exceed the horizon")


@dataclass
class RolloutBuffer:
    grids: np.ndarray            # (T, 3, 10, 3)
    tokens: np.ndarray           # (T, L) int64
    actions: np.ndarray          # (T,) int64
    rewards: np.ndarray          # (T,)
    dones: np.ndarray            # (T,) bool
    values: np.ndarray           # (T,)
    log_probs: np.ndarray        # (T,)
    bootstrap_value: float
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class UpdateStats:
    loss: float
    actor_loss: float
    critic_loss: float
    entropy: float
    mean_ratio: float
    clip_fraction: float


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """Backward-scan GAE: delta_t = r_t + gamma * v(s_{t+1}) * (1 - done) - v(s_t);
    advantages accumulate (gamma * lam)-discounted deltas, cut at episode ends."""
    n = len(buffer)
    adv = np.zeros(n, dtype=np.float64)
    running = 0.0
    next_value = buffer.bootstrap_value
    for t in range(n - 1, -1, -1):
        not_done = 0.0 if buffer.dones[t] else 1.0
        delta = buffer.rewards[t] + gamma * next_value * not_done - buffer.values[t]
        running = delta + gamma * lam * not_done * running
        adv[t] = running
        next_value = buffer.values[t]
    returns = adv + buffer.values
    buffer.advantages = adv
    buffer.returns = returns
    return adv, returns


def observe(state: EnvState, vocab: Vocabulary, instruction_mode: str
            ) -> Tuple[np.ndarray, np.ndarray]:
    grid = render_grid(state)
    seq = tokenize(instruction_text(state, instruction_mode), vocab)
    return grid, seq.ids


class RolloutCollector:
    """Steps the environment under the curriculum schedule, sampling
    actions from the model, and packs fixed-horizon rollout buffers."""

    def __init__(self, model: Model, schedule: CurriculumSchedule, vocab: Vocabulary,
                 instruction_mode: str, reward_mode: RewardMode, rng: np.random.Generator):
        self.model = model
        self.schedule = schedule
        self.vocab = vocab
        self.instruction_mode = instruction_mode
        self.reward_mode = reward_mode
        self.rng = rng
        self.episode_index = 0
        self.frames = 0
        self.state: Optional[EnvState] = None

    @property
    def exhausted(self) -> bool:
        return self.state is None and self.episode_index >= self.schedule.total_episodes

    def _ensure_episode(self) -> bool:
        if self.state is None:
            if self.episode_index >= self.schedule.total_episodes:
                return False
            target = schedule_number(self.schedule, self.episode_index)
            self.state = new_episode(target, self.reward_mode)
        return True

    def collect(self, horizon: int) -> Optional[RolloutBuffer]:
        """Collect up to ``horizon`` transitions; exactly ``horizon`` unless
        the curriculum runs out first. None once fully exhausted."""
        from .models import policy_value

        grids, tokens, actions, rewards, dones, values, log_probs = \
            [], [], [], [], [], [], []
        while len(actions) < horizon and self._ensure_episode():
            grid, ids = observe(self.state, self.vocab, self.instruction_mode)
            probs, value = policy_value(self.model, grid, ids)
            action, logp = sample_categorical(probs, self.rng)
            self.state, outcome = step(self.state, action)
            grids.append(grid)
            tokens.append(ids)
            actions.append(action)
            rewards.append(outcome.reward)
            dones.append(outcome.done)
            values.append(value)
            log_probs.append(logp)
            self.frames += 1
            if outcome.done:
                self.state = None
                self.episode_index += 1
        if not actions:
            return None
        if self.state is not None:
            grid, ids = observe(self.state, self.vocab, self.instruction_mode)
            _, bootstrap = policy_value(self.model, grid, ids)
        else:
            bootstrap = 0.0
        return RolloutBuffer(
            grids=np.asarray(grids),
            tokens=np.asarray(tokens, dtype=np.int64),
            actions=np.asarray(actions, dtype=np.int64),
            rewards=np.asarray(rewards, dtype=np.float64),
            dones=np.asarray(dones, dtype=bool),
            values=np.asarray(values, dtype=np.float64),
            log_probs=np.asarray(log_probs, dtype=np.float64),
            bootstrap_value=float(bootstrap),
        )


def ppo_loss(model: Model, grids: np.ndarray, tokens: np.ndarray, actions: np.ndarray,
             advantages: np.ndarray, returns: np.ndarray, log_probs_old: np.ndarray,
             cfg: PpoConfig) -> Tuple[nn.Tensor, UpdateStats]:
    """Combined loss to minimize: weighted critic regression minus the
    (optionally clipped) importance-weighted actor objective minus the
    entropy bonus."""
    logits, values = model.forward(grids, tokens)
    logp_all = nn.log_softmax(logits)
    logp = nn.take_along_last(logp_all, actions)
    ratio = nn.exp(logp - log_probs_old)
    adv = advantages
    if cfg.clip_epsilon is not None:
        eps = cfg.clip_epsilon
        surrogate = nn.minimum(nn.mul(ratio, adv),
                               nn.mul(nn.clip(ratio, 1.0 - eps, 1.0 + eps), adv))
        clipped = float(np.mean(np.abs(ratio.data - 1.0) > eps))
    else:
        surrogate = nn.mul(ratio, adv)
        clipped = 0.0
    actor = nn.tmean(surrogate)
    critic = nn.tmean(nn.square(values - returns))
    ent = nn.tmean(nn.mul(nn.tsum(nn.mul(nn.exp(logp_all), logp_all), axis=1), -1.0))
    loss = cfg.value_coef * critic - cfg.policy_coef * actor - cfg.entropy_coef * ent
    stats = UpdateStats(
        loss=float(loss.data),
        actor_loss=float(-actor.data),
        critic_loss=float(critic.data),
        entropy=float(ent.data),
        mean_ratio=float(ratio.data.mean()),
        clip_fraction=clipped,
    )
    return loss, stats


def update(model: Model, buffer: RolloutBuffer, cfg: PpoConfig, adam: AdamConfig,
           rng: np.random.Generator) -> UpdateStats:
    """Multi-epoch shuffled-minibatch PPO update; stats come from the
    final epoch's minibatches."""
    if buffer.advantages is None:
        compute_gae(buffer, cfg.gamma, cfg.lam)
    adv = buffer.advantages
    if cfg.normalize_advantages:
        adv = (adv - adv.mean()) / max(float(adv.std()), 1e-8)
    n = len(buffer)
    mb = min(cfg.minibatch_size, n)
    last_epoch: List[UpdateStats] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        stats_epoch: List[UpdateStats] = []
        for start in range(0, n - mb + 1, mb):
            idx = perm[start:start + mb]
            model.store.zero_grad()
            loss, stats = ppo_loss(
                model, buffer.grids[idx], buffer.tokens[idx], buffer.actions[idx],
                adv[idx], buffer.returns[idx], buffer.log_probs[idx], cfg)
            loss.backward()
            adam_step(model.store, adam, grad_clip=cfg.grad_clip)
            stats_epoch.append(stats)
        last_epoch = stats_epoch
    return UpdateStats(
        loss=float(np.mean([s.loss for s in last_epoch])),
        actor_loss=float(np.mean([s.actor_loss for s in last_epoch])),
        critic_loss=float(np.mean([s.critic_loss for s in last_epoch])),
        entropy=float(np.mean([s.entropy for s in last_epoch])),
        mean_ratio=float(np.mean([s.mean_ratio for s in last_epoch])),
        clip_fraction=float(np.mean([s.clip_fraction for s in last_epoch])),
    )
