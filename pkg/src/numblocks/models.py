"""Policy/value architectures.

Three desk-scale variants share a 6-way policy head and a scalar value
head: a visual-only MLP over the symbolic grid, a language-only network
over mean-pooled token embeddings, and an attention encoder over tokens
concatenated with an encoded grid. Policy and value heads are
zero-initialized so a fresh model is exactly uniform with value 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import neural as nn
from .env import GRID_SHAPE
from .instructions import PAD_ID, Vocabulary
from .neural import ParamStore, Tensor

VISUAL_ONLY = "visual"
DENSE_LANGUAGE = "dense"
ATTENTION = "attention"
MODEL_KINDS = (VISUAL_ONLY, DENSE_LANGUAGE, ATTENTION)

N_ACTIONS = 6
GRID_SIZE = int(np.prod(GRID_SHAPE))


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32
    attn_layers: int = 2
    attn_heads: int = 2
    ff_dim: int = 64
    visual_feature_dim: int = 32
    hidden: Optional[Tuple[int, ...]] = None   # per-kind default when None
    parity_target: Optional[int] = None

    def __post_init__(self):
        if min(self.embed_dim, self.attn_layers, self.attn_heads, self.ff_dim,
               self.visual_feature_dim) <= 0:
            raise ValueError("model dimensions must be positive")
        if self.embed_dim % self.attn_heads != 0:
            raise ValueError("attention heads must divide embed_dim")

    def hidden_for(self, kind: str) -> Tuple[int, ...]:
        if self.hidden is not None:
            return tuple(self.hidden)
        # dense-language trunk is slightly wider than the visual one to
        # keep its trainable-parameter count within 25% of the attention model
        return (160, 160) if kind == DENSE_LANGUAGE else (128, 128)


def _init_dense(store: ParamStore, name: str, fan_in: int, fan_out: int,
                rng: np.random.Generator, zero: bool = False) -> None:
    if zero:
        w = np.zeros((fan_in, fan_out))
    else:
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
    store.add(f"{name}.w", w)
    store.add(f"{name}.b", np.zeros(fan_out))


def _dense(store: ParamStore, name: str, x: Tensor) -> Tensor:
    return nn.matmul(x, store[f"{name}.w"]) + store[f"{name}.b"]


class Model:
    """A ParamStore plus the forward wiring for one architecture."""

    def __init__(self, kind: str, vocab: Vocabulary, cfg: ModelConfig = ModelConfig(),
                 seed: int = 0):
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.cfg = cfg
        self.vocab_size = vocab.size
        self.max_seq_len = vocab.max_seq_len
        self.store = ParamStore()
        self._build(np.random.Generator(np.random.PCG64(seed)))

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        store = self.store
        hidden = cfg.hidden_for(self.kind)
        if self.kind == VISUAL_ONLY:
            trunk_in = GRID_SIZE
            for i, width in enumerate(hidden):
                _init_dense(store, f"trunk{i}", trunk_in, width, rng)
                trunk_in = width
        elif self.kind == DENSE_LANGUAGE:
            store.add("embed", self._embed_init(rng))
            trunk_in = cfg.embed_dim
            for i, width in enumerate(hidden):
                _init_dense(store, f"trunk{i}", trunk_in, width, rng)
                trunk_in = width
        else:
            store.add("embed", self._embed_init(rng))
            store.add("pos", rng.normal(0.0, 0.02, size=(self.max_seq_len, cfg.embed_dim)))
            for i in range(cfg.attn_layers):
                d = cfg.embed_dim
                for proj in ("q", "k", "v", "o"):
                    _init_dense(store, f"blk{i}.{proj}", d, d, rng)
                store.add(f"blk{i}.ln1.g", np.ones(d))
                store.add(f"blk{i}.ln1.b", np.zeros(d))
                _init_dense(store, f"blk{i}.ff1", d, cfg.ff_dim, rng)
                _init_dense(store, f"blk{i}.ff2", cfg.ff_dim, d, rng)
                store.add(f"blk{i}.ln2.g", np.ones(d))
                store.add(f"blk{i}.ln2.b", np.zeros(d))
            _init_dense(store, "grid_enc", GRID_SIZE, cfg.visual_feature_dim, rng)
            combiner = cfg.hidden_for(VISUAL_ONLY)[0]
            _init_dense(store, "combine", cfg.embed_dim + cfg.visual_feature_dim,
                        combiner, rng)
            trunk_in = combiner
        _init_dense(store, "policy", trunk_in, N_ACTIONS, rng, zero=True)
        _init_dense(store, "value", trunk_in, 1, rng, zero=True)

    def _embed_init(self, rng: np.random.Generator) -> np.ndarray:
        table = rng.normal(0.0, 0.5, size=(self.vocab_size, self.cfg.embed_dim))
        table[PAD_ID] = 0.0
        return table

    def forward(self, grids: np.ndarray, tokens: np.ndarray) -> Tuple[Tensor, Tensor]:
        """Batched forward pass.

        grids: (B, 3, 10, 3) float; tokens: (B, L) int ids.
        Returns (logits (B, 6), values (B,)).
        """
        if self.kind == VISUAL_ONLY:
            feats = self._trunk(Tensor(grids.reshape(len(grids), GRID_SIZE)))
        elif self.kind == DENSE_LANGUAGE:
            pooled = self._masked_mean(nn.embedding(self.store["embed"], tokens), tokens)
            feats = self._trunk(pooled)
        else:
            feats = self._attention_features(grids, tokens)
        logits = _dense(self.store, "policy", feats)
        value = nn.reshape(_dense(self.store, "value", feats), (len(grids),))
        return logits, value

    def _trunk(self, x: Tensor) -> Tensor:
        for i in range(len(self.cfg.hidden_for(self.kind))):
            x = nn.tanh(_dense(self.store, f"trunk{i}", x))
        return x

    @staticmethod
    def _masked_mean(emb: Tensor, tokens: np.ndarray) -> Tensor:
        mask = (tokens != PAD_ID).astype(np.float64)
        counts = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
        summed = nn.tsum(nn.mul(emb, mask[:, :, None]), axis=1)
        return nn.mul(summed, 1.0 / counts)

    def _attention_features(self, grids: np.ndarray, tokens: np.ndarray) -> Tensor:
        cfg = self.cfg
        store = self.store
        x = nn.embedding(store["embed"], tokens) + store["pos"]
        b, length = tokens.shape
        heads, dh = cfg.attn_heads, cfg.embed_dim // cfg.attn_heads
        for i in range(cfg.attn_layers):
            q = self._split_heads(_dense(store, f"blk{i}.q", x), b, length, heads, dh)
            k = self._split_heads(_dense(store, f"blk{i}.k", x), b, length, heads, dh)
            v = self._split_heads(_dense(store, f"blk{i}.v", x), b, length, heads, dh)
            scores = nn.mul(nn.matmul(q, nn.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
            mixed = nn.matmul(nn.softmax(scores), v)
            mixed = nn.reshape(nn.transpose(mixed, (0, 2, 1, 3)), (b, length, cfg.embed_dim))
            x = nn.layer_norm(x + _dense(store, f"blk{i}.o", mixed),
                              store[f"blk{i}.ln1.g"], store[f"blk{i}.ln1.b"])
            ff = _dense(store, f"blk{i}.ff2", nn.tanh(_dense(store, f"blk{i}.ff1", x)))
            x = nn.layer_norm(x + ff, store[f"blk{i}.ln2.g"], store[f"blk{i}.ln2.b"])
        pooled = self._masked_mean(x, tokens)
        grid_feat = nn.tanh(_dense(store, "grid_enc",
                                   Tensor(grids.reshape(b, GRID_SIZE))))
        return nn.tanh(_dense(store, "combine", nn.concat([pooled, grid_feat], axis=1)))

    @staticmethod
    def _split_heads(x: Tensor, b: int, length: int, heads: int, dh: int) -> Tensor:
        return nn.transpose(nn.reshape(x, (b, length, heads, dh)), (0, 2, 1, 3))


def build_model(kind: str, vocab: Vocabulary, cfg: ModelConfig = ModelConfig(),
                seed: int = 0) -> Model:
    return Model(kind, vocab, cfg, seed)


def policy_value(model: Model, grid: np.ndarray, tokens: np.ndarray) -> Tuple[np.ndarray, float]:
    """Single-observation convenience: action probabilities and state value."""
    logits, value = model.forward(grid[None], tokens[None])
    probs = np.exp(logits.data[0] - logits.data[0].max())
    probs /= probs.sum()
    return probs, float(value.data[0])
