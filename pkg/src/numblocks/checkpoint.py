"""Single-file JSON checkpoints with base64-encoded float64 arrays.

Serialization is canonical (sorted keys, fixed separators) so that
save -> load -> save reproduces an identical file byte for byte.
"""
from __future__ import annotations

import base64
import json
from typing import Any, Dict, Optional

import numpy as np

from .instructions import Vocabulary, build_vocabulary
from .models import Model, ModelConfig

FORMAT_VERSION = 1


def _encode(arr: np.ndarray) -> Dict[str, Any]:
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii"),
    }


def _decode(obj: Dict[str, Any]) -> np.ndarray:
    flat = np.frombuffer(base64.b64decode(obj["data"]), dtype="<f8")
    return flat.reshape(obj["shape"]).astype(np.float64)


def checkpoint_dict(model: Model, config: Optional[dict] = None, frames: int = 0,
                    rng_state: Optional[dict] = None, vocab: Optional[Vocabulary] = None,
                    status: str = "completed") -> dict:
    vocab = vocab or build_vocabulary()
    store = model.store
    return {
        "version": FORMAT_VERSION,
        "config": config or {},
        "status": status,
        "frames": frames,
        "rng_state": rng_state,
        "vocab_tokens": list(vocab.tokens),
        "max_seq_len": vocab.max_seq_len,
        "architecture": {
            "kind": model.kind,
            "embed_dim": model.cfg.embed_dim,
            "attn_layers": model.cfg.attn_layers,
            "attn_heads": model.cfg.attn_heads,
            "ff_dim": model.cfg.ff_dim,
            "visual_feature_dim": model.cfg.visual_feature_dim,
            "hidden": list(model.cfg.hidden) if model.cfg.hidden else None,
        },
        "adam_t": store.t,
        "params": {name: _encode(p.data) for name, p in store.params.items()},
        "adam_m": {name: _encode(m) for name, m in store.m.items()},
        "adam_v": {name: _encode(v) for name, v in store.v.items()},
    }


def dumps(checkpoint: dict) -> str:
    return json.dumps(checkpoint, sort_keys=True, separators=(",", ":")) + "\n"


def save(checkpoint: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(checkpoint))


def load(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    return doc


def restore_model(doc: dict, check_vocab: bool = True) -> Model:
    """Rebuild the model held in a loaded checkpoint document."""
    vocab = Vocabulary(tokens=tuple(doc["vocab_tokens"]), max_seq_len=doc["max_seq_len"])
    if check_vocab:
        current = build_vocabulary()
        if current.tokens != vocab.tokens or current.max_seq_len != vocab.max_seq_len:
            raise ValueError(
                "checkpoint vocabulary does not match this code version's vocabulary"
            )
    arch = doc["architecture"]
    cfg = ModelConfig(
        embed_dim=arch["embed_dim"],
        attn_layers=arch["attn_layers"],
        attn_heads=arch["attn_heads"],
        ff_dim=arch["ff_dim"],
        visual_feature_dim=arch["visual_feature_dim"],
        hidden=tuple(arch["hidden"]) if arch.get("hidden") else None,
    )
    model = Model(arch["kind"], vocab, cfg, seed=0)
    if set(doc["params"]) != set(model.store.params):
        raise ValueError("checkpoint parameters do not match the architecture")
    for name, obj in doc["params"].items():
        arr = _decode(obj)
        if arr.shape != model.store.params[name].data.shape:
            raise ValueError(f"shape mismatch for parameter {name!r}")
        model.store.params[name].data = arr
        model.store.m[name] = _decode(doc["adam_m"][name])
        model.store.v[name] = _decode(doc["adam_v"][name])
    model.store.t = doc["adam_t"]
    return model
