"""Minimal reverse-mode autodiff over float64 numpy arrays, plus Adam and
a finite-difference gradient checker.

Everything is deterministic: no hidden global RNG, single-threaded math on
small matrices. Graphs are built by composing ops on ``Tensor`` and torn
down after ``backward``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int]


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data: ArrayLike, parents: Tuple["Tensor", ...] = (),
                 backward: Optional[Callable[[np.ndarray], None]] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        topo: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, (a, b))

    def back(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    out._backward = back
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, (a, b))

    def back(g):
        a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    out._backward = back
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data @ b.data, (a, b))

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        a.accumulate(_unbroadcast(ga, a.data.shape))
        b.accumulate(_unbroadcast(gb, b.data.shape))

    out._backward = back
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, (a,))
    out._backward = lambda g: a.accumulate(g * (1.0 - y * y))
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y, (a,))
    out._backward = lambda g: a.accumulate(g * y)
    return out


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data), (a,))
    out._backward = lambda g: a.accumulate(g / a.data)
    return out


def square(a: Tensor) -> Tensor:
    out = Tensor(a.data * a.data, (a,))
    out._backward = lambda g: a.accumulate(g * 2.0 * a.data)
    return out


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def back(g):
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        a.accumulate(np.broadcast_to(g, a.data.shape).copy())

    out._backward = back
    return out


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else (
        np.prod([a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
    )
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape), (a,))
    out._backward = lambda g: a.accumulate(g.reshape(a.data.shape))
    return out


def transpose(a: Tensor, axes) -> Tensor:
    out = Tensor(a.data.transpose(axes), (a,))
    inv = np.argsort(axes)
    out._backward = lambda g: a.accumulate(g.transpose(inv))
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]

    def back(g):
        splits = np.cumsum(sizes)[:-1]
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t.accumulate(piece)

    out._backward = back
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    out = Tensor(table.data[ids], (table,))

    def back(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids, g)

    out._backward = back
    return out


def take_along_last(a: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one entry along the last axis per row; idx shape = a.shape[:-1]."""
    picked = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]
    out = Tensor(picked, (a,))

    def back(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
        a.accumulate(full)

    out._backward = back
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, (a,))

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        a.accumulate(y * (g - dot))

    out._backward = back
    return out


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    out = Tensor(y, (a,))

    def back(g):
        p = np.exp(y)
        a.accumulate(g - p * g.sum(axis=axis, keepdims=True))

    out._backward = back
    return out


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(a.data, lo, hi), (a,))
    mask = (a.data > lo) & (a.data < hi)
    out._backward = lambda g: a.accumulate(g * mask)
    return out


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data), (a, b))

    def back(g):
        a.accumulate(_unbroadcast(g * take_a, a.data.shape))
        b.accumulate(_unbroadcast(g * ~take_a, b.data.shape))

    out._backward = back
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data, (x, gain, bias))
    d = x.data.shape[-1]

    def back(g):
        gain.accumulate(_unbroadcast(g * xhat, gain.data.shape))
        bias.accumulate(_unbroadcast(g, bias.data.shape))
        gx_hat = g * gain.data
        term = gx_hat - gx_hat.mean(axis=-1, keepdims=True) \
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        x.accumulate(term * inv)

    out._backward = back
    return out


@dataclass
class AdamConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1) or self.eps <= 0:
            raise ValueError("invalid Adam configuration")


class ParamStore:
    """Named parameter tensors plus per-parameter Adam moments."""

    def __init__(self):
        self.params: Dict[str, Tensor] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Tensor(np.asarray(array, dtype=np.float64))
        self.params[name] = p
        self.m[name] = np.zeros_like(p.data)
        self.v[name] = np.zeros_like(p.data)
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def num_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, p in self.params.items():
            out.add(name, p.data.copy())
            out.m[name] = self.m[name].copy()
            out.v[name] = self.v[name].copy()
        out.t = self.t
        return out


def global_grad_norm(store: ParamStore) -> float:
    total = 0.0
    for p in store.params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return math.sqrt(total)


def adam_step(store: ParamStore, cfg: AdamConfig, grad_clip: Optional[float] = None) -> None:
    """Standard bias-corrected Adam over every parameter with a gradient."""
    scale = 1.0
    if grad_clip is not None:
        norm = global_grad_norm(store)
        if norm > grad_clip:
            scale = grad_clip / norm
    store.t += 1
    bc1 = 1.0 - cfg.beta1 ** store.t
    bc2 = 1.0 - cfg.beta2 ** store.t
    for name, p in store.params.items():
        g = np.zeros_like(p.data) if p.grad is None else p.grad * scale
        m = store.m[name]
        v = store.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p.data -= cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def entropy(dist: np.ndarray) -> float:
    """Shannon entropy of a probability vector, with 0 * log 0 := 0."""
    p = np.asarray(dist, dtype=np.float64)
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("not a probability distribution")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def sample_categorical(dist: np.ndarray, rng: np.random.Generator) -> Tuple[int, float]:
    """Draw an index from a distribution; returns (index, log-probability).
    Reproducible: consumes exactly one draw from the supplied generator."""
    p = np.asarray(dist, dtype=np.float64)
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    idx = min(idx, len(p) - 1)
    return idx, float(np.log(p[idx]))


def gradcheck(fn: Callable[[], Tensor], store: ParamStore, h: float = 1e-5,
              names: Optional[Sequence[str]] = None) -> float:
    """Max relative error between analytic gradients of a scalar loss and
    central finite differences over the named parameters."""
    store.zero_grad()
    loss = fn()
    if loss.data.shape != ():
        raise ValueError("gradcheck requires a scalar loss")
    loss.backward()
    analytic = {n: (np.zeros_like(store[n].data) if store[n].grad is None
                    else store[n].grad.copy())
                for n in (names or store.params)}
    worst = 0.0
    for name, grad in analytic.items():
        p = store[name]
        flat = p.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(fn().data)
            flat[i] = orig - h
            lo = float(fn().data)
            flat[i] = orig
            num = (hi - lo) / (2.0 * h)
            denom = max(1.0, abs(num), abs(gflat[i]))
            worst = max(worst, abs(num - gflat[i]) / denom)
    return worst
