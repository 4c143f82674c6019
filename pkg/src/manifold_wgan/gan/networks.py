"""MLP generator/critic, Adam, and flat checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..imaging import atomic_write_bytes

LEAKY_SLOPE = 0.2


class MLP:
    """Fully connected net: leaky ReLU between layers, linear output."""

    def __init__(self, sizes, rng: np.random.Generator | None = None, slope: float = LEAKY_SLOPE):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        self.slope = slope
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[Tensor] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / ((1.0 + slope**2) * fan_in))
            self.params.append(Tensor(w, requires_grad=True))
            self.params.append(Tensor(np.zeros(fan_out), requires_grad=True))

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def __call__(self, x) -> Tensor:
        h = ag.as_tensor(x)
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise ag.ShapeError(f"network expects (batch, {self.in_dim}) input, got {h.shape}")
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            h = ag.matmul(h, self.params[2 * k]) + self.params[2 * k + 1]
            if k < n_layers - 1:
                h = ag.leaky_relu(h, self.slope)
        return h

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != sum(p.size for p in self.params):
            raise ValueError(f"flat parameter vector has {flat.size} entries, need "
                             f"{sum(p.size for p in self.params)}")
        pos = 0
        for p in self.params:
            p.data = flat[pos:pos + p.size].reshape(p.shape).copy()
            pos += p.size

    def zero_(self) -> "MLP":
        for p in self.params:
            p.data = np.zeros_like(p.data)
        return self


# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params])


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, in place on ``params`` (Tensors or arrays)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for k, (p, g) in enumerate(zip(params, grads)):
        g = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
        data = p.data if isinstance(p, Tensor) else p
        if g.shape != data.shape:
            raise ag.ShapeError(f"gradient shape {g.shape} != parameter shape {data.shape}")
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        update = lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + eps)
        if isinstance(p, Tensor):
            p.data = data - update
        else:
            p -= update
    return state


class Adam:
    def __init__(self, params, lr: float = 2e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.state = AdamState.zeros_like(self.params)

    def step(self, grads, lr: float | None = None) -> None:
        adam_step(self.params, grads, self.state, self.lr if lr is None else lr,
                  self.betas[0], self.betas[1], self.eps)


def linear_decay(lr: float, iteration: int, budget: int) -> float:
    """Learning rate decayed linearly from ``lr`` at iteration 0 to 0 at ``budget``."""
    if budget <= 0:
        return lr
    return lr * max(0.0, 1.0 - iteration / budget)


# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    generator: np.ndarray
    critic: np.ndarray
    meta: dict = field(default_factory=dict)


def save_checkpoint(path, generator: MLP, critic: MLP, meta: dict) -> None:
    """Flat little-endian float64 payload (generator then critic) plus a JSON sidecar."""
    path = Path(path)
    g, d = generator.get_flat(), critic.get_flat()
    sidecar = dict(meta)
    sidecar.update({
        "generator_sizes": generator.sizes,
        "critic_sizes": critic.sizes,
        "generator_shapes": [list(p.shape) for p in generator.params],
        "critic_shapes": [list(p.shape) for p in critic.params],
        "generator_count": int(g.size),
        "critic_count": int(d.size),
        "dtype": "<f8",
    })
    atomic_write_bytes(path, np.concatenate([g, d]).astype("<f8").tobytes())
    atomic_write_bytes(path.with_suffix(".json"), json.dumps(sidecar, indent=2, sort_keys=True).encode())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
    ng, nd = meta["generator_count"], meta["critic_count"]
    if flat.size != ng + nd:
        raise ValueError(f"checkpoint payload has {flat.size} values, sidecar says {ng + nd}")
    return Checkpoint(flat[:ng].copy(), flat[ng:].copy(), meta)
