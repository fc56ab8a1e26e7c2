"""SGD with momentum and the warmup + cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeError
from .tensor import Tensor


@dataclass
class OptimizerState:
    """Momentum SGD state. Buffers are keyed like the parameter dict."""

    lr: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ContractError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ContractError(f"weight_decay must be >= 0, got {self.weight_decay}")


def sgd_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
             state: OptimizerState) -> dict[str, Tensor]:
    """v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.

    Weight decay is folded into the momentum buffer (plain L2, not decoupled).
    Updates parameters in place and returns them.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.data.shape} for '{name}'")
        buf = state.buffers.get(name)
        if buf is None:
            buf = np.zeros_like(p.data)
            state.buffers[name] = buf
        buf *= np.float32(state.momentum)
        buf += g
        if state.weight_decay:
            buf += np.float32(state.weight_decay) * p.data
        p.data -= np.float32(state.lr) * buf
    return params


def collect_grads(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Grad map after backward(); parameters off the graph get zeros."""
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup from 0 to base_lr, then cosine decay to 0."""

    base_lr: float
    warmup_epochs: int = 0
    total_epochs: int = 1

    def __post_init__(self):
        if self.total_epochs <= 0:
            raise ContractError("total_epochs must be positive")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ContractError("warmup_epochs must be in [0, total_epochs)")


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """Learning rate for a 0-indexed epoch."""
    if not 0 <= epoch < schedule.total_epochs:
        raise ContractError(
            f"epoch {epoch} outside [0, {schedule.total_epochs})"
        )
    if epoch < schedule.warmup_epochs:
        return schedule.base_lr * epoch / schedule.warmup_epochs
    span = schedule.total_epochs - schedule.warmup_epochs
    t = (epoch - schedule.warmup_epochs) / span
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * t))
