"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor


class AdamW:
    """Decoupled-weight-decay Adam over a named parameter dict.

    The decay term is applied to the parameter value itself, not folded into
    the gradient. Moment buffers are float32 (or the parameter dtype) and are
    zero-initialized on the first step.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        if lr < 0:
            raise ValueError(f"invalid learning rate {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.exp_avg = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.exp_avg_sq = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float | None = None) -> None:
        """Apply one update from the gradients currently stored on the params."""
        if lr is None:
            lr = self.lr
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
            m = self.exp_avg[name]
            v = self.exp_avg_sq[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= lr * update

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment buffers under stable names, for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for name in self.params:
            out[f"opt.exp_avg.{name}"] = self.exp_avg[name]
            out[f"opt.exp_avg_sq.{name}"] = self.exp_avg_sq[name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for name, p in self.params.items():
            m = arrays[f"opt.exp_avg.{name}"]
            v = arrays[f"opt.exp_avg_sq.{name}"]
            if m.shape != p.data.shape or v.shape != p.data.shape:
                raise ValueError(f"optimizer state shape mismatch for '{name}'")
            self.exp_avg[name] = m.astype(p.data.dtype)
            self.exp_avg_sq[name] = v.astype(p.data.dtype)
        self.step_count = step_count


def global_norm(grads) -> float:
    total = 0.0
    for g in grads:
        if g is not None:
            total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return math.sqrt(total)


def clip_global_norm(grads, max_norm: float = 2.0) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm.

    Returns the pre-clip norm. Gradients at or below the threshold are left
    untouched.
    """
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            if g is not None:
                g *= scale
    return norm
