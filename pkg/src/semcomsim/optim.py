"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Module


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict, grads: dict, state: AdamWState, lr: float = 1e-4,
               betas: tuple = (0.9, 0.999), weight_decay: float = 0.0, eps: float = 1e-8) -> AdamWState:
    """One AdamW update, in place on ``params`` (name -> ndarray).

    Parameters whose gradient is ``None`` are left untouched, but still see
    weight decay so that decay remains decoupled from the loss.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
    if set(grads) - set(params):
        raise KeyError(f"gradients for unknown parameters: {sorted(set(grads) - set(params))}")
    b1, b2 = betas
    state.step += 1
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        if weight_decay:
            p -= lr * weight_decay * p
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


class AdamW:
    """Stateful wrapper that steps every parameter of a :class:`Module`."""

    def __init__(self, module: Module, lr: float = 1e-4, betas=(0.9, 0.999),
                 weight_decay: float = 0.0, eps: float = 1e-8):
        self.module = module
        self.lr = lr
        self.betas = tuple(betas)
        self.weight_decay = weight_decay
        self.eps = eps
        self.state = AdamWState()

    def step(self) -> None:
        named = self.module.named_parameters()
        params = {k: p.data for k, p in named.items()}
        grads = {k: p.grad for k, p in named.items()}
        adamw_step(params, grads, self.state, self.lr, self.betas, self.weight_decay, self.eps)

    def zero_grad(self) -> None:
        self.module.zero_grad()

    def reset_rows(self, name: str, rows) -> None:
        """Zero the moments of selected rows (used when codebook rows are re-seeded)."""
        if name in self.state.m:
            self.state.m[name][rows] = 0.0
            self.state.v[name][rows] = 0.0
