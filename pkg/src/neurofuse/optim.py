"""Adam with decoupled weight decay.

The decay is applied directly to the parameters (not folded into the
gradient), so a zero-gradient step shrinks a parameter by exactly
(1 - lr * weight_decay).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    """Per-parameter moment buffers plus the shared step counter."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam over a named parameter dict."""

    def __init__(
        self,
        params: dict[str, Tensor],
        learning_rate: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = dict(params)
        self.state = AdamState(learning_rate, beta1, beta2, epsilon, weight_decay)
        for name, p in self.params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        s = self.state
        s.t += 1
        bc1 = 1.0 - s.beta1**s.t
        bc2 = 1.0 - s.beta2**s.t
        for name, p in self.params.items():
            if p.grad is None:
                raise RuntimeError(f"adam_step: parameter {name!r} has no gradient")
            if p.grad.shape != p.data.shape:
                raise RuntimeError(
                    f"adam_step: gradient shape {p.grad.shape} does not match "
                    f"parameter {name!r} of shape {p.data.shape}"
                )
            m = s.m[name]
            v = s.v[name]
            m *= s.beta1
            m += (1.0 - s.beta1) * p.grad
            v *= s.beta2
            v += (1.0 - s.beta2) * p.grad * p.grad
            if s.weight_decay:
                p.data *= 1.0 - s.learning_rate * s.weight_decay
            p.data -= s.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + s.epsilon)


def adam_step(params: dict[str, Tensor], state: AdamState) -> AdamState:
    """Single functional-style update for callers that manage state themselves."""
    opt = Adam.__new__(Adam)
    opt.params = dict(params)
    opt.state = state
    for name, p in opt.params.items():
        state.m.setdefault(name, np.zeros_like(p.data))
        state.v.setdefault(name, np.zeros_like(p.data))
    opt.step()
    return state
