# Adam with bias correction

from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np

from core.utils.errors import ConfigurationError, ShapeError


@dataclass(frozen=True)
class AdamState:
    step_count: int
    first_moment: Tuple[np.ndarray, ...]
    second_moment: Tuple[np.ndarray, ...]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigurationError(f"Adam learning rate must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError(f"Adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")


def adam_init(params: List[np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    zeros = tuple(np.zeros_like(p, dtype=np.float64) for p in params)
    return AdamState(0, zeros, tuple(z.copy() for z in zeros), lr, beta1, beta2, eps)


def adam_step(params: List[np.ndarray], grads: List[np.ndarray], state: AdamState):
    """One Adam update; returns (new params, new state) and leaves inputs untouched."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params, grads and optimizer state hold different numbers of arrays")
    t = state.step_count + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, replace(state, step_count=t, first_moment=tuple(new_m), second_moment=tuple(new_v))
