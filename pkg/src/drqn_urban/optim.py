from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class NonFiniteGradientError(ValueError):
    def __init__(self, index):
        super().__init__(f"non-finite gradient at parameter index {index}; update rejected")
        self.index = index


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, n, dtype=np.float32, **hyper):
        return cls(np.zeros(n, dtype), np.zeros(n, dtype), 0, **hyper)


def adam_update(params, grads, state: AdamState):
    """One bias-corrected Adam step. Returns ``(new_params, new_state)``;
    inputs are not modified."""
    bad = ~np.isfinite(grads)
    if bad.any():
        raise NonFiniteGradientError(int(np.flatnonzero(bad)[0]))
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.m + (1.0 - b1) * grads
    v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new = params - (state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(params.dtype)
    return new, replace(state, m=m.astype(state.m.dtype), v=v.astype(state.v.dtype), t=t)
