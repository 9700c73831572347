"""Adam with coupled weight decay (decay added to the gradient)."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NumericalError


class AdamState:
    def __init__(self, param_count: int, lr: float = 1e-4, weight_decay: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8, dtype=np.float32):
        self.step = 0
        self.m = np.zeros(param_count, dtype=dtype)
        self.v = np.zeros(param_count, dtype=dtype)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> None:
    """One in-place Adam update with bias-corrected moments."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ConfigError(
            f"size mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    if not np.isfinite(grads).all():
        raise NumericalError("non-finite gradient passed to adam_step")
    dt = params.dtype.type
    g = grads if state.weight_decay == 0.0 else grads + dt(state.weight_decay) * params
    state.step += 1
    b1, b2 = dt(state.beta1), dt(state.beta2)
    state.m *= b1
    state.m += (dt(1.0) - b1) * g
    state.v *= b2
    state.v += (dt(1.0) - b2) * g * g
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    m_hat = state.m / dt(bias1)
    v_hat = state.v / dt(bias2)
    params -= dt(state.lr) * m_hat / (np.sqrt(v_hat) + dt(state.eps))
