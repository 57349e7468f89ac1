"""Adam on the flat parameter vector, as a pure function of (model, state)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Model, ModelError


@dataclass(frozen=True)
class OptimizerState:
    step: int
    m: np.ndarray
    v: np.ndarray


def init_optimizer(model: Model) -> OptimizerState:
    n = model.to_vector().size
    return OptimizerState(step=0, m=np.zeros(n), v=np.zeros(n))


def adam_step(
    model: Model,
    grads: np.ndarray,
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update; returns a new (model, state) pair."""
    vec = model.to_vector()
    grads = np.asarray(grads, dtype=float)
    if grads.shape != vec.shape:
        raise ModelError(
            f"gradient shape {grads.shape} does not match parameters {vec.shape}"
        )
    if state.m.shape != vec.shape or state.v.shape != vec.shape:
        raise ModelError("optimizer state does not match parameter layout")
    if not np.all(np.isfinite(grads)):
        raise ModelError("non-finite gradient entries")
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    new_vec = vec - lr * m_hat / (np.sqrt(v_hat) + eps)
    return Model.from_vector(model.config, new_vec), OptimizerState(step, m, v)
