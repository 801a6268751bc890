from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ParameterSet


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: ParameterSet,
    state: AdamState,
    learning_rate: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    epsilon: float = 1e-8,
) -> ParameterSet:
    """One bias-corrected Adam update, in place, using the current gradients.

    Frozen parameters and frozen rows are skipped.
    """
    b1, b2 = betas
    state.step += 1
    t = state.step
    for name, tensor in params.items():
        g = params.trainable_grad(name)
        if g is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        tensor.data -= learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)
    return params
