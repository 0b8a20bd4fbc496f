"""Adam / AdamW over lists of numpy arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adamw_update(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One AdamW step. Returns new arrays; inputs are left untouched.

    Weight decay is decoupled: ``p <- p - lr * wd * p`` is applied to the
    parameters directly and never enters the moment estimates. With
    ``weight_decay=0`` this is plain Adam.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    b1, b2 = betas
    t = state.t + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        p = p - lr * weight_decay * p
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_p.append(p)
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)
