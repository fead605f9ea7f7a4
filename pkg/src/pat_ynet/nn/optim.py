"""Adam optimizer over a named parameter collection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np


@dataclass
class AdamState:
    """Moment estimates and step counter for :func:`adam_step`.

    Defaults for the decay rates and epsilon follow Kingma & Ba.
    """

    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray], **hyper) -> "AdamState":
        state = cls(**hyper)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place.

    Parameters without an entry in ``grads`` are treated as having a zero
    gradient, so their moments still decay.
    """
    for name, p in params.items():
        if name not in state.m:
            raise KeyError(f"adam_step: no optimizer state for parameter {name!r}")
        if state.m[name].shape != p.shape:
            raise ValueError(f"adam_step: state shape {state.m[name].shape} != parameter shape {p.shape}")
        g = grads.get(name)
        if g is not None and np.shape(g) != p.shape:
            raise ValueError(f"adam_step: gradient for {name!r} has shape {np.shape(g)}, expected {p.shape}")
    unknown = set(grads) - set(params)
    if unknown:
        raise KeyError(f"adam_step: gradients for unknown parameters {sorted(unknown)}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        m, v = state.m[name], state.v[name]
        g = grads.get(name)
        m *= b1
        v *= b2
        if g is not None:
            m += (1.0 - b1) * g
            v += (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
