"""Central-difference verification of backward passes."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor


def _scalarize(out: Tensor, probe: Optional[np.ndarray]) -> float:
    if out.data.size == 1:
        return float(out.data)
    return float(np.sum(out.data * probe))


def finite_diff_check(op: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
                      n_coords: int = 32, seed: int = 0,
                      coords: Optional[Sequence[Sequence[tuple]]] = None) -> float:
    """Compare analytic and central-difference gradients of ``op``.

    ``op`` maps the input tensors to an output tensor. Non-scalar outputs are
    reduced with a fixed random projection so every output element takes
    part. For every input with ``requires_grad`` set, up to ``n_coords``
    random coordinates (all of them for small inputs) are perturbed by
    ``+-eps``.

    Returns the maximum relative error ``|a - n| / max(|a|, |n|, floor)``,
    where ``floor = 1e-8 * max(1, max|a|)`` keeps exact zeros comparable.
    """
    if eps <= 0:
        raise ValueError("finite_diff_check: eps must be positive")
    # own stream, so the probe never coincides with a caller's default_rng(seed) draws
    rng = np.random.default_rng([0x6663, seed])
    out = op(*inputs)
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("finite_diff_check: op produced non-finite output")
    probe = None if out.data.size == 1 else rng.standard_normal(out.shape)

    for t in inputs:
        t.grad = None
    loss = out if probe is None else _project(out, probe)
    loss.backward()
    analytic = [None if t.grad is None else t.grad.copy() for t in inputs]

    worst = 0.0
    for k, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        grad = analytic[k] if analytic[k] is not None else np.zeros_like(t.data)
        if coords is not None:
            picked = [tuple(c) for c in coords[k]]
        elif t.data.size <= n_coords:
            picked = list(np.ndindex(t.shape))
        else:
            flat = rng.choice(t.data.size, size=n_coords, replace=False)
            picked = [np.unravel_index(i, t.shape) for i in flat]
        floor = 1e-8 * max(1.0, float(np.max(np.abs(grad))) if grad.size else 1.0)
        for idx in picked:
            orig = t.data[idx].copy()
            t.data[idx] = orig + eps
            up = _scalarize(op(*inputs), probe)
            t.data[idx] = orig - eps
            down = _scalarize(op(*inputs), probe)
            t.data[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError("finite_diff_check: non-finite output under perturbation")
            numeric = (up - down) / (2 * eps)
            a = float(grad[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst


def _project(out: Tensor, probe: np.ndarray) -> Tensor:
    def backward(g):
        out._accumulate(g * probe)

    return Tensor._make(np.asarray(np.sum(out.data * probe)), (out,), backward)
