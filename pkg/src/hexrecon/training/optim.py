"""Adam with per-tensor moments and step counters."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: dict = field(default_factory=dict)
    skipped: int = 0

    def reset(self, *names: str) -> None:
        """Drop the moments of ``names`` (all tensors when none are given)."""
        for k in names or list(self.m):
            self.m.pop(k, None)
            self.v.pop(k, None)
            self.step.pop(k, None)


def adam_step(state: AdamState, params: dict, grads: dict, lr: float) -> int:
    """Update every array in ``params`` in place; return how many tensors were skipped.

    Tensors whose gradient holds a non-finite value keep their value and moments.
    """
    skipped = 0
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            skipped += 1
            state.skipped += 1
            log.warning("adam: non-finite gradient for %s, step skipped (total %d)", name, state.skipped)
            continue
        if name not in state.m or state.m[name].shape != p.shape:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
            state.step[name] = 0
        state.step[name] += 1
        k = state.step[name]
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / (1.0 - state.beta1 ** k)
        vhat = v / (1.0 - state.beta2 ** k)
        p -= lr * mhat / (np.sqrt(vhat) + state.eps)
    return skipped
