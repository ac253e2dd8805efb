"""Adam with a step-halving learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr0: float = 1e-3
    halving_period: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr(self, epoch):
        """``lr0 * 0.5 ** floor(epoch / halving_period)``."""
        if self.halving_period <= 0:
            return self.lr0
        return self.lr0 * 0.5 ** (int(epoch) // self.halving_period)


def _as_real(a):
    # complex parameters are optimized as (re, im) pairs
    return a.view(np.float64) if np.iscomplexobj(a) else a


def adam_step(state, params, grads, epoch=0, ids=None):
    """Apply one bias-corrected Adam update to ``params`` in place.

    ``params`` and ``grads`` are dicts keyed by parameter name. A non-finite
    gradient aborts before any parameter is touched.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            pid = ids[name] if ids else name
            raise FloatingPointError(f"non-finite gradient for parameter {name!r} (id {pid})")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}")
    state.step += 1
    t = state.step
    lr = state.lr(epoch)
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        p = _as_real(params[name])
        g = _as_real(np.ascontiguousarray(g, dtype=params[name].dtype))
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
