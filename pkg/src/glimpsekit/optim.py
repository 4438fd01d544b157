"""Adam optimizer over named parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Adam moment accumulators for a dict of named parameter arrays."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(np.asarray(p, dtype=np.float64))
            state.v[name] = np.zeros_like(state.m[name])
        return state


def adam_update(params: dict, grads: dict, state: AdamState):
    """One Adam step with bias correction.  Mutates and returns both.

    ``params`` and ``grads`` are dicts of same-shaped float arrays; the
    update is deterministic and in place.
    """
    if set(grads) - set(params):
        raise ValueError(f"gradients for unknown parameters: {sorted(set(grads) - set(params))}")
    state.step += 1
    b1t = 1.0 - state.beta1 ** state.step
    b2t = 1.0 - state.beta2 ** state.step
    for name, g in grads.items():
        p = params[name]
        if np.shape(g) != np.shape(p):
            raise ValueError(f"gradient shape {np.shape(g)} != param shape {np.shape(p)} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= state.lr * (m / b1t) / (np.sqrt(v / b2t) + state.eps)
    return params, state
