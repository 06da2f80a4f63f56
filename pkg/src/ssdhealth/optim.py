"""Adam with global-norm gradient clipping.

Parameters and gradients are either ``ModelParams`` or plain ``{name: array}``
dicts; updates return new objects and never modify their arguments.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError
from .model import ModelParams


def _named(p):
    if isinstance(p, ModelParams):
        return dict(p.named_tensors())
    return {k: np.asarray(v, dtype=np.float64) for k, v in p.items()}


def _rebuild(like, tensors):
    if isinstance(like, ModelParams):
        return ModelParams.from_named(tensors, like.config)
    return tensors


def global_norm(grads) -> float:
    total = 0.0
    for name, g in _named(grads).items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in tensor {name!r}")
        total += float(np.dot(g.ravel(), g.ravel()))
    return math.sqrt(total)


def clip_global_norm(grads, threshold=1.0):
    """Scale every gradient by threshold/norm when the joint L2 norm exceeds threshold.

    Returns (clipped grads, scale applied); the boundary norm == threshold
    is left unchanged.
    """
    if not threshold > 0:
        raise ConfigError(f"clip threshold must be positive, got {threshold!r}")
    norm = global_norm(grads)
    if norm <= threshold:
        return grads, 1.0
    scale = threshold / norm
    return _rebuild(grads, {k: g * scale for k, g in _named(grads).items()}), scale


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr >= 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr!r}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps!r}")

    @classmethod
    def fresh(cls, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        zeros = {k: np.zeros_like(v) for k, v in _named(params).items()}
        return cls({k: z.copy() for k, z in zeros.items()}, zeros, 0, lr, beta1, beta2, eps)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update. Returns (new params, new state)."""
    p = _named(params)
    g = _named(grads)
    if p.keys() != g.keys() or p.keys() != state.m.keys():
        raise DimensionError("params, grads and optimizer state name different tensors")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = {}, {}, {}
    for k, w in p.items():
        if g[k].shape != w.shape or state.m[k].shape != w.shape:
            raise DimensionError(f"{k}: shapes differ ({w.shape} vs {g[k].shape})")
        m = b1 * state.m[k] + (1.0 - b1) * g[k]
        v = b2 * state.v[k] + (1.0 - b2) * (g[k] * g[k])
        new_p[k] = w - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[k] = m
        new_v[k] = v
    new_state = AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)
    return _rebuild(params, new_p), new_state
