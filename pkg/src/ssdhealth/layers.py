"""Network building blocks with forward and analytic backward passes.

GRU convention (fixed, also written into checkpoints)::

    z  = sigmoid(x W_z + h U_z + b_z)          # retain gate
    r  = sigmoid(x W_r + h U_r + b_r)          # reset gate
    hc = tanh(x W_h + (r * h) U_h + b_h)       # reset applied before U_h
    h' = z * h + (1 - z) * hc

Sequence functions accept a single sequence ``(T, D)`` or a batch
``(B, T, D)``; outputs follow the input's rank.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .errors import CacheError, ConfigError, DimensionError, InvalidInputError
from .numerics import LAYER_NORM_EPS, matmul, sigmoid

GRU_CONVENTION = "h=z*h_prev+(1-z)*h_cand;reset_before_recurrent_matmul"


@dataclass
class GruCellParams:
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[0]

    @property
    def hidden(self) -> int:
        return self.U_z.shape[0]

    def validate(self):
        d, h = self.input_dim, self.hidden
        for f in fields(self):
            arr = getattr(self, f.name)
            want = {"W": (d, h), "U": (h, h), "b": (h,)}[f.name[0]]
            if arr.shape != want:
                raise DimensionError(f"GRU {f.name} has shape {arr.shape}, expected {want}")

    def stacked(self):
        W = np.stack((self.W_z, self.W_r, self.W_h))
        U = np.stack((self.U_z, self.U_r, self.U_h))
        b = np.stack((self.b_z, self.b_r, self.b_h))
        return W, U, b

    @classmethod
    def from_stacked(cls, W, U, b):
        return cls(W[0], W[1], W[2], U[0], U[1], U[2], b[0], b[1], b[2])

    @classmethod
    def zeros(cls, input_dim, hidden):
        return cls.from_stacked(
            np.zeros((3, input_dim, hidden)), np.zeros((3, hidden, hidden)), np.zeros((3, hidden))
        )


@dataclass
class MhaParams:
    """Per-head projections stacked on axis 0: W_q[i] is head i's (d_model, d_head)."""

    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray
    W_o: np.ndarray

    @property
    def heads(self) -> int:
        return self.W_q.shape[0]

    @property
    def d_model(self) -> int:
        return self.W_o.shape[0]

    @property
    def d_head(self) -> int:
        return self.W_q.shape[2]

    def validate(self):
        m, nh, dh = self.d_model, self.heads, self.d_head
        if nh < 1 or m % nh != 0:
            raise ConfigError(f"d_model={m} is not divisible by heads={nh}")
        if dh != m // nh:
            raise ConfigError(f"d_head={dh} but d_model/heads={m // nh}")
        for name in ("W_q", "W_k", "W_v"):
            if getattr(self, name).shape != (nh, m, dh):
                raise DimensionError(
                    f"{name} has shape {getattr(self, name).shape}, expected {(nh, m, dh)}"
                )
        if self.W_o.shape != (m, m):
            raise DimensionError(f"W_o has shape {self.W_o.shape}, expected {(m, m)}")

    @classmethod
    def zeros(cls, d_model, heads):
        if heads < 1 or d_model % heads:
            raise ConfigError(f"d_model={d_model} is not divisible by heads={heads}")
        dh = d_model // heads
        z = lambda: np.zeros((heads, d_model, dh))  # noqa: E731
        return cls(z(), z(), z(), np.zeros((d_model, d_model)))


def _batched(X, name, last_dim=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        single, Xb = True, X[None]
    elif X.ndim == 3:
        single, Xb = False, X
    else:
        raise DimensionError(f"{name} must be (T, D) or (B, T, D), got shape {X.shape}")
    if last_dim is not None and Xb.shape[2] != last_dim:
        raise DimensionError(f"{name} has feature width {Xb.shape[2]}, expected {last_dim}")
    return single, np.ascontiguousarray(Xb)


def _unbatch(a, single):
    return a[0] if single else a


# --- GRU ------------------------------------------------------------------


@dataclass
class GruStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    h_cand: np.ndarray
    params: GruCellParams


def gru_cell_forward(x_t, h_prev, p: GruCellParams):
    """One GRU step on row vectors. Returns (h_t, cache)."""
    x = np.asarray(x_t, dtype=np.float64).reshape(1, -1)
    h = np.asarray(h_prev, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != p.input_dim or h.shape[1] != p.hidden:
        raise DimensionError(
            f"x has {x.shape[1]} features and h_prev {h.shape[1]}; "
            f"cell expects ({p.input_dim}, {p.hidden})"
        )
    z = sigmoid(matmul(x, p.W_z) + matmul(h, p.U_z) + p.b_z)
    r = sigmoid(matmul(x, p.W_r) + matmul(h, p.U_r) + p.b_r)
    hc = np.tanh(matmul(x, p.W_h) + matmul(r * h, p.U_h) + p.b_h)
    h_t = z * h + (1.0 - z) * hc
    return h_t[0], GruStepCache(x[0], h[0], z[0], r[0], hc[0], p)


def gru_cell_backward(dh_t, cache: GruStepCache):
    """Adjoint of one GRU step. Returns (dx, dh_prev, GruCellParams of grads)."""
    if not isinstance(cache, GruStepCache):
        raise CacheError(f"expected GruStepCache, got {type(cache).__name__}")
    p = cache.params
    dh = np.asarray(dh_t, dtype=np.float64).ravel()
    x, h, z, r, hc = cache.x, cache.h_prev, cache.z, cache.r, cache.h_cand
    daz = dh * (h - hc) * z * (1.0 - z)
    dah = dh * (1.0 - z) * (1.0 - hc * hc)
    drh = p.U_h @ dah
    dar = drh * h * r * (1.0 - r)
    dh_prev = dh * z + drh * r + p.U_z @ daz + p.U_r @ dar
    dx = p.W_z @ daz + p.W_r @ dar + p.W_h @ dah
    grads = GruCellParams(
        np.outer(x, daz), np.outer(x, dar), np.outer(x, dah),
        np.outer(h, daz), np.outer(h, dar), np.outer(r * h, dah),
        daz, dar, dah,
    )
    return dx, dh_prev, grads


@dataclass
class BiGruCache:
    single: bool
    X: np.ndarray
    fwd: tuple
    bwd: tuple
    fwd_state: tuple
    bwd_state: tuple


def bigru_forward(X, fwd: GruCellParams, bwd: GruCellParams):
    """Scan forward and reverse GRUs from zero states; H rows are [h_fwd | h_bwd]."""
    fwd.validate()
    bwd.validate()
    if fwd.input_dim != bwd.input_dim or fwd.hidden != bwd.hidden:
        raise DimensionError("forward and backward GRU parameters have different shapes")
    single, Xb = _batched(X, "X", fwd.input_dim)
    if Xb.shape[1] < 1:
        raise InvalidInputError("bigru_forward needs a sequence of length >= 1")
    f = fwd.stacked()
    b = bwd.stacked()
    fs = kernels.gru_scan_forward(Xb, *f, False)
    bs = kernels.gru_scan_forward(Xb, *b, True)
    H = np.concatenate((fs[0], bs[0]), axis=2)
    return _unbatch(H, single), BiGruCache(single, Xb, f, b, fs[1:], bs[1:])


def bigru_backward(dH, cache: BiGruCache):
    """Returns (dX, fwd grads, bwd grads)."""
    if not isinstance(cache, BiGruCache):
        raise CacheError(f"expected BiGruCache, got {type(cache).__name__}")
    dHb = np.asarray(dH, dtype=np.float64)
    if cache.single:
        dHb = dHb[None]
    hid = cache.fwd[1].shape[1]
    if dHb.shape != cache.X.shape[:2] + (2 * hid,):
        raise CacheError(f"upstream gradient {dHb.shape} does not match cached BiGRU output")
    dHf = np.ascontiguousarray(dHb[:, :, :hid])
    dHr = np.ascontiguousarray(dHb[:, :, hid:])
    W, U, _ = cache.fwd
    dXf, dWf, dUf, dbf = kernels.gru_scan_backward(cache.X, W, U, *cache.fwd_state, dHf, False)
    W, U, _ = cache.bwd
    dXr, dWr, dUr, dbr = kernels.gru_scan_backward(cache.X, W, U, *cache.bwd_state, dHr, True)
    dX = dXf + dXr
    return (
        _unbatch(dX, cache.single),
        GruCellParams.from_stacked(dWf, dUf, dbf),
        GruCellParams.from_stacked(dWr, dUr, dbr),
    )


# --- attention ------------------------------------------------------------


@dataclass
class MhaCache:
    single: bool
    H: np.ndarray
    params: MhaParams
    P: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    C: np.ndarray


def mha_forward(H, p: MhaParams):
    """Multi-head self-attention without positional encoding.

    Returns (A, weights, cache); ``weights`` is (heads, T, T) for a single
    sequence, (B, heads, T, T) for a batch.
    """
    p.validate()
    single, Hb = _batched(H, "H", p.d_model)
    A, P, Q, K, V, C = kernels.mha_forward(Hb, p.W_q, p.W_k, p.W_v, p.W_o)
    cache = MhaCache(single, Hb, p, P, Q, K, V, C)
    return _unbatch(A, single), _unbatch(P, single), cache


def mha_backward(dA, cache: MhaCache):
    """Returns (dH, MhaParams of grads)."""
    if not isinstance(cache, MhaCache):
        raise CacheError(f"expected MhaCache, got {type(cache).__name__}")
    dAb = np.asarray(dA, dtype=np.float64)
    if cache.single:
        dAb = dAb[None]
    if dAb.shape != cache.H.shape:
        raise CacheError(f"upstream gradient {dAb.shape} does not match cached attention output")
    p = cache.params
    dH, dWq, dWk, dWv, dWo = kernels.mha_backward(
        np.ascontiguousarray(dAb), cache.H, p.W_q, p.W_k, p.W_v, p.W_o,
        cache.P, cache.Q, cache.K, cache.V, cache.C,
    )
    return _unbatch(dH, cache.single), MhaParams(dWq, dWk, dWv, dWo)


# --- residual fusion ------------------------------------------------------


@dataclass
class FuseCache:
    single: bool
    xhat: np.ndarray
    rstd: np.ndarray
    gain: np.ndarray


def fuse(H, A, gain, bias, eps=LAYER_NORM_EPS):
    """Row-wise layer_norm(H + A)."""
    H = np.asarray(H, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if H.shape != A.shape:
        raise DimensionError(f"fuse: H {H.shape} and A {A.shape} differ")
    single, S = _batched(H + A, "H + A")
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if gain.shape != (S.shape[2],) or bias.shape != (S.shape[2],):
        raise DimensionError(f"gain/bias must have length {S.shape[2]}")
    F, xhat, rstd = kernels.layernorm_forward(S, gain, bias, float(eps))
    return _unbatch(F, single), FuseCache(single, xhat, rstd, gain)


def fuse_backward(dF, cache: FuseCache):
    """Returns (d(H + A), dgain, dbias); the residual sends the same gradient to H and A."""
    if not isinstance(cache, FuseCache):
        raise CacheError(f"expected FuseCache, got {type(cache).__name__}")
    dFb = np.asarray(dF, dtype=np.float64)
    if cache.single:
        dFb = dFb[None]
    if dFb.shape != cache.xhat.shape:
        raise CacheError(f"upstream gradient {dFb.shape} does not match cached fuse output")
    dS, dgain, dbias = kernels.layernorm_backward(
        np.ascontiguousarray(dFb), cache.xhat, cache.rstd, cache.gain
    )
    return _unbatch(dS, cache.single), dgain, dbias


# --- classifier head and loss ---------------------------------------------


def head_forward(F, W_c, b_c):
    """Mean-pool over time, then a dense layer. Returns logits (C,) or (B, C)."""
    single, Fb = _batched(F, "F", W_c.shape[0])
    if W_c.shape[1] < 2 or b_c.shape != (W_c.shape[1],):
        raise DimensionError(f"head needs W_c (d, C>=2) and b_c (C,), got {W_c.shape}, {b_c.shape}")
    pooled = _mean_rows(Fb)
    logits = kernels.matmul(pooled, np.ascontiguousarray(W_c)) + b_c
    return _unbatch(logits, single)


def _mean_rows(Fb):
    # ascending sum over time, then divide
    acc = Fb[:, 0].copy()
    for t in range(1, Fb.shape[1]):
        acc += Fb[:, t]
    return acc / Fb.shape[1]


def head_backward(dlogits, F, W_c):
    """Returns (dF, dW_c, db_c)."""
    single, Fb = _batched(F, "F", W_c.shape[0])
    dl = np.atleast_2d(np.asarray(dlogits, dtype=np.float64))
    if dl.shape != (Fb.shape[0], W_c.shape[1]):
        raise CacheError(f"dlogits {dl.shape} does not match head output")
    T = Fb.shape[1]
    pooled = _mean_rows(Fb)
    dW = kernels.matmul(np.ascontiguousarray(pooled.T), dl)
    db = _colsum(dl)
    dpooled = kernels.matmul(dl, np.ascontiguousarray(W_c.T))
    dF = np.repeat((dpooled / T)[:, None, :], T, axis=1)
    return _unbatch(dF, single), dW, db


def _colsum(a):
    acc = a[0].copy()
    for i in range(1, a.shape[0]):
        acc += a[i]
    return acc


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    mx = np.max(logits, axis=-1, keepdims=True)
    shifted = logits - mx
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def cross_entropy(logits, label):
    """Softmax cross-entropy for one sample. Returns (loss, dlogits)."""
    logits = np.asarray(logits, dtype=np.float64).ravel()
    label = int(label)
    if not 0 <= label < logits.size:
        raise InvalidInputError(f"label {label} outside [0, {logits.size})")
    logp = log_softmax(logits)
    dl = np.exp(logp)
    dl[label] -= 1.0
    return float(-logp[label]), dl


def cross_entropy_batch(logits, labels):
    """Per-sample losses (B,) and dlogits (B, C) for a batch."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).ravel()
    C = logits.shape[1]
    if labels.shape[0] != logits.shape[0]:
        raise DimensionError(f"{labels.shape[0]} labels for {logits.shape[0]} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise InvalidInputError(f"labels must lie in [0, {C})")
    logp = log_softmax(logits)
    rows = np.arange(labels.size)
    dl = np.exp(logp)
    dl[rows, labels] -= 1.0
    return -logp[rows, labels], dl
