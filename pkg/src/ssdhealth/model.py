"""The BiGRU -> multi-head attention -> residual layer-norm -> mean-pool classifier."""

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import layers
from .errors import ConfigError, DimensionError, InvalidInputError
from .layers import GruCellParams, MhaParams
from .numerics import LAYER_NORM_EPS

GRU_FIELDS = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")
MHA_FIELDS = ("W_q", "W_k", "W_v", "W_o")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 1
    hidden: int = 24
    heads: int = 3
    classes: int = 3
    seq_len: int = 8
    l2_lambda: float = 0.001
    layer_norm_eps: float = LAYER_NORM_EPS
    seed: int = 42

    def __post_init__(self):
        for name in ("input_dim", "hidden", "heads", "classes", "seq_len"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.classes < 2:
            raise ConfigError(f"classes must be >= 2, got {self.classes}")
        if (2 * self.hidden) % self.heads:
            raise ConfigError(
                f"2*hidden={2 * self.hidden} is not divisible by heads={self.heads}"
            )
        if not (np.isfinite(self.l2_lambda) and self.l2_lambda >= 0):
            raise ConfigError(f"l2_lambda must be a non-negative real, got {self.l2_lambda!r}")
        if not (np.isfinite(self.layer_norm_eps) and self.layer_norm_eps > 0):
            raise ConfigError(f"layer_norm_eps must be positive, got {self.layer_norm_eps!r}")
        if not isinstance(self.seed, (int, np.integer)) or not -(2**63) <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit integer, got {self.seed!r}")

    @property
    def d_model(self) -> int:
        return 2 * self.hidden

    @property
    def d_head(self) -> int:
        return self.d_model // self.heads

    def to_dict(self):
        return asdict(self)

    def tensor_shapes(self):
        """Ordered (name, shape) for every trainable tensor."""
        d, h, m, nh, c = self.input_dim, self.hidden, self.d_model, self.heads, self.classes
        gru = {"W": (d, h), "U": (h, h), "b": (h,)}
        out = []
        for direction in ("fwd", "bwd"):
            out += [(f"{direction}.{f}", gru[f[0]]) for f in GRU_FIELDS]
        out += [(f"mha.{f}", (nh, m, m // nh)) for f in MHA_FIELDS[:3]]
        out += [("mha.W_o", (m, m)), ("fuse_gain", (m,)), ("fuse_bias", (m,))]
        out += [("W_c", (m, c)), ("b_c", (c,))]
        return out

    def parameter_count(self) -> int:
        d, h, m, c = self.input_dim, self.hidden, self.d_model, self.classes
        gru = 3 * d * h + 3 * h * h + 3 * h
        return 2 * gru + 4 * m * m + 2 * m + m * c + c


def is_weight(name: str) -> bool:
    """Weight matrices carry L2; biases and layer-norm affine terms do not."""
    leaf = name.rsplit(".", 1)[-1]
    return leaf.startswith(("W_", "U_"))


@dataclass
class ModelParams:
    fwd: GruCellParams
    bwd: GruCellParams
    mha: MhaParams
    fuse_gain: np.ndarray
    fuse_bias: np.ndarray
    W_c: np.ndarray
    b_c: np.ndarray
    config: ModelConfig

    def named_tensors(self):
        for direction in ("fwd", "bwd"):
            g = getattr(self, direction)
            for f in GRU_FIELDS:
                yield f"{direction}.{f}", getattr(g, f)
        for f in MHA_FIELDS:
            yield f"mha.{f}", getattr(self.mha, f)
        for name in ("fuse_gain", "fuse_bias", "W_c", "b_c"):
            yield name, getattr(self, name)

    @classmethod
    def from_named(cls, tensors, config: ModelConfig):
        tensors = dict(tensors)
        expected = config.tensor_shapes()
        if set(tensors) != {n for n, _ in expected}:
            missing = sorted({n for n, _ in expected} - set(tensors))
            extra = sorted(set(tensors) - {n for n, _ in expected})
            raise DimensionError(f"tensor set mismatch: missing {missing}, unexpected {extra}")
        for name, shape in expected:
            if tensors[name].shape != shape:
                raise DimensionError(f"{name} has shape {tensors[name].shape}, expected {shape}")
        return cls(
            fwd=GruCellParams(*(tensors[f"fwd.{f}"] for f in GRU_FIELDS)),
            bwd=GruCellParams(*(tensors[f"bwd.{f}"] for f in GRU_FIELDS)),
            mha=MhaParams(*(tensors[f"mha.{f}"] for f in MHA_FIELDS)),
            fuse_gain=tensors["fuse_gain"],
            fuse_bias=tensors["fuse_bias"],
            W_c=tensors["W_c"],
            b_c=tensors["b_c"],
            config=config,
        )

    def map(self, fn, *others):
        """New params with ``fn(name, tensor, *other_tensors)`` applied per tensor."""
        other_maps = [dict(o.named_tensors()) for o in others]
        return ModelParams.from_named(
            ((n, fn(n, t, *(m[n] for m in other_maps))) for n, t in self.named_tensors()),
            self.config,
        )

    def copy(self):
        return self.map(lambda n, t: t.copy())

    def zeros_like(self):
        return self.map(lambda n, t: np.zeros_like(t))

    def count(self) -> int:
        return sum(t.size for _, t in self.named_tensors())


def init_params(cfg: ModelConfig) -> ModelParams:
    """Glorot-uniform weights, zero biases, unit layer-norm gain.

    Weights are drawn from ``default_rng([seed, 0])`` in ``named_tensors``
    order: fwd W_z W_r W_h U_z U_r U_h, the same for bwd, then mha W_q
    (head 0 first), W_k, W_v, W_o, then W_c. For the stacked per-head
    tensors fan_in/fan_out are d_model/d_head.
    """
    if not isinstance(cfg, ModelConfig):
        raise ConfigError("init_params needs a ModelConfig")
    rng = np.random.default_rng([cfg.seed, 0])
    tensors = {}
    for name, shape in cfg.tensor_shapes():
        if is_weight(name):
            fan_in, fan_out = shape[-2], shape[-1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        elif name == "fuse_gain":
            tensors[name] = np.ones(shape)
        else:
            tensors[name] = np.zeros(shape)
    return ModelParams.from_named(tensors, cfg)


@dataclass
class ForwardCache:
    gru: layers.BiGruCache
    mha: layers.MhaCache
    fuse: layers.FuseCache
    F: np.ndarray
    weights: np.ndarray


def forward(params: ModelParams, X, train_mode=False):
    """Logits for one sequence (T, D) -> (C,) or a batch (B, T, D) -> (B, C).

    With ``train_mode`` returns ``(logits, cache)``.
    """
    cfg = params.config
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-2:] != (cfg.seq_len, cfg.input_dim) or X.ndim not in (2, 3):
        raise DimensionError(
            f"X has shape {X.shape}, expected (..., {cfg.seq_len}, {cfg.input_dim})"
        )
    H, gcache = layers.bigru_forward(X, params.fwd, params.bwd)
    A, weights, mcache = layers.mha_forward(H, params.mha)
    F, fcache = layers.fuse(H, A, params.fuse_gain, params.fuse_bias, cfg.layer_norm_eps)
    logits = layers.head_forward(F, params.W_c, params.b_c)
    if not train_mode:
        return logits
    return logits, ForwardCache(gcache, mcache, fcache, F, weights)


def backward(params: ModelParams, cache: ForwardCache, dlogits):
    """Data gradients for every tensor plus dX, from dloss/dlogits."""
    dF, dW_c, db_c = layers.head_backward(dlogits, cache.F, params.W_c)
    dS, dgain, dbias = layers.fuse_backward(dF, cache.fuse)
    dH_att, dmha = layers.mha_backward(dS, cache.mha)
    dX, dfwd, dbwd = layers.bigru_backward(dS + dH_att, cache.gru)
    grads = ModelParams(dfwd, dbwd, dmha, dgain, dbias, dW_c, db_c, params.config)
    return grads, dX


def l2_penalty(params: ModelParams, lam: float) -> float:
    total = 0.0
    for name, t in params.named_tensors():
        if is_weight(name):
            total += float(np.dot(t.ravel(), t.ravel()))
    return 0.5 * lam * total


def loss_and_grads(params: ModelParams, batch, cfg: ModelConfig | None = None):
    """Mean cross-entropy over ``batch`` plus (l2_lambda/2)*sum ||W||^2.

    ``batch`` is a sequence of (X, label) or a pre-stacked (X_batch, labels)
    pair of arrays. Samples are accumulated in input order.
    """
    cfg = cfg or params.config
    Xb, labels = stack_batch(batch)
    B = Xb.shape[0]
    logits, cache = forward(params, Xb, train_mode=True)
    losses, dl = layers.cross_entropy_batch(logits, labels)
    data_loss = 0.0
    for v in losses:
        data_loss += float(v)
    data_loss /= B
    grads, _ = backward(params, cache, dl / B)
    lam = cfg.l2_lambda
    if lam:
        grads = grads.map(lambda n, g, w: g + lam * w if is_weight(n) else g, params)
    return data_loss + l2_penalty(params, lam), grads


def stack_batch(batch):
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray) \
            and batch[0].ndim == 3:
        Xb = np.asarray(batch[0], dtype=np.float64)
        labels = np.asarray(batch[1], dtype=np.int64)
    else:
        batch = list(batch)
        if not batch:
            raise InvalidInputError("loss_and_grads needs a non-empty batch")
        Xb = np.stack([np.asarray(x, dtype=np.float64) for x, _ in batch])
        labels = np.array([int(y) for _, y in batch], dtype=np.int64)
    if Xb.shape[0] == 0:
        raise InvalidInputError("loss_and_grads needs a non-empty batch")
    if labels.shape != (Xb.shape[0],):
        raise DimensionError(f"{labels.shape} labels for {Xb.shape[0]} sequences")
    return Xb, labels


def softmax(logits):
    return np.exp(layers.log_softmax(logits))


def predict_proba(params: ModelParams, X):
    """Class probabilities for one sequence or a batch."""
    return softmax(forward(params, X))


def with_config(params: ModelParams, **changes) -> ModelParams:
    """Same tensors under a config with non-shape fields changed (e.g. l2_lambda)."""
    cfg = replace(params.config, **changes)
    return ModelParams.from_named(params.named_tensors(), cfg)
