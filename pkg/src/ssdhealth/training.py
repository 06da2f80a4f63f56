"""Epoch loop and evaluation."""

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as M
from .data import CLASS_NAMES, Dataset, Standardizer, encode_dataset, fit_standardizer
from .errors import ConfigError, DivergenceError, EmptyDatasetError
from .metrics import EvalReport, evaluate_predictions
from .optim import AdamState, adam_step, clip_global_norm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 500
    batch_size: int = 32
    lr: float = 0.001
    clip_threshold: float = 1.0
    l2_lambda: float = 0.001
    seed: int = 42
    eval_every: int = 1

    def __post_init__(self):
        for name in ("max_epochs",):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
        for name in ("batch_size", "eval_every"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not (math.isfinite(self.lr) and self.lr >= 0):
            raise ConfigError(f"lr must be a non-negative real, got {self.lr!r}")
        if not (math.isfinite(self.clip_threshold) and self.clip_threshold > 0):
            raise ConfigError(f"clip_threshold must be positive, got {self.clip_threshold!r}")
        if not (math.isfinite(self.l2_lambda) and self.l2_lambda >= 0):
            raise ConfigError(f"l2_lambda must be non-negative, got {self.l2_lambda!r}")


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)

    def __len__(self):
        return len(self.loss)

    def append(self, loss, train_acc, test_acc=None):
        self.loss.append(float(loss))
        self.train_acc.append(float(train_acc))
        self.test_acc.append(None if test_acc is None else float(test_acc))

    def rows(self):
        for i, (l, a, t) in enumerate(zip(self.loss, self.train_acc, self.test_acc), start=1):
            yield i, l, a, t

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("epoch", "loss", "train_acc", "test_acc"))
            for i, l, a, t in self.rows():
                w.writerow((i, repr(l), repr(a), "" if t is None else repr(t)))


def _accuracy(params, X, y):
    if len(y) == 0:
        return 0.0
    pred = np.argmax(M.forward(params, X), axis=1)
    return float(np.mean(pred == y))


def train(model_cfg: M.ModelConfig, train_cfg: TrainConfig, train_set: Dataset,
          test_set: Dataset | None = None, standardizer: Standardizer | None = None):
    """Train from a fresh initialisation for exactly ``max_epochs`` epochs.

    Each epoch shuffles the training order (its own PRNG stream, separate
    from initialisation), then runs minibatch loss/gradient, global-norm
    clipping and an Adam step per batch. ``standardizer`` defaults to one
    fitted on ``train_set``. Returns (params, history).
    """
    if len(train_set) == 0:
        raise EmptyDatasetError("training split is empty")
    if test_set is not None and len(test_set) == 0:
        raise EmptyDatasetError("test split is empty")
    std = standardizer or fit_standardizer(train_set)
    cfg = replace(model_cfg, l2_lambda=train_cfg.l2_lambda)

    X = encode_dataset(std, train_set)
    y = train_set.labels()
    if test_set is not None:
        Xt = encode_dataset(std, test_set)
        yt = test_set.labels()

    params = M.init_params(cfg)
    state = AdamState.fresh(params, lr=train_cfg.lr)
    rng = np.random.default_rng([train_cfg.seed, 2])
    history = TrainHistory()
    n = len(y)
    bs = train_cfg.batch_size
    for epoch in range(1, train_cfg.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for b, start in enumerate(range(0, n, bs), start=1):
            idx = order[start : start + bs]
            loss, grads = M.loss_and_grads(params, (X[idx], y[idx]), cfg)
            if not math.isfinite(loss):
                raise DivergenceError(epoch, b, loss)
            grads, _ = clip_global_norm(grads, train_cfg.clip_threshold)
            params, state = adam_step(params, grads, state)
            epoch_loss += loss * len(idx)
        test_acc = None
        if test_set is not None and (epoch % train_cfg.eval_every == 0
                                     or epoch == train_cfg.max_epochs):
            test_acc = _accuracy(params, Xt, yt)
        history.append(epoch_loss / n, _accuracy(params, X, y), test_acc)
        if epoch == 1 or epoch % 50 == 0:
            log.info("epoch %d loss %.4f train_acc %.4f", epoch, history.loss[-1],
                     history.train_acc[-1])
    return params, history


def evaluate(params: M.ModelParams, standardizer: Standardizer, ds: Dataset) -> EvalReport:
    """Predict every record and build the evaluation report. Does not modify params."""
    if len(ds) == 0:
        raise EmptyDatasetError("cannot evaluate an empty dataset")
    proba = M.predict_proba(params, encode_dataset(standardizer, ds))
    return evaluate_predictions(ds.labels(), proba, CLASS_NAMES)
