"""Command-line entry point: generate, train, eval, predict."""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields, replace

import numpy as np

from . import data, model, training
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, SsdHealthError
from .metrics import write_roc_csv

log = logging.getLogger("ssdhealth")

MODEL_KEYS = tuple(f.name for f in fields(model.ModelConfig))
TRAIN_KEYS = tuple(f.name for f in fields(training.TrainConfig))
SPLIT_KEYS = ("test_fraction",)
CONFIG_KEYS = frozenset(MODEL_KEYS + TRAIN_KEYS + SPLIT_KEYS)

# flag dest -> config key; only flags the user actually passed override the file
_TRAIN_FLAGS = {
    "hidden": int,
    "heads": int,
    "seq_len": int,
    "layer_norm_eps": float,
    "max_epochs": int,
    "batch_size": int,
    "lr": float,
    "clip_threshold": float,
    "l2_lambda": float,
    "seed": int,
    "eval_every": int,
    "test_fraction": float,
}


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _priors(text):
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"priors must be three comma-separated reals: {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"priors must have exactly three values, got {len(vals)}")
    return vals


def load_config_file(path):
    """Read a JSON object whose keys mirror ModelConfig/TrainConfig fields."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = sorted(set(doc) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return doc


def resolve_config(file_doc, overrides):
    """Merge defaults < file < flags and build validated configs.

    Returns (ModelConfig, TrainConfig, test_fraction). Everything is
    validated before anything is returned, so a bad key or value rejects
    the whole configuration.
    """
    merged = dict(file_doc or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(merged) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    for key, value in merged.items():
        want = _TRAIN_FLAGS.get(key)
        if want is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        if want is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(f"{key} must be a number, got {value!r}")
    try:
        mcfg = model.ModelConfig(**{k: merged[k] for k in MODEL_KEYS if k in merged})
        tcfg = training.TrainConfig(**{k: merged[k] for k in TRAIN_KEYS if k in merged})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if "l2_lambda" in merged:
        mcfg = replace(mcfg, l2_lambda=tcfg.l2_lambda)
    else:
        tcfg = replace(tcfg, l2_lambda=mcfg.l2_lambda)
    frac = float(merged.get("test_fraction", 0.2))
    if not 0.0 < frac < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {frac!r}")
    return mcfg, tcfg, frac


def cmd_generate(args):
    ds = data.generate_synthetic(args.n, seed=args.seed, priors=args.priors,
                                 label_noise=args.label_noise)
    data.write_csv(ds, args.out)
    counts = ds.class_counts()
    print(f"wrote {len(ds)} records to {args.out}")
    print("  ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_train(args):
    file_doc = load_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _TRAIN_FLAGS}
    mcfg, tcfg, frac = resolve_config(file_doc, overrides)

    ds = data.load_csv(args.data)
    train_set, test_set = data.split_stratified(ds, test_fraction=frac, seed=tcfg.seed)
    std = data.fit_standardizer(train_set)
    if tcfg.max_epochs == 0:
        print("warning: --max-epochs 0, saving the untrained initial parameters", file=sys.stderr)
    params, history = training.train(mcfg, tcfg, train_set, test_set, std)
    cfg = params.config

    save_checkpoint(args.out, params, cfg, std)
    if args.history:
        history.to_csv(args.history)
    if args.split_dir:
        os.makedirs(args.split_dir, exist_ok=True)
        data.write_csv(train_set, os.path.join(args.split_dir, "train.csv"))
        data.write_csv(test_set, os.path.join(args.split_dir, "test.csv"))

    tr = training.evaluate(params, std, train_set)
    te = training.evaluate(params, std, test_set)
    print(f"epochs {len(history)}  train {len(train_set)}  test {len(test_set)}")
    if len(history):
        print(f"loss  first {history.loss[0]:.6f}  final {history.loss[-1]:.6f}")
    print(f"train accuracy {tr.accuracy:.4f}")
    print(f"test accuracy  {te.accuracy:.4f}")
    macro = te.auc["macro"]
    print(f"test macro AUC {macro:.4f}" if macro is not None else "test macro AUC n/a")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_eval(args):
    params, _, std = load_checkpoint(args.model)
    ds = data.load_csv(args.data)
    report = training.evaluate(params, std, ds)
    print(report.summary())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    if args.roc:
        os.makedirs(args.roc, exist_ok=True)
        for name, points in report.roc.items():
            write_roc_csv(points, os.path.join(args.roc, f"roc_{name}.csv"))
    return 0


def _write_predictions(fh, proba):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("predicted",) + tuple(f"p_{n.lower()}" for n in data.CLASS_NAMES))
    for row in proba:
        w.writerow((data.CLASS_NAMES[int(np.argmax(row))],) + tuple(repr(float(p)) for p in row))


def cmd_predict(args):
    params, _, std = load_checkpoint(args.model)
    ds = data.read_csv(args.data, require_label=False, allow_empty=True)
    if len(ds):
        proba = model.predict_proba(params, data.encode_dataset(std, ds))
    else:
        proba = np.zeros((0, len(data.CLASS_NAMES)))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            _write_predictions(fh, proba)
    else:
        _write_predictions(sys.stdout, proba)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ssdhealth", description="SSD health classification")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic labelled dataset")
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--out", required=True)
    g.add_argument("--label-noise", type=float, default=data.DEFAULT_LABEL_NOISE)
    g.add_argument("--priors", type=_priors, default=data.DEFAULT_PRIORS,
                   help="Normal,Warning,Failure shares (default %(default)s)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="split, standardize, train and save a checkpoint")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--config", help="JSON file keyed by config field names")
    t.add_argument("--history", help="per-epoch history CSV")
    t.add_argument("--split-dir", help="also write train.csv and test.csv here")
    for key, typ in _TRAIN_FLAGS.items():
        t.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a labelled CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", help="write the JSON report here")
    e.add_argument("--roc", help="directory for per-class ROC CSVs")
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="class probabilities for each row")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", help="output CSV (default stdout)")
    pr.set_defaults(func=cmd_predict)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except SsdHealthError as exc:
        print(f"error[{exc.kind}]: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error[file-not-found]: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
