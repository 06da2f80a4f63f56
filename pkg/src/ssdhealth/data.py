"""SSD telemetry records, CSV I/O, the synthetic generator and preprocessing."""

import csv
import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    ConfigError,
    EmptyDatasetError,
    InvalidInputError,
    ParseError,
    StratificationError,
)

# Canonical column order; it is also the time order of the encoded sequence.
FEATURES = (
    "usage_hours",
    "avg_erase_count",
    "total_write_tb",
    "bad_blocks",
    "remaining_life_pct",
    "temperature_c",
    "rw_error_rate",
    "power_on_count",
)
INT_FEATURES = frozenset({"bad_blocks", "power_on_count"})
LABEL_COLUMN = "health_status"
HEADER = FEATURES + (LABEL_COLUMN,)


class HealthLabel(enum.IntEnum):
    NORMAL = 0
    WARNING = 1
    FAILURE = 2

    @property
    def canonical(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "HealthLabel":
        key = " ".join(text.strip().rstrip(".").lower().split())
        try:
            return _LABEL_SYNONYMS[key]
        except KeyError:
            raise InvalidInputError(f"unknown health label {text!r}") from None


_LABEL_SYNONYMS = {
    "normal": HealthLabel.NORMAL,
    "normalcy": HealthLabel.NORMAL,
    "warning": HealthLabel.WARNING,
    "early warning": HealthLabel.WARNING,
    "failure": HealthLabel.FAILURE,
    "malfunction": HealthLabel.FAILURE,
}
CLASS_NAMES = tuple(lbl.canonical for lbl in HealthLabel)


@dataclass(frozen=True)
class SsdRecord:
    usage_hours: float
    avg_erase_count: float
    total_write_tb: float
    bad_blocks: int
    remaining_life_pct: float
    temperature_c: float
    rw_error_rate: float
    power_on_count: int
    label: HealthLabel | None = None

    def __post_init__(self):
        for name in FEATURES:
            v = getattr(self, name)
            if name in INT_FEATURES:
                if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                    raise InvalidInputError(f"{name} must be an integer, got {v!r}")
                if v < 0:
                    raise InvalidInputError(f"{name} must be >= 0, got {v}")
            elif not math.isfinite(v):
                raise InvalidInputError(f"{name} must be finite, got {v!r}")
        if not 0.0 <= self.remaining_life_pct <= 100.0:
            raise InvalidInputError(f"remaining_life_pct {self.remaining_life_pct} outside [0, 100]")
        if not 0.0 <= self.rw_error_rate <= 1.0:
            raise InvalidInputError(f"rw_error_rate {self.rw_error_rate} outside [0, 1]")
        if self.label is not None and not isinstance(self.label, HealthLabel):
            raise InvalidInputError(f"label must be a HealthLabel, got {self.label!r}")

    def features(self) -> np.ndarray:
        return np.array([float(getattr(self, f)) for f in FEATURES])


@dataclass
class Dataset:
    records: list
    provenance: str = field(default="", compare=False)

    def __len__(self):
        return len(self.records)

    def features(self) -> np.ndarray:
        if not self.records:
            return np.empty((0, len(FEATURES)))
        return np.array([[float(getattr(r, f)) for f in FEATURES] for r in self.records])

    def labels(self) -> np.ndarray:
        if any(r.label is None for r in self.records):
            raise InvalidInputError("dataset contains unlabelled records")
        return np.array([int(r.label) for r in self.records], dtype=np.int64)

    def has_labels(self) -> bool:
        return all(r.label is not None for r in self.records)

    def class_counts(self) -> dict:
        counts = {name: 0 for name in CLASS_NAMES}
        for r in self.records:
            if r.label is not None:
                counts[r.label.canonical] += 1
        return counts


# --- CSV ------------------------------------------------------------------


def _parse_value(text, name, row):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"cannot parse {text!r} as a number", row, name) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", row, name)
    if name in INT_FEATURES:
        if v != int(v):
            raise ParseError(f"expected an integer count, got {text!r}", row, name)
        return int(v)
    return v


def read_csv(path, require_label=True, allow_empty=False) -> Dataset:
    """Read telemetry rows; columns are matched by header name."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("file is empty; a header row is required", 1) from None
        wanted = FEATURES + ((LABEL_COLUMN,) if require_label else ())
        for name in wanted:
            if name not in header:
                raise ParseError("missing column", 1, name)
        pos = {name: header.index(name) for name in header}
        has_label = LABEL_COLUMN in pos
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
            values = {f: _parse_value(row[pos[f]].strip(), f, lineno) for f in FEATURES}
            label = None
            if has_label:
                try:
                    label = HealthLabel.parse(row[pos[LABEL_COLUMN]])
                except InvalidInputError as exc:
                    raise ParseError(str(exc), lineno, LABEL_COLUMN) from None
            try:
                records.append(SsdRecord(**values, label=label))
            except InvalidInputError as exc:
                col = next((f for f in FEATURES if f in str(exc)), None)
                raise ParseError(str(exc), lineno, col) from None
    if not records and not allow_empty:
        raise EmptyDatasetError(f"{path}: no data rows after the header")
    return Dataset(records, provenance=f"file:{path}")


def load_csv(path) -> Dataset:
    """Labelled dataset from the canonical 9-column CSV."""
    return read_csv(path, require_label=True)


def _fmt(v):
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def write_csv(ds: Dataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in ds.records:
            label = r.label.canonical if r.label is not None else ""
            w.writerow([_fmt(getattr(r, f)) for f in FEATURES] + [label])


# --- synthetic generator --------------------------------------------------

DEFAULT_PRIORS = (0.60, 0.20, 0.20)
DEFAULT_LABEL_NOISE = 0.05
# Std-dev of the latent-score noise. Calibrated with bayes_accuracy(): the
# Bayes rule on the noiseless score scores ~0.955 against noise-free labels.
SCORE_NOISE = 0.018
# Score cut points for DEFAULT_PRIORS / DEFAULT_LABEL_NOISE / SCORE_NOISE,
# as produced by calibrate_thresholds().
DEFAULT_THRESHOLDS = (0.535764, 0.652236)

_CALIBRATION_N = 200_000
_CALIBRATION_SEED = 20240601


def _wear_terciles():
    # wear = k/18 + u/2 with k uniform on {0..9}, u ~ U(0, 1); solve CDF = 1/3.
    def cdf(w):
        return sum(min(max((w - k / 18.0) / 0.5, 0.0), 1.0) for k in range(10)) / 10.0

    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < 1.0 / 3.0:
            lo = mid
        else:
            hi = mid
    q = 0.5 * (lo + hi)
    return q, 1.0 - q


WEAR_TERCILES = _wear_terciles()


def _draw_features(rng, n):
    """Feature columns and the noiseless health score, in a fixed draw order."""
    usage = np.round(rng.uniform(5000.0, 30000.0, n))
    erase = rng.integers(8, 18, n).astype(np.float64)
    write = np.round(rng.uniform(20.0, 180.0, n), 2)
    hot = rng.random(n) < 0.3
    temp = np.where(hot, rng.normal(62.0, 5.0, n), rng.normal(43.0, 4.0, n))
    temp = np.clip(np.round(temp, 1), 30.0, 75.0)
    err = np.round(rng.uniform(0.0, 0.26, n), 3)
    power = rng.integers(200, 4801, n)

    wear = 0.5 * (erase - 8.0) / 9.0 + 0.5 * (write - 20.0) / 160.0
    seg_lo = np.where(wear >= WEAR_TERCILES[1], 0.0, np.where(wear >= WEAR_TERCILES[0], 33.0, 67.0))
    seg_hi = np.where(wear >= WEAR_TERCILES[1], 33.0, np.where(wear >= WEAR_TERCILES[0], 67.0, 100.0))
    life = np.round(seg_lo + (seg_hi - seg_lo) * rng.random(n), 2)
    bad = rng.poisson(2.0 + 40.0 * (1.0 - life / 100.0))

    score = (
        0.45 * (1.0 - life / 100.0)
        + 0.20 * (temp > 55.0)
        + 0.20 * (err / 0.26)
        + 0.15 * np.minimum(bad / 40.0, 1.0)
    )
    cols = {
        "usage_hours": usage,
        "avg_erase_count": erase,
        "total_write_tb": write,
        "bad_blocks": bad,
        "remaining_life_pct": life,
        "temperature_c": temp,
        "rw_error_rate": err,
        "power_on_count": power,
    }
    return cols, score


def _pre_noise_fractions(priors, label_noise):
    # Flipping with prob e to one of the two other classes maps q -> q(1 - 1.5e) + e/2.
    q = (np.asarray(priors, dtype=np.float64) - label_noise / 2.0) / (1.0 - 1.5 * label_noise)
    q = np.clip(q, 0.0, None)
    return q / q.sum()


@lru_cache(maxsize=32)
def calibrate_thresholds(priors=DEFAULT_PRIORS, label_noise=DEFAULT_LABEL_NOISE,
                         sigma=SCORE_NOISE):
    """Score cut points whose post-noise class shares match ``priors``.

    Quantiles of the noisy latent score over a fixed-seed calibration sample.
    """
    rng = np.random.default_rng(_CALIBRATION_SEED)
    _, score = _draw_features(rng, _CALIBRATION_N)
    s = score + rng.normal(0.0, sigma, _CALIBRATION_N)
    q = _pre_noise_fractions(priors, label_noise)
    cw, cf = np.quantile(s, [q[0], q[0] + q[1]])
    return float(cw), float(cf)


def _check_priors(priors):
    p = tuple(float(x) for x in priors)
    if len(p) != 3 or any(not math.isfinite(x) or x < 0 for x in p):
        raise ConfigError(f"priors must be three non-negative reals, got {priors!r}")
    if abs(sum(p) - 1.0) > 1e-9:
        raise ConfigError(f"priors must sum to 1 (within 1e-9), got sum {sum(p)!r}")
    return p


def generate_synthetic(n, seed=42, priors=DEFAULT_PRIORS, label_noise=DEFAULT_LABEL_NOISE,
                       sigma=SCORE_NOISE) -> Dataset:
    """Draw ``n`` labelled records from the documented generative rule.

    Health score: 0.45*(1 - life/100) + 0.20*[temp > 55] + 0.20*err/0.26
    + 0.15*min(bad_blocks/40, 1) + N(0, sigma), cut into Normal / Warning /
    Failure at two thresholds, then each label is replaced with probability
    ``label_noise`` by one of the other two classes.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigError(f"n must be a positive integer, got {n!r}")
    priors = _check_priors(priors)
    if not 0.0 <= label_noise < 0.5:
        raise ConfigError(f"label_noise must lie in [0, 0.5), got {label_noise!r}")
    if sigma < 0:
        raise ConfigError(f"sigma must be non-negative, got {sigma!r}")

    if (priors, label_noise, sigma) == (DEFAULT_PRIORS, DEFAULT_LABEL_NOISE, SCORE_NOISE):
        tw, tf = DEFAULT_THRESHOLDS
    else:
        tw, tf = calibrate_thresholds(priors, label_noise, sigma)

    rng = np.random.default_rng(seed)
    cols, score = _draw_features(rng, n)
    s = score + rng.normal(0.0, sigma, n)
    labels = np.where(s < tw, 0, np.where(s < tf, 1, 2))
    flip = rng.random(n) < label_noise
    shift = rng.integers(1, 3, n)
    labels = np.where(flip, (labels + shift) % 3, labels)

    records = []
    for i in range(n):
        kw = {
            f: (int(cols[f][i]) if f in INT_FEATURES else float(cols[f][i])) for f in FEATURES
        }
        records.append(SsdRecord(**kw, label=HealthLabel(int(labels[i]))))
    return Dataset(records, provenance=f"synthetic:seed={seed},n={n}")


def bayes_accuracy(sigma=SCORE_NOISE, n=100_000, seed=7, priors=DEFAULT_PRIORS):
    """Accuracy of the Bayes-optimal rule on the noiseless score.

    Labels are the generator's pre-flip labels; the rule sees only the
    deterministic part of the score and predicts the most probable class.
    """
    tw, tf = calibrate_thresholds(tuple(priors), DEFAULT_LABEL_NOISE, sigma)
    rng = np.random.default_rng(seed)
    _, score = _draw_features(rng, n)
    labels = np.digitize(score + rng.normal(0.0, sigma, n), [tw, tf])
    phi = np.frompyfunc(lambda x: 0.5 * (1.0 + math.erf(x / math.sqrt(2.0))), 1, 1)
    p_n = phi((tw - score) / sigma).astype(np.float64)
    p_f = 1.0 - phi((tf - score) / sigma).astype(np.float64)
    post = np.stack((p_n, 1.0 - p_n - p_f, p_f), axis=1)
    return float(np.mean(np.argmax(post, axis=1) == labels))


# --- preprocessing --------------------------------------------------------

STD_FLOOR = 1e-8


@dataclass(eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != (len(FEATURES),) or self.std.shape != (len(FEATURES),):
            raise InvalidInputError("standardizer needs 8 means and 8 stddevs")
        if np.any(self.std <= 0) or not np.all(np.isfinite(self.std)):
            raise InvalidInputError("standardizer stddevs must be positive and finite")

    def __eq__(self, other):
        return (
            isinstance(other, Standardizer)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.std, other.std)
        )

    def apply(self, x):
        """z-scores for a record, an 8-vector, or an (n, 8) matrix."""
        if isinstance(x, SsdRecord):
            x = x.features()
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


def fit_standardizer(train: Dataset) -> Standardizer:
    X = train.features()
    if X.shape[0] == 0:
        raise EmptyDatasetError("cannot fit a standardizer on an empty dataset")
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    return Standardizer(mean, std)


def apply(std: Standardizer, record) -> np.ndarray:
    return std.apply(record)


def encode_sequence(std_features, mode="features") -> np.ndarray:
    """Turn standardised features into the model's input sequence.

    ``features``: one time step per feature in canonical order -> (8, 1).
    ``timeseries``: rows are time steps of the 8 features -> (T, 8); a flat
    8-vector becomes a single step.
    """
    x = np.asarray(std_features, dtype=np.float64)
    if mode == "features":
        if x.shape != (len(FEATURES),):
            raise InvalidInputError(f"features mode needs 8 values, got shape {x.shape}")
        return x.reshape(len(FEATURES), 1).copy()
    if mode == "timeseries":
        x = np.atleast_2d(x)
        if x.ndim != 2 or x.shape[1] != len(FEATURES):
            raise InvalidInputError(f"timeseries mode needs (T, 8), got shape {x.shape}")
        return x.copy()
    raise ConfigError(f"unsupported encoding mode {mode!r}")


def encode_dataset(std: Standardizer, ds: Dataset, mode="features") -> np.ndarray:
    """Standardise and encode every record: (n, 8, 1) in features mode."""
    Z = std.apply(ds.features())
    if mode == "features":
        return Z.reshape(len(ds), len(FEATURES), 1)
    return np.stack([encode_sequence(z, mode) for z in Z])


def split_stratified(ds: Dataset, test_fraction=0.2, seed=42):
    """Per-class seeded shuffle; round(count * test_fraction) of each class go to test.

    Both halves keep the records' original relative order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction!r}")
    labels = ds.labels()
    rng = np.random.default_rng([seed, 1])
    test_idx = []
    for cls in HealthLabel:
        idx = np.flatnonzero(labels == int(cls))
        if idx.size < 2:
            raise StratificationError(
                f"class {cls.canonical} has {idx.size} record(s); stratification needs >= 2"
            )
        k = int(math.floor(idx.size * test_fraction + 0.5))
        test_idx.extend(rng.permutation(idx)[:k].tolist())
    in_test = np.zeros(len(ds), dtype=bool)
    in_test[test_idx] = True
    train = Dataset([r for r, t in zip(ds.records, in_test) if not t], ds.provenance + ":train")
    test = Dataset([r for r, t in zip(ds.records, in_test) if t], ds.provenance + ":test")
    return train, test
