"""Sensor recordings to few-shot episodes.

Recordings are delimited text files with one row per timestep. They are cut
into fixed-length windows, balanced per class, split into source and target
label spaces, and target pools are sampled into k-shot episodes.
"""

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    InsufficientSamplesError,
    InvalidConfigurationError,
    InvalidInputError,
    ParseError,
)
from .validation import check_labels, check_sequences

log = logging.getLogger(__name__)


@dataclass
class SequenceBatch:
    """Windows ``X`` of shape (n, T, C) with integer labels ``y``.

    ``classes[k]`` is the original class id behind re-indexed label ``k``.
    """

    X: np.ndarray
    y: np.ndarray
    classes: tuple = None

    def __post_init__(self):
        self.X = check_sequences(self.X)
        self.y = check_labels(self.y, self.X.shape[0])
        if self.classes is not None:
            self.classes = tuple(int(c) for c in self.classes)
            if self.y.size and self.y.max() >= len(self.classes):
                raise InvalidInputError("label outside the class mapping")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_classes(self):
        if self.classes is not None:
            return len(self.classes)
        return int(self.y.max()) + 1 if self.y.size else 0

    def subset(self, idx):
        return SequenceBatch(self.X[idx], self.y[idx], self.classes)


@dataclass
class RecordingSchema:
    delimiter: str
    label_col: int
    channel_cols: list
    sample_rate_hz: float
    skip_header: int = 0
    null_label: int = None

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise InvalidConfigurationError("sample_rate_hz must be > 0")
        if not self.channel_cols:
            raise InvalidConfigurationError("schema declares no channel columns")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            return cls(
                delimiter=doc["delimiter"],
                label_col=int(doc["label_col"]),
                channel_cols=[int(c) for c in doc["channel_cols"]],
                sample_rate_hz=float(doc["sample_rate_hz"]),
                skip_header=int(doc.get("skip_header", 0)),
                null_label=doc.get("null_label"),
            )
        except KeyError as exc:
            raise InvalidConfigurationError(f"schema missing field {exc}") from None

    def to_dict(self):
        d = {
            "delimiter": self.delimiter,
            "label_col": self.label_col,
            "channel_cols": list(self.channel_cols),
            "sample_rate_hz": self.sample_rate_hz,
        }
        if self.skip_header:
            d["skip_header"] = self.skip_header
        if self.null_label is not None:
            d["null_label"] = self.null_label
        return d


@dataclass
class RawRecording:
    values: np.ndarray
    labels: np.ndarray
    sample_rate: float
    dropped: int = 0

    def __len__(self):
        return self.values.shape[0]


def load_recording(path, schema):
    """Parse a delimited recording; rows with non-finite channel values are dropped."""
    needed = max([schema.label_col, *schema.channel_cols])
    values, labels = [], []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        for lineno, row in enumerate(reader, start=1):
            if lineno <= schema.skip_header or not row or all(not c.strip() for c in row):
                continue
            if needed >= len(row):
                raise InvalidConfigurationError(
                    f"line {lineno}: schema refers to column {needed}, row has {len(row)} columns"
                )
            try:
                chans = [float(row[c]) for c in schema.channel_cols]
                label = float(row[schema.label_col])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if not math.isfinite(label) or label != int(label):
                raise ParseError(f"label {row[schema.label_col]!r} is not an integer", line=lineno)
            if not all(math.isfinite(v) for v in chans):
                dropped += 1
                continue
            values.append(chans)
            labels.append(int(label))
    if not values:
        raise InvalidInputError(f"{path}: no usable rows")
    if dropped:
        log.info("%s: dropped %d rows with non-finite values", path, dropped)
    return RawRecording(
        np.asarray(values, dtype=np.float64),
        np.asarray(labels, dtype=np.int64),
        schema.sample_rate_hz,
        dropped,
    )


def window_label(labels):
    """Majority label; ties go to the label that occurs first in the window."""
    counts = Counter(labels.tolist())
    best = max(counts.values())
    for lab in labels.tolist():
        if counts[lab] == best:
            return lab


def window_starts(n, T, stride):
    return range(0, n - T + 1, stride) if n >= T else range(0)


def sliding_window(rec, duration_s, overlap):
    """Cut a recording into windows of ``round(duration_s * rate)`` samples.

    Consecutive windows start ``floor(T * (1 - overlap))`` samples apart
    (at least one). Labels are the original class ids.
    """
    T = int(round(duration_s * rec.sample_rate))
    if T < 1:
        raise InvalidConfigurationError("window shorter than one sample")
    if not 0 <= overlap < 1:
        raise InvalidConfigurationError(f"overlap must be in [0, 1), got {overlap}")
    stride = max(1, int(math.floor(T * (1.0 - overlap) + 1e-9)))
    starts = list(window_starts(len(rec), T, stride))
    C = rec.values.shape[1]
    X = np.empty((len(starts), T, C))
    y = np.empty(len(starts), dtype=np.int64)
    for k, s in enumerate(starts):
        X[k] = rec.values[s:s + T]
        y[k] = window_label(rec.labels[s:s + T])
    return SequenceBatch(X, y)


def drop_label(batch, label):
    if label is None:
        return batch
    return batch.subset(np.flatnonzero(batch.y != label))


def concat_batches(batches):
    batches = list(batches)
    if not batches:
        raise InvalidInputError("nothing to concatenate")
    return SequenceBatch(
        np.concatenate([b.X for b in batches]), np.concatenate([b.y for b in batches])
    )


def balance_classes(batch, per_class, seed=None):
    """Keep exactly ``per_class`` randomly chosen samples of every class present."""
    rng = np.random.default_rng(seed)
    keep = []
    for label in np.unique(batch.y):
        idx = np.flatnonzero(batch.y == label)
        if idx.size < per_class:
            raise InsufficientSamplesError(
                f"class {label} has {idx.size} samples, need {per_class}", label=int(label)
            )
        keep.append(np.sort(rng.choice(idx, size=per_class, replace=False)))
    keep = np.concatenate(keep) if keep else np.zeros(0, dtype=np.int64)
    return batch.subset(np.sort(keep))


# --------------------------------------------------------------------------
# Source / target splits and episodes
# --------------------------------------------------------------------------

@dataclass
class SplitSpec:
    """Disjoint source and target class ids plus a text description per class."""

    source_classes: tuple
    target_classes: tuple
    class_terms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.source_classes = tuple(int(c) for c in self.source_classes)
        self.target_classes = tuple(int(c) for c in self.target_classes)
        self.class_terms = {int(k): v for k, v in self.class_terms.items()}
        if not self.source_classes or not self.target_classes:
            raise InvalidConfigurationError("source and target class sets must be non-empty")
        overlap = set(self.source_classes) & set(self.target_classes)
        if overlap:
            raise InvalidConfigurationError(f"classes {sorted(overlap)} are both source and target")
        for cls in (self.source_classes, self.target_classes):
            if len(set(cls)) != len(cls):
                raise InvalidConfigurationError("duplicate class id in split")

    def terms(self, domain):
        ids = self.source_classes if domain == "source" else self.target_classes
        missing = [c for c in ids if c not in self.class_terms]
        if missing:
            raise InvalidConfigurationError(f"no text description for classes {missing}")
        return [self.class_terms[c] for c in ids]


# Activity lists, source classes first. Class ids are positions in these
# lists. Terms merge the same gesture on different objects, e.g. both doors
# map to "open door".
OPP_ACTIVITIES = (
    "Open Door 2", "Close Door 2", "Close Fridge", "Close Dishwasher", "Close Drawer 1",
    "Close Drawer 2", "Close Drawer 3", "Clean Table", "Drink from Cup", "Toggle Switch",
    "Open Door 1", "Close Door 1", "Open Fridge", "Open Dishwasher", "Open Drawer 1",
    "Open Drawer 2", "Open Drawer 3",
)
PAMAP2_ACTIVITIES = (
    "Lying", "Standing", "Walking", "Running", "Ascending Stairs", "Vacuum Cleaning",
    "Rope Jumping", "Sitting", "Cycling", "Nordic Walking", "Descending Stairs", "Ironing",
)


def _object_free_term(name):
    return " ".join(w for w in name.split() if not w.isdigit()).lower()


OPP_SPLIT = SplitSpec(
    source_classes=range(10),
    target_classes=range(10, 17),
    class_terms={i: _object_free_term(n) for i, n in enumerate(OPP_ACTIVITIES)},
)
PAMAP2_SPLIT = SplitSpec(
    source_classes=range(7),
    target_classes=range(7, 12),
    class_terms={i: n.lower() for i, n in enumerate(PAMAP2_ACTIVITIES)},
)


def split_domains(batch, spec):
    """Partition ``batch`` by class into (source, target pool), re-indexing labels.

    Label ``k`` of each output refers to ``spec.source_classes[k]`` (resp.
    ``target_classes[k]``); the mapping is kept in ``classes``. Samples of
    classes in neither set are discarded.
    """
    present = set(np.unique(batch.y).tolist())
    missing = [c for c in spec.source_classes + spec.target_classes if c not in present]
    if missing:
        raise InvalidInputError(f"classes {missing} from the split are absent from the data")
    out = []
    for ids in (spec.source_classes, spec.target_classes):
        lookup = {c: k for k, c in enumerate(ids)}
        idx = np.flatnonzero(np.isin(batch.y, ids))
        y = np.array([lookup[c] for c in batch.y[idx].tolist()], dtype=np.int64)
        out.append(SequenceBatch(batch.X[idx], y, ids))
    return out[0], out[1]


@dataclass
class Episode:
    train: SequenceBatch
    test: SequenceBatch
    k: int
    train_index: np.ndarray = None
    test_index: np.ndarray = None


def sample_episode(pool, k, seed=None):
    """Draw ``k`` training samples per class; everything else in the pool is test data."""
    if k < 1:
        raise InvalidConfigurationError("k must be >= 1")
    rng = np.random.default_rng(seed)
    train_idx = []
    for label in range(pool.n_classes):
        idx = np.flatnonzero(pool.y == label)
        if idx.size <= k:
            raise InsufficientSamplesError(
                f"class {label} has {idx.size} samples, need more than {k}", label=label
            )
        train_idx.append(rng.choice(idx, size=k, replace=False))
    train_idx = np.concatenate(train_idx)
    test_mask = np.ones(len(pool), dtype=bool)
    test_mask[train_idx] = False
    test_idx = np.flatnonzero(test_mask)
    return Episode(pool.subset(train_idx), pool.subset(test_idx), k, train_idx, test_idx)


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------

def class_pattern(label, T, C):
    """Deterministic (T, C) sinusoid pattern for class ``label``.

    Frequencies and phases are spread with irrational strides so that every
    class differs from every other in each channel.
    """
    t = np.arange(T) / T
    pattern = np.empty((T, C))
    for c in range(C):
        freq = 0.5 + 3.0 * (((label + 1) * 0.6180339887 + c * 0.3090169944) % 1.0)
        phase = 2 * np.pi * (((label + 1) * 0.4142135624 + c * 0.7320508076) % 1.0)
        pattern[:, c] = np.sin(2 * np.pi * freq * t + phase)
    return pattern


def synth_generate(c_classes, n_per_class, T, C, noise_sd, seed=None, first_class=0):
    """Noisy copies of per-class sinusoid patterns, ``n_per_class`` of each class.

    Labels are ``0 .. c_classes - 1``; the patterns used are those of classes
    ``first_class .. first_class + c_classes - 1`` so disjoint ranges give
    disjoint class families and equal ranges give clones.
    """
    for name, v in (("c_classes", c_classes), ("n_per_class", n_per_class), ("T", T), ("C", C)):
        if v < 1:
            raise InvalidConfigurationError(f"{name} must be positive")
    if noise_sd < 0:
        raise InvalidConfigurationError("noise_sd must be >= 0")
    rng = np.random.default_rng(seed)
    patterns = np.stack([class_pattern(first_class + k, T, C) for k in range(c_classes)])
    y = np.repeat(np.arange(c_classes), n_per_class)
    X = patterns[y] + noise_sd * rng.standard_normal((y.size, T, C))
    return SequenceBatch(X, y)


# --------------------------------------------------------------------------
# Standardisation
# --------------------------------------------------------------------------

class ChannelStandardizer(TransformerMixin, BaseEstimator):
    """Zero-mean, unit-variance scaling per channel, pooled over samples and time."""

    def __init__(self, eps=1e-12):
        self.eps = eps

    def fit(self, X, y=None):
        X = check_sequences(X, allow_empty=False)
        self.mean_ = X.mean(axis=(0, 1))
        scale = X.std(axis=(0, 1))
        self.scale_ = np.where(scale > self.eps, scale, 1.0)
        self.n_channels_ = X.shape[2]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_sequences(X, n_channels=self.n_channels_)
        return (X - self.mean_) / self.scale_


# --------------------------------------------------------------------------
# Windowed-batch cache
# --------------------------------------------------------------------------

def save_batch(path, batch):
    """Write ``path`` (raw little-endian float64) and ``path + '.json'`` header."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(batch.X, dtype="<f8").tobytes())
    n, T, C = batch.X.shape
    header = {"n": n, "T": T, "C": C, "labels": batch.y.tolist()}
    if batch.classes is not None:
        header["classes"] = list(batch.classes)
    Path(str(path) + ".json").write_text(json.dumps(header, sort_keys=True) + "\n")


def load_batch(path):
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    n, T, C = header["n"], header["T"], header["C"]
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if raw.size != n * T * C or len(header["labels"]) != n:
        raise InvalidInputError(f"{path}: payload does not match header")
    return SequenceBatch(raw.reshape(n, T, C).astype(np.float64), header["labels"], header.get("classes"))
