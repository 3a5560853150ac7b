"""Few-shot experiment runner.

One run trains a single source network, then for every repetition and shot
count samples a target episode and evaluates every configured method on that
same episode, so methods are compared on paired data.
"""

import csv
import io
import json
import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import data as D
from . import nn, transfer
from .estimators import FewShotClassifier
from .exceptions import FSHARError, InvalidConfigurationError, InvalidInputError
from .ngd import HitCountTable

log = logging.getLogger(__name__)

CSV_HEADER = ["method", "normalization", "shots", "mean_acc", "sd_acc", "n_reps"]
NO_NORMALIZATION = "none"


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``data`` is either ``{"synthetic": {...synth_generate kwargs...}}`` or
    ``{"schema": path, "recordings": [paths], "window": {"duration_s", "overlap"}}``;
    separate ``source_recordings`` / ``target_recordings`` lists put source and
    target data on different participants. ``split`` holds
    ``source_classes``, ``target_classes`` and optional ``class_terms``, or
    ``{"preset": "opp" | "pamap2"}``.
    """

    data: dict
    split: dict
    methods: list = field(default_factory=lambda: ["randinit", "fetr_softmax", "fetr_nn",
                                                   "imprint", "fshar_cos", "fshar_sr"])
    normalizations: list = field(default_factory=lambda: ["soft", "hard"])
    shots: list = field(default_factory=lambda: [1, 5])
    repetitions: int = 20
    lam: float = 1e-2
    solver_tol: float = 1e-6
    solver_max_iter: int = 1000
    network: dict = field(default_factory=lambda: dict(nn.OPP_SIZES))
    source_training: dict = field(default_factory=lambda: {"epochs": 100, "lr": 1e-3,
                                                           "batch_size": 64, "clip_norm": 5.0})
    fine_tuning: dict = field(default_factory=lambda: {"epochs": 50, "lr": 1e-3, "clip_norm": 5.0})
    source_per_class: int = None
    target_per_class: int = None
    standardize: bool = True
    imprint_normalize: bool = False
    base_seed: int = 0
    hit_table: str = None
    output: str = None
    format: str = "csv"
    n_jobs: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise InvalidConfigurationError("repetitions must be >= 1")
        if not self.shots or min(self.shots) < 1:
            raise InvalidConfigurationError("shots must be >= 1")
        unknown = [m for m in self.methods if m not in transfer.METHODS]
        if unknown:
            raise InvalidConfigurationError(f"unknown methods {unknown}")
        bad = [n for n in self.normalizations if n not in transfer.NORMALIZATIONS]
        if bad:
            raise InvalidConfigurationError(f"unknown normalizations {bad}")
        if "fshar_sr" in self.methods and not self.lam > 0:
            raise InvalidConfigurationError("lam must be > 0 for fshar_sr")
        if "fshar_ngd" in self.methods and not self.hit_table:
            raise InvalidConfigurationError("fshar_ngd needs a hit_table path")
        if self.format not in ("csv", "json"):
            raise InvalidConfigurationError(f"unknown format {self.format!r}")

    @classmethod
    def from_dict(cls, doc, base_dir=None):
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise InvalidConfigurationError(f"unknown config keys {sorted(extra)}")
        cfg = cls(**doc)
        cfg._base_dir = Path(base_dir) if base_dir else Path.cwd()
        return cfg

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else getattr(self, "_base_dir", Path.cwd()) / p

    def variants(self):
        """(method, normalization) pairs in report order."""
        out = []
        for m in self.methods:
            if m in transfer.FSHAR_METHODS:
                out.extend((m, n) for n in self.normalizations)
            else:
                out.append((m, NO_NORMALIZATION))
        return out


@dataclass
class MethodResult:
    method: str
    normalization: str
    shots: int
    accuracies: list
    init_accuracies: list = None

    @property
    def mean(self):
        return aggregate(self.accuracies)[0]

    @property
    def sd(self):
        return aggregate(self.accuracies)[1]


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    source_accuracy: float = None

    def get(self, method, normalization=NO_NORMALIZATION, shots=1):
        for row in self.rows:
            if (row.method, row.normalization, row.shots) == (method, normalization, shots):
                return row
        raise KeyError((method, normalization, shots))

    def to_dict(self):
        return {
            "rows": [
                dict(asdict(r), mean_acc=r.mean, sd_acc=r.sd, n_reps=len(r.accuracies))
                for r in self.rows
            ],
            "failures": list(self.failures),
            "source_accuracy": self.source_accuracy,
        }

    @classmethod
    def from_dict(cls, doc):
        rows = [
            MethodResult(r["method"], r["normalization"], r["shots"], list(r["accuracies"]),
                         None if r.get("init_accuracies") is None else list(r["init_accuracies"]))
            for r in doc["rows"]
        ]
        return cls(rows, list(doc.get("failures", [])), doc.get("source_accuracy"))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([r.method, r.normalization, r.shots, repr(r.mean), repr(r.sd), len(r.accuracies)])
        return buf.getvalue()


def aggregate(values):
    """Arithmetic mean and sample standard deviation (0 for a single value)."""
    values = [float(v) for v in values]
    if not values:
        raise InvalidInputError("cannot aggregate an empty list")
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def emit_report(table, fmt, path=None):
    """Serialise ``table`` as CSV or JSON; write to ``path`` when given. Returns the text."""
    if fmt == "csv":
        text = table.to_csv()
    elif fmt == "json":
        text = table.to_json()
    else:
        raise InvalidConfigurationError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# --------------------------------------------------------------------------
# Data preparation
# --------------------------------------------------------------------------

def _split_spec(split):
    if "preset" in split:
        presets = {"opp": D.OPP_SPLIT, "pamap2": D.PAMAP2_SPLIT}
        try:
            return presets[split["preset"].lower()]
        except KeyError:
            raise InvalidConfigurationError(f"unknown split preset {split['preset']!r}") from None
    return D.SplitSpec(split["source_classes"], split["target_classes"], split.get("class_terms", {}))


def _windows(cfg, paths, schema):
    window = cfg.data.get("window", {"duration_s": 1.0, "overlap": 0.5})
    batches = []
    for p in paths:
        rec = D.load_recording(cfg.resolve(p), schema)
        batch = D.sliding_window(rec, window["duration_s"], window["overlap"])
        batches.append(D.drop_label(batch, schema.null_label))
    return D.concat_batches(batches)


def prepare_data(cfg):
    """Return ``(source, target_pool, spec)`` with standardisation applied."""
    spec = _split_spec(cfg.split)
    seed = np.random.SeedSequence([cfg.base_seed, 0xDA7A])
    s_bal, t_bal = seed.spawn(2)
    if "synthetic" in cfg.data:
        syn = dict(cfg.data["synthetic"])
        syn.setdefault("seed", cfg.base_seed)
        src, pool = D.split_domains(D.synth_generate(**syn), spec)
    else:
        schema = D.RecordingSchema.from_json(cfg.resolve(cfg.data["schema"]))
        if "recordings" in cfg.data:
            src, pool = D.split_domains(_windows(cfg, cfg.data["recordings"], schema), spec)
        else:
            src, _ = D.split_domains(_windows(cfg, cfg.data["source_recordings"], schema), spec)
            _, pool = D.split_domains(_windows(cfg, cfg.data["target_recordings"], schema), spec)
    if cfg.source_per_class:
        src = D.balance_classes(src, cfg.source_per_class, s_bal)
    if cfg.target_per_class:
        pool = D.balance_classes(pool, cfg.target_per_class, t_bal)
    if cfg.standardize:
        scaler = D.ChannelStandardizer().fit(src.X)
        src = D.SequenceBatch(scaler.transform(src.X), src.y, src.classes)
        pool = D.SequenceBatch(scaler.transform(pool.X), pool.y, pool.classes)
    return src, pool, spec


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------

def episode_seed(base_seed, repetition):
    return np.random.SeedSequence([base_seed, repetition])


def method_seed(base_seed, repetition, shots, method):
    return np.random.SeedSequence([base_seed, repetition, shots, zlib.crc32(method.encode())])


def _run_episode(cfg, source, pool, spec, provider, variants, repetition, shots):
    episode = D.sample_episode(pool, shots, episode_seed(cfg.base_seed, repetition))
    out = {}
    terms = {}
    if provider is not None:
        terms = dict(source_terms=spec.terms("source"), target_terms=spec.terms("target"))
    for method, norm in variants:
        key = (method, norm, shots)
        try:
            clf = FewShotClassifier(
                source,
                method=method,
                normalization=norm if norm != NO_NORMALIZATION else "soft",
                lam=cfg.lam,
                solver_tol=cfg.solver_tol,
                solver_max_iter=cfg.solver_max_iter,
                hit_table=provider if method == "fshar_ngd" else None,
                fine_tune_epochs=cfg.fine_tuning.get("epochs", 50),
                lr=cfg.fine_tuning.get("lr", 1e-3),
                clip_norm=cfg.fine_tuning.get("clip_norm", 5.0),
                imprint_normalize=cfg.imprint_normalize,
                random_state=method_seed(cfg.base_seed, repetition, shots, method),
                **(terms if method == "fshar_ngd" else {}),
            ).fit(episode.train.X, episode.train.y)
            acc = 100.0 * clf.score(episode.test.X, episode.test.y)
            init_acc = None
            if clf.init_ is not None:
                init_acc = 100.0 * clf.score(episode.test.X, episode.test.y, stage="init")
            out[key] = (acc, init_acc)
        except (FSHARError, ValueError, KeyError, FloatingPointError) as exc:
            log.error("%s/%s %d-shot rep %d failed: %s", method, norm, shots, repetition, exc)
            out[key] = exc
    log.info("repetition %d, %d-shot done", repetition, shots)
    return repetition, out


def train_source_model(cfg, src):
    st = cfg.source_training
    config = nn.TrainConfig(
        epochs=st.get("epochs", 100),
        lr=st.get("lr", 1e-3),
        batch_size=st.get("batch_size", 64),
        clip_norm=st.get("clip_norm", 5.0),
    )
    return transfer.train_source(src, config, seed=np.random.SeedSequence([cfg.base_seed, 0x5EC]),
                                 sizes=cfg.network)


def run_experiment(cfg, source=None, prepared=None):
    """Run every configured method on shared episodes and collect accuracies (in %)."""
    src, pool, spec = prepared if prepared is not None else prepare_data(cfg)
    provider = HitCountTable.from_json(cfg.resolve(cfg.hit_table)) if cfg.hit_table else None
    if source is None:
        log.info("training source network on %d windows, %d classes", len(src), src.n_classes)
        source = train_source_model(cfg, src)
        log.info("source loss %.4f -> %.4f", source.loss_history[0], source.final_loss)
    variants = cfg.variants()
    jobs = [(r, k) for k in cfg.shots for r in range(cfg.repetitions)]

    def job(args):
        return _run_episode(cfg, source, pool, spec, provider, variants, *args)

    if cfg.n_jobs and cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as ex:
            done = list(ex.map(job, jobs))
    else:
        done = [job(j) for j in jobs]

    collected = {}
    failed = {}
    for repetition, out in sorted(done, key=lambda t: t[0]):
        for key, value in out.items():
            if isinstance(value, Exception):
                failed.setdefault(key, f"repetition {repetition}: {value}")
            else:
                collected.setdefault(key, []).append(value)

    table = ResultTable(source_accuracy=100.0 * nn.accuracy(source.params, src.X, src.y))
    for k in cfg.shots:
        for method, norm in variants:
            key = (method, norm, k)
            if key in failed:
                table.failures.append({"method": method, "normalization": norm, "shots": k,
                                       "error": failed[key]})
                continue
            accs = [a for a, _ in collected[key]]
            inits = [b for _, b in collected[key]]
            table.rows.append(MethodResult(method, norm, k, accs,
                                           None if inits[0] is None else inits))
    table.rows.sort(key=lambda r: (r.method, r.normalization, r.shots))
    table.failures.sort(key=lambda f: (f["method"], f["normalization"], f["shots"]))
    return table


def synthetic_benchmark_config(**overrides):
    """Desk-scale benchmark: 15 sinusoid classes, 10 source / 5 target."""
    doc = dict(
        data={"synthetic": {"c_classes": 15, "n_per_class": 60, "T": 24, "C": 3, "noise_sd": 1.0}},
        split={"source_classes": list(range(10)), "target_classes": list(range(10, 15))},
        network={"lstm_hidden": 32, "fc1": 32, "fc2": 32},
    )
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)
