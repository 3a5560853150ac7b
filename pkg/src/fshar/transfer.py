"""Parameter transfer from a trained source network to a few-shot target network.

The target feature extractor always starts as a copy of the source one. The
target classifier starts from one of:

* ``randinit`` - nothing transferred, whole network freshly initialised
* ``fetr_softmax`` - random classifier on the copied extractor
* ``imprint`` - per-class mean embeddings of the target training samples
* ``fshar_cos`` / ``fshar_sr`` / ``fshar_ngd`` - relevance-weighted
  combinations of source classifier rows, ``W_trg = Wbar.T @ W_src``

``fetr_nn`` is a non-parametric baseline: nearest training sample under
cosine similarity of source embeddings, without fine-tuning.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .exceptions import (
    InsufficientSamplesError,
    InvalidConfigurationError,
    InvalidInputError,
)
from .ngd import ngd_class_relevance
from .relevance import (
    aggregate_classwise,
    cosine_relevance,
    normalize,
    sparse_reconstruction,
    sparse_relevance,
    unit_rows,
)
from .validation import check_labels, check_sequences

FSHAR_METHODS = ("fshar_cos", "fshar_sr", "fshar_ngd")
BASELINES = ("randinit", "fetr_softmax", "fetr_nn", "imprint")
METHODS = BASELINES + FSHAR_METHODS
NORMALIZATIONS = ("soft", "hard")


def _xy(data):
    if hasattr(data, "X"):
        return data.X, data.y
    X, y = data
    return X, y


@dataclass
class SourceModel:
    """Trained source network plus the embeddings of its training data."""

    params: dict
    sizes: nn.NetworkSizes
    seed: int
    epochs: int
    loss_history: list = field(default_factory=list)
    embeddings: np.ndarray = None
    labels: np.ndarray = None
    trained: bool = False

    @property
    def final_loss(self):
        return self.loss_history[-1] if self.loss_history else None

    @property
    def classifier(self):
        return self.params[nn.CLASSIFIER_KEY]

    @property
    def n_classes(self):
        return self.classifier.shape[0]

    def embed(self, X):
        return nn.feature_extract(self.params, X)


@dataclass
class TargetInit:
    params: dict
    method: str
    normalization: str = None
    relevance: np.ndarray = None
    weights: np.ndarray = None


def train_source(data, train_config=nn.TrainConfig(), seed=0, sizes=None):
    """Train the source network on ``data`` (labels contiguous from 0).

    ``sizes`` overrides the hidden sizes (``lstm_hidden``, ``fc1``, ``fc2``);
    the default is the 64/64/64 network.
    """
    X, y = _xy(data)
    X = check_sequences(X, allow_empty=False)
    y = check_labels(y, X.shape[0])
    present = np.unique(y)
    if present.size < 2:
        raise InvalidInputError("source data needs at least two classes")
    if not np.array_equal(present, np.arange(present.size)):
        raise InvalidInputError("source labels must be contiguous from 0")
    hidden = dict(nn.OPP_SIZES)
    hidden.update(sizes or {})
    net_sizes = nn.NetworkSizes(n_channels=X.shape[2], n_classes=int(present.size), **hidden)
    rng = np.random.default_rng(seed)
    params = nn.init_params(net_sizes, rng)
    history = nn.train(params, X, y, train_config, rng=rng)
    return SourceModel(
        params=params,
        sizes=net_sizes,
        seed=seed,
        epochs=train_config.epochs,
        loss_history=history,
        embeddings=nn.feature_extract(params, X),
        labels=y,
        trained=True,
    )


def _with_classifier(source, W):
    params = nn.copy_params(nn.extractor_params(source.params))
    params[nn.CLASSIFIER_KEY] = np.array(W, dtype=np.float64)
    return params


def init_target(source, Wbar, method="fshar", normalization=None, relevance=None):
    """Copy the source extractor and set the target classifier to ``Wbar.T @ W_src``."""
    Wbar = np.asarray(Wbar, dtype=np.float64)
    if Wbar.ndim != 2 or Wbar.shape[0] != source.n_classes:
        raise InvalidConfigurationError(
            f"transfer weights need {source.n_classes} rows, got shape {Wbar.shape}"
        )
    return TargetInit(
        _with_classifier(source, Wbar.T @ source.classifier), method, normalization, relevance, Wbar
    )


def class_means(emb, y, n_classes):
    counts = np.bincount(y, minlength=n_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise InsufficientSamplesError(f"target class {empty[0]} has no training samples", label=int(empty[0]))
    sums = np.zeros((n_classes, emb.shape[1]))
    np.add.at(sums, y, emb)
    return sums / counts[:, None]


def imprint_weights(source, trg_train, n_classes=None, normalize_embeddings=False):
    """Target classifier rows are the mean source embedding of each target class.

    With ``normalize_embeddings`` each embedding is scaled to unit length
    before averaging and the mean is re-normalised.
    """
    X, y = _xy(trg_train)
    emb = source.embed(X)
    y = check_labels(y, emb.shape[0])
    n_classes = n_classes if n_classes is not None else int(y.max()) + 1
    if normalize_embeddings:
        emb = unit_rows(emb, "target embedding")
    W = class_means(emb, y, n_classes)
    if normalize_embeddings:
        W = unit_rows(W, "imprinted weight")
    return TargetInit(_with_classifier(source, W), "imprint")


def fetr_softmax_init(source, n_classes, rng=None):
    """Copied extractor, Glorot-uniform random classifier."""
    rng = np.random.default_rng(rng)
    W = nn.init_classifier(rng, n_classes, source.sizes.d_embed)
    return TargetInit(_with_classifier(source, W), "fetr_softmax")


def randinit(source_sizes, n_classes, rng=None):
    sizes = nn.NetworkSizes(
        n_channels=source_sizes.n_channels,
        n_classes=n_classes,
        lstm_hidden=source_sizes.lstm_hidden,
        fc1=source_sizes.fc1,
        fc2=source_sizes.fc2,
    )
    return TargetInit(nn.init_params(sizes, rng), "randinit")


def class_relevance(method, source, trg_train, n_classes=None, lam=1e-2, tol=1e-6,
                    max_iter=1000, provider=None, src_terms=None, trg_terms=None,
                    sr_granularity="entry"):
    """Source-by-target class relevance matrix for one of the FSHAR measures."""
    if method == "fshar_ngd":
        if provider is None or src_terms is None or trg_terms is None:
            raise InvalidConfigurationError("fshar_ngd needs a hit-count table and class terms")
        if len(src_terms) != source.n_classes:
            raise InvalidConfigurationError("need one term per source class")
        return ngd_class_relevance(src_terms, trg_terms, provider)
    X, y = _xy(trg_train)
    trg_emb = source.embed(X)
    y = check_labels(y, trg_emb.shape[0])
    n_classes = n_classes if n_classes is not None else int(y.max()) + 1
    if method == "fshar_cos":
        A = cosine_relevance(source.embeddings, trg_emb)
    elif method == "fshar_sr":
        A = sparse_relevance(
            sparse_reconstruction(source.embeddings, trg_emb, lam, tol, max_iter).A,
            sr_granularity,
        )
    else:
        raise InvalidConfigurationError(f"{method!r} is not a relevance-based method")
    return aggregate_classwise(A, source.labels, y, source.n_classes, n_classes)


def nn_similarity(source, trg_train_X, test_X):
    """Softmax over training samples of the cosine similarity to each test sample."""
    train = unit_rows(source.embed(trg_train_X), "training embedding")
    test = unit_rows(source.embed(test_X), "test embedding")
    cos = test @ train.T
    S = np.exp(cos - cos.max(axis=1, keepdims=True))
    return S / S.sum(axis=1, keepdims=True)


def nn_classify(source, trg_train, test):
    """Label of the most similar training sample for every test sample; no fine-tuning."""
    X_tr, y_tr = _xy(trg_train)
    X_te = test.X if hasattr(test, "X") else np.asarray(test)
    y_tr = np.asarray(y_tr)
    if len(y_tr) == 0:
        raise InvalidInputError("nearest-neighbour classifier needs training samples")
    if len(X_te) == 0:
        return np.zeros(0, dtype=np.int64)
    return y_tr[np.argmax(nn_similarity(source, X_tr, X_te), axis=1)]


def fine_tune(init, trg_train, train_config=nn.TrainConfig(epochs=50), rng=None):
    """Fine-tune extractor and classifier together; ``init`` is left untouched."""
    X, y = _xy(trg_train)
    if len(y) == 0:
        raise InvalidInputError("fine-tuning needs at least one training sample")
    params = nn.copy_params(init.params)
    if train_config.epochs == 0:
        return params
    nn.train(params, X, y, train_config, rng=rng)
    return params


def merge_models(source, init):
    """Extractor of the source, classifier rows ``[W_src; W_trg]`` (source rows first)."""
    W_trg = init.params[nn.CLASSIFIER_KEY]
    if W_trg.shape[1] != source.classifier.shape[1]:
        raise InvalidConfigurationError(
            f"embedding dims differ: {source.classifier.shape[1]} vs {W_trg.shape[1]}"
        )
    return _with_classifier(source, np.vstack([source.classifier, W_trg]))
