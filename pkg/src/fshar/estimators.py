"""scikit-learn compatible estimators over the functional core.

``LSTMClassifier`` trains the source network. ``FewShotClassifier`` takes a
trained source model and fits a target classifier from a handful of
labelled windows with any of the transfer methods::

    source = LSTMClassifier(epochs=100, random_state=0).fit(X_src, y_src)
    clf = FewShotClassifier(source, method="fshar_cos", normalization="soft")
    clf.fit(X_shot, y_shot).score(X_test, y_test)
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import nn, transfer
from .exceptions import InvalidConfigurationError, InvalidInputError
from .relevance import normalize
from .validation import check_sequences


def _encode(y, n_samples):
    """Map arbitrary class labels to ``0 .. n_classes - 1``."""
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise InvalidInputError(f"expected {n_samples} labels, got shape {y.shape}")
    classes, y_enc = np.unique(y, return_inverse=True)
    return classes, y_enc.astype(np.int64)


class LSTMClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Stacked-LSTM sequence classifier; ``transform`` returns embeddings.

    Parameters
    ----------
    lstm_hidden, fc1, fc2 : int
        Hidden sizes. ``fc2`` is the embedding dimension.
    epochs, lr, batch_size, clip_norm : training settings for Adam.
    random_state : int or None
    """

    def __init__(self, lstm_hidden=64, fc1=64, fc2=64, epochs=100, lr=1e-3,
                 batch_size=64, clip_norm=5.0, random_state=None):
        self.lstm_hidden = lstm_hidden
        self.fc1 = fc1
        self.fc2 = fc2
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.random_state = random_state

    def fit(self, X, y):
        X = check_sequences(X, allow_empty=False)
        self.classes_, y_enc = _encode(y, X.shape[0])
        config = nn.TrainConfig(
            epochs=self.epochs, lr=self.lr, batch_size=self.batch_size, clip_norm=self.clip_norm
        )
        self.source_ = transfer.train_source(
            (X, y_enc),
            config,
            seed=self.random_state,
            sizes=dict(lstm_hidden=self.lstm_hidden, fc1=self.fc1, fc2=self.fc2),
        )
        self.loss_curve_ = list(self.source_.loss_history)
        self.n_features_in_ = X.shape[2]
        return self

    @property
    def params_(self):
        check_is_fitted(self, "source_")
        return self.source_.params

    def transform(self, X):
        return nn.feature_extract(self.params_, X)

    def predict_proba(self, X):
        return nn.predict_proba(self.params_, X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class FewShotClassifier(ClassifierMixin, BaseEstimator):
    """Target-task classifier initialised by transfer from a source network.

    Parameters
    ----------
    source : SourceModel or fitted LSTMClassifier
    method : {"randinit", "fetr_softmax", "fetr_nn", "imprint",
              "fshar_cos", "fshar_sr", "fshar_ngd"}
    normalization : {"soft", "hard"}
        Only used by the ``fshar_*`` methods.
    lam, solver_tol, solver_max_iter : sparse reconstruction settings.
    hit_table : HitCountTable, required for ``fshar_ngd``.
    source_terms : list of str
        Text description of each source class (``fshar_ngd``).
    target_terms : list of str
        Text description of each target class, in the order of the sorted
        target labels (``fshar_ngd``).
    fine_tune_epochs, lr, clip_norm : fine-tuning settings.
    imprint_normalize : bool
        Unit-normalise embeddings before imprinting.
    sr_granularity : {"entry", "row"}
    random_state : int, SeedSequence or None
        Seeds random classifier initialisation.

    Attributes
    ----------
    init_ : TargetInit or None
        Target network before fine-tuning (None for ``fetr_nn``).
    params_ : dict or None
        Fine-tuned target network.
    relevance_, transfer_weights_ : ndarray or None
        Class relevance and normalised transfer weights (``fshar_*`` only).
    """

    def __init__(self, source=None, method="fshar_cos", normalization="soft", lam=1e-2,
                 solver_tol=1e-6, solver_max_iter=1000, hit_table=None, source_terms=None,
                 target_terms=None, fine_tune_epochs=50, lr=1e-3, clip_norm=5.0,
                 imprint_normalize=False, sr_granularity="entry", random_state=None):
        self.source = source
        self.method = method
        self.normalization = normalization
        self.lam = lam
        self.solver_tol = solver_tol
        self.solver_max_iter = solver_max_iter
        self.hit_table = hit_table
        self.source_terms = source_terms
        self.target_terms = target_terms
        self.fine_tune_epochs = fine_tune_epochs
        self.lr = lr
        self.clip_norm = clip_norm
        self.imprint_normalize = imprint_normalize
        self.sr_granularity = sr_granularity
        self.random_state = random_state

    def _source_model(self):
        src = self.source
        if isinstance(src, LSTMClassifier):
            check_is_fitted(src, "source_")
            src = src.source_
        if not isinstance(src, transfer.SourceModel) or not src.trained:
            raise InvalidConfigurationError("FewShotClassifier needs a trained source model")
        return src

    def _initialise(self, source, X, y, n_classes, rng):
        method = self.method
        if method == "randinit":
            return transfer.randinit(source.sizes, n_classes, rng)
        if method == "fetr_softmax":
            return transfer.fetr_softmax_init(source, n_classes, rng)
        if method == "imprint":
            return transfer.imprint_weights(source, (X, y), n_classes, self.imprint_normalize)
        if method in transfer.FSHAR_METHODS:
            O = transfer.class_relevance(
                method, source, (X, y), n_classes,
                lam=self.lam, tol=self.solver_tol, max_iter=self.solver_max_iter,
                provider=self.hit_table, src_terms=self.source_terms, trg_terms=self.target_terms,
                sr_granularity=self.sr_granularity,
            )
            return transfer.init_target(
                source, normalize(O, self.normalization), method, self.normalization, O
            )
        raise InvalidConfigurationError(f"unknown method {method!r}")

    def fit(self, X, y):
        if self.method not in transfer.METHODS:
            raise InvalidConfigurationError(f"unknown method {self.method!r}")
        if self.method in transfer.FSHAR_METHODS and self.normalization not in transfer.NORMALIZATIONS:
            raise InvalidConfigurationError(f"unknown normalization {self.normalization!r}")
        source = self._source_model()
        X = check_sequences(X, n_channels=source.sizes.n_channels, allow_empty=False)
        self.classes_, y_enc = _encode(y, X.shape[0])
        n_classes = len(self.classes_)
        rng = np.random.default_rng(self.random_state)
        self.source_ = source
        self.relevance_ = self.transfer_weights_ = None
        if self.method == "fetr_nn":
            self.init_ = self.params_ = None
            self.train_X_, self.train_y_ = X, y_enc
            return self
        self.init_ = self._initialise(source, X, y_enc, n_classes, rng)
        self.relevance_ = self.init_.relevance
        self.transfer_weights_ = self.init_.weights
        config = nn.TrainConfig(epochs=self.fine_tune_epochs, lr=self.lr, clip_norm=self.clip_norm)
        self.params_ = transfer.fine_tune(self.init_, (X, y_enc), config, rng)
        return self

    def _check(self):
        check_is_fitted(self, "classes_")

    def predict_proba(self, X, stage="final"):
        """Class probabilities from the fine-tuned (``stage="final"``) or
        initialised (``stage="init"``) network. For ``fetr_nn`` these are
        similarity masses summed per class."""
        self._check()
        if self.method == "fetr_nn":
            S = transfer.nn_similarity(self.source_, self.train_X_, X)
            P = np.zeros((S.shape[0], len(self.classes_)))
            np.add.at(P.T, self.train_y_, S.T)
            return P
        params = self.params_ if stage == "final" else self.init_.params
        return nn.predict_proba(params, X)

    def predict(self, X, stage="final"):
        self._check()
        if self.method == "fetr_nn":
            return self.classes_[transfer.nn_classify(self.source_, (self.train_X_, self.train_y_), X)]
        return self.classes_[np.argmax(self.predict_proba(X, stage), axis=1)]

    def score(self, X, y, sample_weight=None, stage="final"):
        y = np.asarray(y)
        return float(np.mean(self.predict(X, stage) == y))
