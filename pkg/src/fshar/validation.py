"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .exceptions import InvalidConfigurationError, InvalidInputError, NumericInputError


def check_sequences(X, n_channels=None, allow_empty=True):
    """Return ``X`` as a float64 array of shape (n_samples, n_timesteps, n_channels).

    A 2-D array is read as a single-channel batch. Raises
    :class:`NumericInputError` on non-finite values and
    :class:`InvalidConfigurationError` if the channel count does not match.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, :, np.newaxis]
    if X.ndim != 3:
        raise InvalidInputError(f"expected a 3-D array (n, T, C), got shape {X.shape}")
    if X.shape[1] < 1 or X.shape[2] < 1:
        raise InvalidInputError(f"need T >= 1 and C >= 1, got shape {X.shape}")
    if not allow_empty and X.shape[0] == 0:
        raise InvalidInputError("empty batch")
    if not np.all(np.isfinite(X)):
        raise NumericInputError("input contains NaN or infinite values")
    if n_channels is not None and X.shape[2] != n_channels:
        raise InvalidConfigurationError(
            f"input has {X.shape[2]} channels, network expects {n_channels}"
        )
    return X


def check_labels(y, n_samples, n_classes=None):
    """Return ``y`` as an int64 vector of length ``n_samples``."""
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise InvalidInputError(f"expected {n_samples} labels, got shape {y.shape}")
    if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
        raise InvalidInputError("labels must be integers")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise InvalidInputError("labels must be non-negative")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise InvalidInputError(f"label {y.max()} out of range for {n_classes} classes")
    return y


def check_embeddings(F, name="embeddings"):
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {F.shape}")
    if not np.all(np.isfinite(F)):
        raise NumericInputError(f"{name} contain NaN or infinite values")
    return F


def check_nonnegative_matrix(O, name="relevance"):
    O = np.asarray(O, dtype=np.float64)
    if O.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {O.shape}")
    if not np.all(np.isfinite(O)):
        raise NumericInputError(f"{name} contains NaN or infinite values")
    if np.any(O < 0):
        raise InvalidInputError(f"{name} must be non-negative")
    return O
