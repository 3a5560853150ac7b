"""Numpy sequence classifier: two stacked LSTM layers, two dense layers and a
softmax classifier, trained by backpropagation through time with Adam.

Parameters live in a flat ``dict[str, np.ndarray]``. Keys prefixed
``lstm1.``, ``lstm2.``, ``fc1.`` and ``fc2.`` form the feature extractor;
``classifier.W`` (n_classes x d_embed, no bias) is the softmax classifier.
LSTM gate blocks are stacked in the order input, forget, cell, output.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .exceptions import InvalidConfigurationError, InvalidInputError, NumericInputError
from .validation import check_embeddings, check_labels, check_sequences

EXTRACTOR_PREFIXES = ("lstm1.", "lstm2.", "fc1.", "fc2.")
CLASSIFIER_KEY = "classifier.W"
FORGET_BIAS = 1.0


@dataclass(frozen=True)
class NetworkSizes:
    """Layer sizes of the network. Both LSTM layers share ``lstm_hidden``."""

    n_channels: int
    n_classes: int
    lstm_hidden: int = 64
    fc1: int = 64
    fc2: int = 64

    def __post_init__(self):
        for name in ("n_channels", "n_classes", "lstm_hidden", "fc1", "fc2"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidConfigurationError(f"{name} must be a positive integer, got {value!r}")

    @property
    def d_embed(self):
        return self.fc2


# Hidden sizes used for the Opportunity and PAMAP2 experiments.
OPP_SIZES = dict(lstm_hidden=64, fc1=64, fc2=64)
PAMAP2_SIZES = dict(lstm_hidden=50, fc1=50, fc2=25)


def glorot_uniform(rng, shape):
    fan_out, fan_in = shape
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def init_lstm(rng, n_in, hidden):
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = FORGET_BIAS
    return {
        "W_ih": glorot_uniform(rng, (4 * hidden, n_in)),
        "W_hh": glorot_uniform(rng, (4 * hidden, hidden)),
        "b": b,
    }


def init_classifier(rng, n_classes, d_embed):
    if n_classes < 1 or d_embed < 1:
        raise InvalidConfigurationError("classifier sizes must be positive")
    return glorot_uniform(rng, (n_classes, d_embed))


def init_params(sizes, rng_seed=None):
    """Glorot-uniform weights, zero biases, forget-gate bias 1.0.

    ``rng_seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if not isinstance(sizes, NetworkSizes):
        sizes = NetworkSizes(**sizes)
    rng = np.random.default_rng(rng_seed)
    params = {}
    for prefix, n_in in (("lstm1.", sizes.n_channels), ("lstm2.", sizes.lstm_hidden)):
        for k, v in init_lstm(rng, n_in, sizes.lstm_hidden).items():
            params[prefix + k] = v
    params["fc1.W"] = glorot_uniform(rng, (sizes.fc1, sizes.lstm_hidden))
    params["fc1.b"] = np.zeros(sizes.fc1)
    params["fc2.W"] = glorot_uniform(rng, (sizes.fc2, sizes.fc1))
    params["fc2.b"] = np.zeros(sizes.fc2)
    params[CLASSIFIER_KEY] = init_classifier(rng, sizes.n_classes, sizes.fc2)
    return params


def copy_params(params):
    return {k: v.copy() for k, v in params.items()}


def extractor_params(params):
    return {k: v for k, v in params.items() if k.startswith(EXTRACTOR_PREFIXES)}


def layer(params, prefix):
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def n_channels(params):
    return params["lstm1.W_ih"].shape[1]


# --------------------------------------------------------------------------
# LSTM
# --------------------------------------------------------------------------

def lstm_forward(lp, x):
    """Run one LSTM layer over ``x`` (n, T, in) from zero initial state.

    Returns the hidden states (n, T, H) and a cache for :func:`lstm_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericInputError("LSTM input contains NaN or infinite values")
    W_ih, W_hh, b = lp["W_ih"], lp["W_hh"], lp["b"]
    H = W_hh.shape[1]
    if x.shape[2] != W_ih.shape[1]:
        raise InvalidConfigurationError(
            f"LSTM expects {W_ih.shape[1]} inputs per step, got {x.shape[2]}"
        )
    n, T, _ = x.shape
    # input projection for all timesteps at once
    zx = x @ W_ih.T + b
    hs = np.zeros((n, T, H))
    cs = np.zeros((n, T, H))
    gates = np.zeros((n, T, 4 * H))
    h = np.zeros((n, H))
    c = np.zeros((n, H))
    for t in range(T):
        z = zx[:, t] + h @ W_hh.T
        a = np.empty_like(z)
        a[:, :2 * H] = expit(z[:, :2 * H])
        a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        a[:, 3 * H:] = expit(z[:, 3 * H:])
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t] = a
        cs[:, t] = c
        hs[:, t] = h
    return hs, (x, hs, cs, gates)


def lstm_backward(lp, dhs, cache):
    """Backpropagate ``dhs`` (gradient w.r.t. every hidden state) through time.

    Returns ``(dx, grads)`` where ``grads`` has keys ``W_ih``, ``W_hh``, ``b``.
    """
    x, hs, cs, gates = cache
    W_ih, W_hh = lp["W_ih"], lp["W_hh"]
    n, T, H = hs.shape
    dz_all = np.zeros((n, T, 4 * H))
    dW_hh = np.zeros_like(W_hh)
    dh_next = np.zeros((n, H))
    dc_next = np.zeros((n, H))
    for t in reversed(range(T)):
        a = gates[:, t]
        i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
        c = cs[:, t]
        c_prev = cs[:, t - 1] if t > 0 else np.zeros((n, H))
        h_prev = hs[:, t - 1] if t > 0 else np.zeros((n, H))
        tc = np.tanh(c)
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dz_all[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dW_hh += dz.T @ h_prev
        dh_next = dz @ W_hh
        dc_next = dc * f
    flat_dz = dz_all.reshape(n * T, 4 * H)
    grads = {
        "W_ih": flat_dz.T @ x.reshape(n * T, -1),
        "W_hh": dW_hh,
        "b": flat_dz.sum(axis=0),
    }
    dx = dz_all @ W_ih
    return dx, grads


# --------------------------------------------------------------------------
# Network
# --------------------------------------------------------------------------

def _forward(params, X):
    h1, cache1 = lstm_forward(layer(params, "lstm1."), X)
    h2, cache2 = lstm_forward(layer(params, "lstm2."), h1)
    last = h2[:, -1]
    pre1 = last @ params["fc1.W"].T + params["fc1.b"]
    a1 = np.maximum(pre1, 0.0)
    emb = a1 @ params["fc2.W"].T + params["fc2.b"]
    return emb, (cache1, cache2, last, pre1, a1)


def feature_extract(params, X):
    """Embed a batch of windows: LSTM -> LSTM -> last step -> fc1+ReLU -> fc2.

    Returns an (n, d_embed) array; an empty batch gives a (0, d_embed) array.
    """
    X = check_sequences(X, n_channels=n_channels(params))
    if X.shape[0] == 0:
        return np.zeros((0, params["fc2.W"].shape[0]))
    return _forward(params, X)[0]


def logits(classifier_W, emb):
    emb = check_embeddings(emb)
    W = np.asarray(classifier_W, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != emb.shape[1]:
        raise InvalidConfigurationError(
            f"classifier expects {W.shape[-1]}-dim embeddings, got {emb.shape[1]}"
        )
    return emb @ W.T


def classify(classifier_W, emb):
    """Row-wise softmax class probabilities for embeddings ``emb``."""
    return softmax(logits(classifier_W, emb), axis=1)


def predict_proba(params, X):
    return classify(params[CLASSIFIER_KEY], feature_extract(params, X))


def predict(params, X):
    return np.argmax(predict_proba(params, X), axis=1)


def accuracy(params, X, y):
    y = np.asarray(y)
    if y.size == 0:
        raise InvalidInputError("cannot score an empty batch")
    return float(np.mean(predict(params, X) == y))


def loss_and_grads(params, X, y):
    """Mean cross-entropy of the batch and its gradient for every parameter."""
    X = check_sequences(X, n_channels=n_channels(params), allow_empty=False)
    W = params[CLASSIFIER_KEY]
    y = check_labels(y, X.shape[0], n_classes=W.shape[0])
    n = X.shape[0]

    emb, (cache1, cache2, last, pre1, a1) = _forward(params, X)
    logp = log_softmax(emb @ W.T, axis=1)
    loss = -float(np.mean(logp[np.arange(n), y]))

    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    grads = {CLASSIFIER_KEY: dlogits.T @ emb}
    demb = dlogits @ W
    grads["fc2.W"] = demb.T @ a1
    grads["fc2.b"] = demb.sum(axis=0)
    dpre1 = (demb @ params["fc2.W"]) * (pre1 > 0)
    grads["fc1.W"] = dpre1.T @ last
    grads["fc1.b"] = dpre1.sum(axis=0)
    dlast = dpre1 @ params["fc1.W"]

    dh2 = np.zeros_like(cache2[1])
    dh2[:, -1] = dlast
    dh1, g2 = lstm_backward(layer(params, "lstm2."), dh2, cache2)
    _, g1 = lstm_backward(layer(params, "lstm1."), dh1, cache1)
    for prefix, g in (("lstm1.", g1), ("lstm2.", g2)):
        for k, v in g.items():
            grads[prefix + k] = v
    return loss, grads


# --------------------------------------------------------------------------
# Optimisation
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update to ``params`` in place.

    Returns ``(params, state)`` for convenience; ``state.t`` is incremented.
    """
    if set(grads) != set(params):
        raise InvalidConfigurationError("gradient keys do not match parameter keys")
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise InvalidConfigurationError(
                f"gradient for {k} has shape {g.shape}, parameter has {params[k].shape}"
            )
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[k] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def clip_global_norm(grads, max_norm):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is not None and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings. Full-batch when n <= ``full_batch_max``."""

    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 64
    full_batch_max: int = 256
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidConfigurationError("epochs must be >= 0")
        if self.lr <= 0 or self.batch_size < 1:
            raise InvalidConfigurationError("lr must be > 0 and batch_size >= 1")


def train(params, X, y, config=TrainConfig(), rng=None):
    """Train ``params`` in place; returns per-epoch mean training losses.

    The first entry of the history is the loss before any update.
    """
    X = check_sequences(X, n_channels=n_channels(params), allow_empty=False)
    y = check_labels(y, X.shape[0], n_classes=params[CLASSIFIER_KEY].shape[0])
    rng = np.random.default_rng(rng)
    state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    n = X.shape[0]
    full_batch = n <= config.full_batch_max
    history = [loss_and_grads(params, X, y)[0]]
    for _ in range(config.epochs):
        order = np.arange(n) if full_batch else rng.permutation(n)
        step = n if full_batch else config.batch_size
        losses = []
        for start in range(0, n, step):
            idx = order[start:start + step]
            loss, grads = loss_and_grads(params, X[idx], y[idx])
            clip_global_norm(grads, config.clip_norm)
            adam_step(params, grads, state)
            losses.append(loss * len(idx))
        history.append(sum(losses) / n)
    return history


# --------------------------------------------------------------------------
# Norms and gradient checking
# --------------------------------------------------------------------------

def l_rp_norm(M, r, p):
    """Matrix norm ``(sum_i (sum_j |M_ij|^r)^(p/r))^(1/p)``; rows are the inner sum."""
    if r < 1 or p < 1:
        raise InvalidConfigurationError(f"l_rp norm needs r, p >= 1, got r={r}, p={p}")
    M = np.abs(np.atleast_2d(np.asarray(M, dtype=np.float64)))
    row = np.sum(M ** r, axis=1) ** (1.0 / r)
    return float(np.sum(row ** p) ** (1.0 / p))


def numerical_gradient(f, params, key, h=1e-5):
    """Central finite differences of scalar ``f(params)`` w.r.t. ``params[key]``."""
    x = params[key]
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f(params)
        x[idx] = old - h
        fm = f(params)
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-8):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def gradient_check(hidden=4, T=3, C=2, n=2, n_classes=3, fc1=5, fc2=4, h=1e-5, seed=0):
    """Compare analytic and finite-difference gradients on a tiny random net.

    Returns ``{param_name: max relative error}``.
    """
    rng = np.random.default_rng(seed)
    sizes = NetworkSizes(n_channels=C, n_classes=n_classes, lstm_hidden=hidden, fc1=fc1, fc2=fc2)
    params = init_params(sizes, rng)
    # non-trivial biases so every gate and ReLU path is exercised
    for k in params:
        if k.endswith(".b"):
            params[k] = params[k] + rng.normal(0, 0.3, size=params[k].shape)
    X = rng.normal(size=(n, T, C))
    y = rng.integers(0, n_classes, size=n)
    _, grads = loss_and_grads(params, X, y)

    def f(p):
        return loss_and_grads(p, X, y)[0]

    return {
        k: float(np.max(relative_error(grads[k], numerical_gradient(f, params, k, h))))
        for k in sorted(params)
    }
