"""Feed-forward MLP baseline: tanh hidden layers, softmax output, full-batch descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .features import NormalizationStats, apply_normalizer, drop_dc_channel, fit_normalizer


@dataclass(frozen=True)
class MlpModel:
    weights: tuple[np.ndarray, ...]   # weights[l] has shape (fan_in, fan_out)
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionError(f"layer {l}: weight {w.shape} / bias {b.shape} mismatch")
            if l and self.weights[l - 1].shape[1] != w.shape[0]:
                raise DimensionError(f"layer {l} input does not match layer {l - 1} output")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def mlp_init(sizes, seed: int = 0) -> MlpModel:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigError(f"invalid layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(weights), tuple(biases))


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _forward(m: MlpModel, X):
    acts = [X]
    a = X
    last = len(m.weights) - 1
    for l, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = a @ w + b
        a = z if l == last else np.tanh(z)
        acts.append(a)
    return acts


def mlp_forward(m: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.sizes[0]:
        raise DimensionError(f"network expects {m.sizes[0]} inputs, got {x.shape[-1]}")
    return softmax(_forward(m, x)[-1])


def cross_entropy(m: MlpModel, X, Y) -> float:
    p = mlp_forward(m, X)
    return float(-np.mean(np.sum(Y * np.log(p), axis=1)))


def mlp_gradients(m: MlpModel, X, Y):
    """Mean cross-entropy and its gradients by backpropagation."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    n = X.shape[0]
    acts = _forward(m, X)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-np.sum(Y * log_p) / n)

    delta = (np.exp(log_p) - Y) / n
    gw, gb = [None] * len(m.weights), [None] * len(m.weights)
    for l in range(len(m.weights) - 1, -1, -1):
        gw[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ m.weights[l].T) * (1.0 - acts[l] ** 2)
    return loss, gw, gb


@dataclass(frozen=True)
class MlpTrainConfig:
    epochs: int = 500
    learning_rate: float = 0.05
    seed: int = 0
    hidden: int = 16

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        if self.hidden < 1:
            raise ConfigError("hidden layer size must be positive")


def mlp_train(m: MlpModel, X, Y, cfg: MlpTrainConfig = MlpTrainConfig()):
    """Full-batch gradient descent; returns ``(model, loss history)``.

    ``history[i]`` is the loss of the parameters entering epoch ``i``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0 or X.shape[0] != Y.shape[0]:
        raise DataError("training inputs and targets must be non-empty and aligned")
    if not np.all((Y == 0) | (Y == 1)) or not np.all(Y.sum(axis=1) == 1):
        raise DataError("targets must be one-hot rows")
    if X.shape[1] != m.sizes[0] or Y.shape[1] != m.sizes[-1]:
        raise DimensionError("data shape does not match the network")
    weights = [w.copy() for w in m.weights]
    biases = [b.copy() for b in m.biases]
    history = []
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        loss, gw, gb = mlp_gradients(MlpModel(tuple(weights), tuple(biases)), X, Y)
        history.append(loss)
        for l in range(len(weights)):
            weights[l] -= lr * gw[l]
            biases[l] -= lr * gb[l]
    return MlpModel(tuple(weights), tuple(biases)), history


def one_hot(labels, vocabulary) -> np.ndarray:
    index = {w: i for i, w in enumerate(vocabulary)}
    Y = np.zeros((len(labels), len(vocabulary)))
    for row, lab in enumerate(labels):
        Y[row, index[lab]] = 1.0
    return Y


@dataclass(frozen=True)
class MlpClassifier:
    """Network plus the input transform it was trained behind."""

    vocabulary: tuple[str, ...]
    model: MlpModel
    stats: NormalizationStats | None
    history: tuple[float, ...] = ()

    def prepare(self, f) -> np.ndarray:
        if self.stats is None:
            raise DataError("MLP classifier has no normalisation statistics")
        return apply_normalizer(self.stats, drop_dc_channel(f))

    def probabilities(self, F) -> np.ndarray:
        return mlp_forward(self.model, self.prepare(F))


def train_mlp_classifier(F, labels, vocabulary, cfg: MlpTrainConfig = MlpTrainConfig()):
    """Drop the dc channel, z-score on the training set, then train."""
    vocabulary = tuple(vocabulary)
    labels = list(labels)
    for word in vocabulary:
        if word not in labels:
            raise DataError(f"class {word!r} has no training samples")
    X12 = drop_dc_channel(np.asarray(F, dtype=np.float64))
    stats = fit_normalizer(X12)
    X = apply_normalizer(stats, X12)
    m0 = mlp_init([X.shape[1], cfg.hidden, len(vocabulary)], cfg.seed)
    model, history = mlp_train(m0, X, one_hot(labels, vocabulary), cfg)
    return MlpClassifier(vocabulary, model, stats, tuple(history))


def mlp_classify(clf: MlpClassifier, f) -> tuple[str, np.ndarray]:
    """Label for a raw 13-value feature vector; ties go to the earlier class."""
    p = clf.probabilities(np.asarray(f, dtype=np.float64))
    return clf.vocabulary[int(np.argmax(p))], p
