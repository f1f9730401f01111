"""First-order Sugeno ANFIS with subtractive-clustering initialisation.

A model holds R rules over D inputs as three arrays:

    centers      (R, D)     Gaussian membership centres
    sigmas       (R, D)     Gaussian membership widths
    consequents  (R, D + 1) linear coefficients p_r followed by the constant b_r

Rule r fires with strength w_r = prod_d exp(-(x_d - c_rd)**2 / (2 s_rd**2)),
strengths are normalised to sum to one, and the output is
sum_r wbar_r * (p_r . x + b_r).

Training alternates a least-squares solve for the consequents (premises
frozen) with a gradient step on centres and widths.  Multiclass decisions
use one single-output model per command (targets 1 / 0) and take the argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, DimensionError

SIGMA_FLOOR = 1e-4


@dataclass(frozen=True)
class GaussianMF:
    center: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"Gaussian width must be positive, got {self.sigma}")

    def __call__(self, x):
        return np.exp(-((np.asarray(x) - self.center) ** 2) / (2.0 * self.sigma ** 2))


@dataclass(frozen=True)
class Rule:
    antecedents: tuple[GaussianMF, ...]
    coefficients: np.ndarray
    constant: float

    def consequent(self, x) -> float:
        return float(np.dot(self.coefficients, x) + self.constant)


@dataclass(frozen=True)
class AnfisModel:
    centers: np.ndarray
    sigmas: np.ndarray
    consequents: np.ndarray

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float64, ndmin=2)
        s = np.array(self.sigmas, dtype=np.float64, ndmin=2)
        q = np.array(self.consequents, dtype=np.float64, ndmin=2)
        if c.shape[0] < 1:
            raise ValueError("an ANFIS model needs at least one rule")
        if s.shape != c.shape or q.shape != (c.shape[0], c.shape[1] + 1):
            raise DimensionError(f"inconsistent rule arrays: centers {c.shape}, "
                                 f"sigmas {s.shape}, consequents {q.shape}")
        if not np.all(s > 0):
            raise ValueError("all Gaussian widths must be positive")
        for name, arr in (("centers", c), ("sigmas", s), ("consequents", q)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_rules(self) -> int:
        return self.centers.shape[0]

    @property
    def input_dim(self) -> int:
        return self.centers.shape[1]

    @property
    def rules(self) -> list[Rule]:
        return [Rule(tuple(GaussianMF(float(c), float(s)) for c, s in zip(cr, sr)),
                     q[:-1].copy(), float(q[-1]))
                for cr, sr, q in zip(self.centers, self.sigmas, self.consequents)]

    @classmethod
    def from_rules(cls, rules) -> "AnfisModel":
        rules = list(rules)
        return cls(np.array([[mf.center for mf in r.antecedents] for r in rules]),
                   np.array([[mf.sigma for mf in r.antecedents] for r in rules]),
                   np.array([np.append(r.coefficients, r.constant) for r in rules]))


# ---------------------------------------------------------------------------
# Subtractive clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusteringConfig:
    radius: float = 0.2
    squash_factor: float = 1.25
    accept_ratio: float = 0.5
    reject_ratio: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.radius <= 1.0:
            raise ConfigError("cluster radius must lie in (0, 1]")
        if not self.squash_factor > 1.0:
            raise ConfigError("squash factor must exceed 1")
        if not 0.0 < self.reject_ratio < self.accept_ratio <= 1.0:
            raise ConfigError("need 0 < reject_ratio < accept_ratio <= 1")


def _unit_scale(data: np.ndarray):
    lo = data.min(axis=0)
    span = data.max(axis=0) - lo
    span = np.where(span > 0, span, 1.0)
    return (data - lo) / span, lo, span


def subtractive_clustering(data, cfg: ClusteringConfig = ClusteringConfig()) -> np.ndarray:
    """Chiu's subtractive clustering; returns centres in the original coordinates.

    Each dimension is min-max scaled to [0, 1] before computing potentials, so
    ``cfg.radius`` is a fraction of the data range.  Centres are always data
    points.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise DataError("subtractive clustering needs at least one point")
    z, _, _ = _unit_scale(x)
    ra = cfg.radius
    alpha = 4.0 / ra ** 2
    beta = 4.0 / (cfg.squash_factor * ra) ** 2

    d2 = np.sum((z[:, None, :] - z[None, :, :]) ** 2, axis=-1)
    potential = np.exp(-alpha * d2).sum(axis=1)
    chosen: list[int] = []
    first = None
    while True:
        k = int(np.argmax(potential))
        pk = potential[k]
        if pk <= 0.0:
            break
        if first is None:
            first = pk
        elif pk < cfg.reject_ratio * first:
            break
        elif pk <= cfg.accept_ratio * first:
            d_min = math.sqrt(min(d2[k, c] for c in chosen))
            if d_min / ra + pk / first < 1.0:
                # too close to an existing centre for its potential: skip it
                potential[k] = 0.0
                continue
        chosen.append(k)
        potential = potential - pk * np.exp(-beta * d2[:, k])
        potential[k] = 0.0
    return x[chosen].copy()


def init_from_centers(centers, data, radius: float = 0.2) -> AnfisModel:
    """One rule per centre with width ``radius * range / sqrt(8)`` in each dimension.

    Consequents start at zero.  Dimensions where the data has zero range are
    treated as having unit range, mirroring the clustering scale.
    """
    centers = np.array(centers, dtype=np.float64, ndmin=2)
    data = np.array(data, dtype=np.float64, ndmin=2)
    if centers.shape[0] < 1:
        raise DataError("need at least one cluster centre")
    if centers.shape[1] != data.shape[1]:
        raise DimensionError("centres and data differ in dimension")
    _, _, span = _unit_scale(data)
    sigma = radius * span / math.sqrt(8.0)
    R, D = centers.shape
    return AnfisModel(centers, np.tile(sigma, (R, 1)), np.zeros((R, D + 1)))


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def _check_inputs(m: AnfisModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.input_dim:
        raise DimensionError(f"model expects {m.input_dim} inputs, got {x.shape[-1]}")
    return x


def firing_strengths(m: AnfisModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Normalised firing strengths ``(n, R)`` and a per-sample fallback mask.

    The ratio w_r / sum(w) is evaluated in the log domain for accuracy.  When
    every raw strength of a sample underflows to zero the sample falls back to
    uniform strengths 1/R and its mask entry is True.
    """
    X = np.atleast_2d(X)
    diff = (X[:, None, :] - m.centers[None, :, :]) / m.sigmas[None, :, :]
    log_w = -0.5 * np.sum(diff * diff, axis=-1)
    with np.errstate(under="ignore"):
        raw_total = np.exp(log_w).sum(axis=1)
    fallback = ~(raw_total > 0)
    top = np.max(log_w, axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(under="ignore", invalid="ignore"):
        e = np.exp(log_w - top)
        wbar = e / e.sum(axis=1, keepdims=True)
    wbar[fallback] = 1.0 / m.n_rules
    return wbar, fallback


def _rule_outputs(m: AnfisModel, X: np.ndarray) -> np.ndarray:
    return X @ m.consequents[:, :-1].T + m.consequents[:, -1]


def anfis_forward(m: AnfisModel, x):
    """Output and normalised firing strengths for one input or a batch."""
    x = _check_inputs(m, x)
    X = np.atleast_2d(x)
    wbar, _ = firing_strengths(m, X)
    out = np.sum(wbar * _rule_outputs(m, X), axis=1)
    if x.ndim == 1:
        return float(out[0]), wbar[0]
    return out, wbar


def predict(m: AnfisModel, X) -> np.ndarray:
    X = np.atleast_2d(_check_inputs(m, X))
    return anfis_forward(m, X)[0]


def sse(m: AnfisModel, X, y) -> float:
    r = np.asarray(y, dtype=np.float64) - predict(m, X)
    return float(r @ r)


def mse(m: AnfisModel, X, y) -> float:
    return sse(m, X, y) / len(y)


# ---------------------------------------------------------------------------
# Hybrid learning
# ---------------------------------------------------------------------------

def consequent_design_matrix(m: AnfisModel, X) -> np.ndarray:
    """Rows ``[wbar_1 x, wbar_1, ..., wbar_R x, wbar_R]`` for each sample."""
    X = np.atleast_2d(_check_inputs(m, X))
    wbar, _ = firing_strengths(m, X)
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    return (wbar[:, :, None] * Xa[:, None, :]).reshape(X.shape[0], -1)


def lse_consequents(m: AnfisModel, X, y) -> AnfisModel:
    """Least-squares consequents with the premises held fixed.

    Solved by SVD, so rank-deficient and underdetermined systems get the
    minimum-norm solution.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise DataError("need at least one training sample")
    A = consequent_design_matrix(m, X)
    theta, *_ = np.linalg.lstsq(A, y, rcond=None)
    return replace(m, consequents=theta.reshape(m.n_rules, m.input_dim + 1))


def premise_gradient(m: AnfisModel, X, y) -> tuple[np.ndarray, np.ndarray]:
    """d(SSE)/d(centers) and d(SSE)/d(sigmas)."""
    X = np.atleast_2d(_check_inputs(m, X))
    y = np.asarray(y, dtype=np.float64)
    wbar, fallback = firing_strengths(m, X)
    f = _rule_outputs(m, X)
    out = np.sum(wbar * f, axis=1)
    # dE/dlog(w_kr) = -2 (y_k - o_k) wbar_kr (f_kr - o_k)
    g = -2.0 * (y - out)[:, None] * wbar * (f - out[:, None])
    g[fallback] = 0.0
    diff = X[:, None, :] - m.centers[None, :, :]
    s2 = m.sigmas ** 2
    d_centers = np.einsum("nr,nrd->rd", g, diff) / s2
    d_sigmas = np.einsum("nr,nrd->rd", g, diff * diff) / (s2 * m.sigmas)
    return d_centers, d_sigmas


def premise_gradient_step(m: AnfisModel, X, y, lr: float) -> AnfisModel:
    if not lr > 0:
        raise ConfigError("learning rate must be positive")
    dc, ds = premise_gradient(m, X, y)
    return replace(m, centers=m.centers - lr * dc,
                   sigmas=np.maximum(m.sigmas - lr * ds, SIGMA_FLOOR))


@dataclass(frozen=True)
class HybridTrainConfig:
    epochs: int = 50
    learning_rate: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")


def train_hybrid(m: AnfisModel, X, y, cfg: HybridTrainConfig = HybridTrainConfig()):
    """Hybrid learning; returns ``(model, per-epoch MSE history)``.

    Each epoch refits the consequents by least squares, then takes one
    gradient step on the premises.  If that step does not lower the loss it
    is discarded and the step size halved, so the history never increases.
    """
    X = np.atleast_2d(_check_inputs(m, X))
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0 or X.shape[0] != y.size:
        raise DataError("training inputs and targets must be non-empty and aligned")
    lr = cfg.learning_rate
    history = []
    for _ in range(cfg.epochs):
        m = lse_consequents(m, X, y)
        loss = mse(m, X, y)
        candidate = premise_gradient_step(m, X, y, lr)
        cand_loss = mse(candidate, X, y)
        if cand_loss < loss:
            m, loss = candidate, cand_loss
        else:
            lr *= 0.5
        history.append(loss)
    return m, history


# ---------------------------------------------------------------------------
# One-vs-rest ensemble
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnfisEnsemble:
    vocabulary: tuple[str, ...]
    models: tuple[AnfisModel, ...]
    histories: tuple[tuple[float, ...], ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.vocabulary) != len(self.models) or not self.models:
            raise ValueError("need exactly one model per vocabulary entry")
        dims = {m.input_dim for m in self.models}
        if len(dims) != 1:
            raise DimensionError("all class models must share one input dimension")

    @property
    def input_dim(self) -> int:
        return self.models[0].input_dim

    def scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.stack([np.atleast_1d(predict(m, X)) for m in self.models], axis=-1)


def train_ensemble(X, labels, vocabulary, clustering: ClusteringConfig = ClusteringConfig(),
                   training: HybridTrainConfig = HybridTrainConfig()) -> AnfisEnsemble:
    """Cluster the training inputs once and train one model per class."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = list(labels)
    vocabulary = tuple(vocabulary)
    for word in vocabulary:
        if word not in labels:
            raise DataError(f"class {word!r} has no training samples")
    centers = subtractive_clustering(X, clustering)
    init = init_from_centers(centers, X, clustering.radius)
    models, histories = [], []
    for word in vocabulary:
        target = np.array([1.0 if lab == word else 0.0 for lab in labels])
        model, hist = train_hybrid(init, X, target, training)
        models.append(model)
        histories.append(tuple(hist))
    return AnfisEnsemble(vocabulary, tuple(models), tuple(histories))


def argmax_label(vocabulary, scores) -> str:
    """First maximum wins, so ties resolve in vocabulary order."""
    return vocabulary[int(np.argmax(scores))]


def classify(e: AnfisEnsemble, f) -> tuple[str, np.ndarray]:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.size != e.input_dim:
        raise DimensionError(f"expected a {e.input_dim}-value feature vector, got shape {f.shape}")
    scores = e.scores(f[None, :])[0]
    return argmax_label(e.vocabulary, scores), scores
