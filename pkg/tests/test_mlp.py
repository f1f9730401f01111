import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfasr.anfis import argmax_label
from nfasr.errors import ConfigError, DataError, DimensionError
from nfasr.features import NormalizationStats
from nfasr.mlp import (
    MlpClassifier,
    MlpModel,
    MlpTrainConfig,
    cross_entropy,
    mlp_classify,
    mlp_forward,
    mlp_gradients,
    mlp_init,
    mlp_train,
    one_hot,
    softmax,
    train_mlp_classifier,
)

VOCAB = ("left", "right", "up", "down")


def naive_forward(m, x):
    a = list(x)
    n_layers = len(m.weights)
    for l, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = []
        for j in range(w.shape[1]):
            acc = b[j]
            for i in range(w.shape[0]):
                acc += a[i] * w[i, j]
            z.append(acc)
        a = z if l == n_layers - 1 else [math.tanh(v) for v in z]
    top = max(a)
    e = [math.exp(v - top) for v in a]
    s = sum(e)
    return [v / s for v in e]


def random_mlp(rng, sizes):
    return MlpModel(tuple(rng.normal(0, 0.8, (i, o)) for i, o in zip(sizes[:-1], sizes[1:])),
                    tuple(rng.normal(0, 0.3, o) for o in sizes[1:]))


def fd_gradients(m, X, Y, h=1e-6):
    gw = []
    for l, w in enumerate(m.weights):
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            losses = []
            for sign in (1, -1):
                ws = [x.copy() for x in m.weights]
                ws[l][idx] += sign * h
                losses.append(cross_entropy(MlpModel(tuple(ws), m.biases), X, Y))
            g[idx] = (losses[0] - losses[1]) / (2 * h)
        gw.append(g)
    gb = []
    for l, b in enumerate(m.biases):
        g = np.zeros_like(b)
        for i in range(b.size):
            losses = []
            for sign in (1, -1):
                bs = [x.copy() for x in m.biases]
                bs[l][i] += sign * h
                losses.append(cross_entropy(MlpModel(m.weights, tuple(bs)), X, Y))
            g[i] = (losses[0] - losses[1]) / (2 * h)
        gb.append(g)
    return gw, gb


def flat(arrs):
    return np.concatenate([a.ravel() for a in arrs])


def test_init_is_deterministic_and_counts_params():
    a, b = mlp_init([12, 16, 4], seed=7), mlp_init([12, 16, 4], seed=7)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.weights + a.biases, b.weights + b.biases))
    assert a.n_params == 12 * 16 + 16 + 16 * 4 + 4 == 276
    assert a.sizes == [12, 16, 4]
    with pytest.raises(ConfigError):
        mlp_init([12, 0, 4])
    with pytest.raises(ConfigError):
        mlp_init([12])


def test_forward_matches_naive_oracle(rng):
    for _ in range(100):
        m = random_mlp(rng, [12, 16, 4])
        x = rng.normal(size=12)
        np.testing.assert_allclose(mlp_forward(m, x), naive_forward(m, x), rtol=1e-12, atol=1e-15)


def test_zero_network_is_uniform():
    m = MlpModel((np.zeros((12, 16)), np.zeros((16, 4))), (np.zeros(16), np.zeros(4)))
    np.testing.assert_array_equal(mlp_forward(m, np.ones(12)), [0.25] * 4)


def test_thirteen_inputs_rejected(rng):
    with pytest.raises(DimensionError):
        mlp_forward(mlp_init([12, 16, 4]), np.zeros(13))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6))
def test_softmax_is_a_distribution(z):
    p = softmax(z)
    assert np.all(p > 0)
    assert abs(p.sum() - 1) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=4, max_size=4), st.floats(-100, 100))
def test_label_invariant_to_logit_shift(z, c):
    z = np.array(z)
    p, q = softmax(z), softmax(z + c)
    np.testing.assert_allclose(p, q, rtol=1e-9)
    if np.sort(p)[-1] - np.sort(p)[-2] > 1e-9:
        assert argmax_label(VOCAB, p) == argmax_label(VOCAB, q)


def test_gradients_match_finite_differences():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m = random_mlp(rng, [4, 5, 3])
        X = rng.normal(size=(6, 4))
        Y = one_hot(rng.integers(0, 3, 6).tolist(), [0, 1, 2])
        loss, gw, gb = mlp_gradients(m, X, Y)
        assert loss == pytest.approx(cross_entropy(m, X, Y), rel=1e-12)
        fw, fb = fd_gradients(m, X, Y)
        err = np.linalg.norm(flat(gw + gb) - flat(fw + fb)) / np.linalg.norm(flat(fw + fb))
        assert err <= 1e-4, seed


def test_training_separates_toy_classes(rng):
    X = np.vstack([rng.normal(-1, 0.3, (20, 2)), rng.normal(1, 0.3, (20, 2))])
    Y = one_hot([0] * 20 + [1] * 20, [0, 1])
    m, hist = mlp_train(mlp_init([2, 4, 2], seed=1), X, Y, MlpTrainConfig(epochs=500))
    assert len(hist) == 500 and hist[-1] < hist[0]
    assert np.all(np.argmax(mlp_forward(m, X), axis=1) == np.argmax(Y, axis=1))


def test_training_is_deterministic(rng):
    X = rng.normal(size=(10, 3))
    Y = one_hot([i % 2 for i in range(10)], [0, 1])
    runs = [mlp_train(mlp_init([3, 4, 2], seed=3), X, Y, MlpTrainConfig(epochs=20)) for _ in range(2)]
    assert runs[0][1] == runs[1][1]
    assert all(a.tobytes() == b.tobytes() for a, b in zip(runs[0][0].weights, runs[1][0].weights))


def test_config_and_target_validation():
    with pytest.raises(ConfigError):
        MlpTrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        MlpTrainConfig(epochs=0)
    m = mlp_init([2, 3, 2])
    with pytest.raises(DataError):
        mlp_train(m, np.zeros((2, 2)), np.array([[0.5, 0.5], [1.0, 0.0]]))


def test_classifier_decisions():
    # logits equal to the raw inputs c1..c4 through an identity output layer
    w = np.zeros((12, 4))
    w[:4, :4] = np.eye(4)
    clf = MlpClassifier(VOCAB, MlpModel((w,), (np.zeros(4),)), NormalizationStats(np.zeros(12), np.ones(12)))
    probs = np.log([0.1, 0.2, 0.6, 0.1])
    label, p = mlp_classify(clf, np.concatenate([[99.0], probs, np.zeros(8)]))
    assert label == "up"
    np.testing.assert_allclose(p, [0.1, 0.2, 0.6, 0.1])
    assert mlp_classify(clf, np.zeros(13))[0] == "left"
    assert mlp_classify(clf, np.array([0, 0, 1, 1] + [0] * 9, dtype=float))[0] == "right"


def test_classifier_uses_dc_free_normalised_input(rng):
    F = rng.normal(size=(16, 13)) * 5 + 3
    labels = [VOCAB[i % 4] for i in range(16)]
    clf = train_mlp_classifier(F, labels, VOCAB, MlpTrainConfig(epochs=5))
    assert clf.model.sizes == [12, 16, 4]
    np.testing.assert_allclose(clf.stats.mean, F[:, 1:].mean(axis=0))
    # the dc channel has no influence on the decision
    g = F[0].copy()
    g[0] += 1e6
    np.testing.assert_array_equal(clf.probabilities(F[0]), clf.probabilities(g))
    with pytest.raises(DataError, match="down"):
        train_mlp_classifier(F[:3], labels[:3], VOCAB)
