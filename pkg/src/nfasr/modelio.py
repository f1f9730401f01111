"""Versioned plain-text model files.

Layout (one record per line, whitespace separated, numbers as %.17g)::

    format_version 1
    kind anfis
    vocabulary left right up down
    input_dim 13
    class left 47
    rule <13 centres> | <13 sigmas> | <14 consequent coefficients>
    ...

MLP files use ``kind mlp`` and store the normaliser and each layer instead of
rules.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .anfis import AnfisEnsemble, AnfisModel
from .errors import DataError
from .features import NormalizationStats
from .mlp import MlpClassifier, MlpModel

FORMAT_VERSION = 1


def _nums(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in np.ravel(values))


def format_anfis(e: AnfisEnsemble) -> str:
    lines = [f"format_version {FORMAT_VERSION}", "kind anfis",
             "vocabulary " + " ".join(e.vocabulary), f"input_dim {e.input_dim}"]
    for word, m in zip(e.vocabulary, e.models):
        lines.append(f"class {word} {m.n_rules}")
        for c, s, q in zip(m.centers, m.sigmas, m.consequents):
            lines.append(f"rule {_nums(c)} | {_nums(s)} | {_nums(q)}")
    return "\n".join(lines) + "\n"


def format_mlp(clf: MlpClassifier) -> str:
    if clf.stats is None:
        raise DataError("cannot save an MLP classifier without normalisation statistics")
    m = clf.model
    lines = [f"format_version {FORMAT_VERSION}", "kind mlp",
             "vocabulary " + " ".join(clf.vocabulary),
             "sizes " + " ".join(str(s) for s in m.sizes),
             f"norm_mean {_nums(clf.stats.mean)}",
             f"norm_std {_nums(clf.stats.std)}"]
    for l, (w, b) in enumerate(zip(m.weights, m.biases)):
        lines.append(f"weights {l} {_nums(w)}")
        lines.append(f"bias {l} {_nums(b)}")
    return "\n".join(lines) + "\n"


def save_model(model, path) -> None:
    if isinstance(model, AnfisEnsemble):
        text = format_anfis(model)
    elif isinstance(model, MlpClassifier):
        text = format_mlp(model)
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    Path(path).write_text(text, encoding="utf-8")


def _floats(tokens) -> np.ndarray:
    return np.array([float(t) for t in tokens], dtype=np.float64)


def _parse_anfis(lines, vocabulary, path) -> AnfisEnsemble:
    dim = None
    models, rules, current = [], [], None

    def flush():
        if current is not None:
            if not rules:
                raise DataError(f"{path}: class {current!r} has no rules")
            arr = np.array(rules)
            models.append(AnfisModel(arr[:, :dim], arr[:, dim:2 * dim], arr[:, 2 * dim:]))

    for lineno, tokens in lines:
        key = tokens[0]
        if key == "input_dim":
            dim = int(tokens[1])
        elif key == "class":
            flush()
            current, rules = tokens[1], []
        elif key == "rule":
            if dim is None or current is None:
                raise DataError(f"{path}:{lineno}: rule before class/input_dim header")
            parts = " ".join(tokens[1:]).split("|")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: rule needs three '|'-separated groups")
            c, s, q = (_floats(p.split()) for p in parts)
            if c.size != dim or s.size != dim or q.size != dim + 1:
                raise DataError(f"{path}:{lineno}: rule has wrong number of values")
            rules.append(np.concatenate([c, s, q]))
        else:
            raise DataError(f"{path}:{lineno}: unknown record {key!r}")
    flush()
    return AnfisEnsemble(vocabulary, tuple(models))


def _parse_mlp(lines, vocabulary, path) -> MlpClassifier:
    fields: dict = {"weights": {}, "bias": {}}
    for lineno, tokens in lines:
        key = tokens[0]
        if key == "sizes":
            fields["sizes"] = [int(t) for t in tokens[1:]]
        elif key in ("norm_mean", "norm_std"):
            fields[key] = _floats(tokens[1:])
        elif key in ("weights", "bias"):
            fields[key][int(tokens[1])] = _floats(tokens[2:])
        else:
            raise DataError(f"{path}:{lineno}: unknown record {key!r}")
    try:
        sizes = fields["sizes"]
        weights = tuple(fields["weights"][l].reshape(sizes[l], sizes[l + 1])
                        for l in range(len(sizes) - 1))
        biases = tuple(fields["bias"][l] for l in range(len(sizes) - 1))
        stats = NormalizationStats(fields["norm_mean"], fields["norm_std"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: incomplete MLP model ({exc})") from None
    return MlpClassifier(vocabulary, MlpModel(weights, biases), stats)


def load_model(path):
    """Read a model file written by :func:`save_model`."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [(i, line.split()) for i, line in enumerate(text.splitlines(), start=1) if line.strip()]
    header = {}
    body = []
    for lineno, tokens in lines:
        if tokens[0] in ("format_version", "kind", "vocabulary") and not body:
            header[tokens[0]] = tokens[1:]
        else:
            body.append((lineno, tokens))
    if header.get("format_version") != [str(FORMAT_VERSION)]:
        raise DataError(f"{path}: unsupported or missing format_version")
    if "vocabulary" not in header or not header["vocabulary"]:
        raise DataError(f"{path}: missing vocabulary")
    vocabulary = tuple(header["vocabulary"])
    kind = header.get("kind", [None])[0]
    if kind == "anfis":
        return _parse_anfis(body, vocabulary, path)
    if kind == "mlp":
        return _parse_mlp(body, vocabulary, path)
    raise DataError(f"{path}: unknown model kind {kind!r}")
