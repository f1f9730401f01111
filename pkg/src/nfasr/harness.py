"""End-to-end orchestration behind the command-line interface."""

from __future__ import annotations

import dataclasses
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .anfis import AnfisEnsemble, ClusteringConfig, HybridTrainConfig, argmax_label, train_ensemble
from .audio_io import (
    DatasetManifest,
    Utterance,
    VadConfig,
    energy_vad,
    longest_segment,
    read_wav,
)
from .errors import ConfigError, DataError, NfasrError, NoSpeechError
from .features import CachedFeature, compress_features, write_feature_cache
from .fixedpoint import FixedPipelineConfig, QFormat, fixed_mfcc
from .frontend import FrontendConfig, build_mel_filterbank, mfcc
from .mlp import MlpClassifier, MlpTrainConfig, train_mlp_classifier

log = logging.getLogger(__name__)

FRONTENDS = ("float", "fixed")
CLASSIFIERS = ("anfis", "mlp")

# Frozen regression bounds for the fixed-point front-end.
MAX_ABS_ERROR_CK = 0.05
MAX_REL_ERROR_C0 = 0.01
MIN_LABEL_AGREEMENT = 0.95


# ---------------------------------------------------------------------------
# Settings and ``section.field = value`` overrides
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Settings:
    vad: VadConfig = VadConfig()
    frontend: FrontendConfig = FrontendConfig()
    fixed: FixedPipelineConfig = FixedPipelineConfig()
    clustering: ClusteringConfig = ClusteringConfig()
    anfis: HybridTrainConfig = HybridTrainConfig()
    mlp: MlpTrainConfig = MlpTrainConfig()


_QFORMAT = re.compile(r"^Q(\d+)\.(\d+)$")


def _coerce(text: str, current):
    text = text.strip()
    if isinstance(current, QFormat):
        m = _QFORMAT.match(text)
        if not m:
            raise ConfigError(f"expected a Qm.n format, got {text!r}")
        return QFormat(int(m.group(1)), int(m.group(2)))
    if text.lower() == "none":
        return None
    try:
        if isinstance(current, bool):
            raise ConfigError("boolean settings are not supported")
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        try:
            return int(text)
        except ValueError:
            return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as a number") from None


def apply_overrides(settings: Settings, text: str, origin: str = "<config>") -> Settings:
    """Apply ``section.field = value`` lines (``#`` comments allowed)."""
    sections = {f.name: getattr(settings, f.name) for f in dataclasses.fields(settings)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'section.field = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in sections:
            raise ConfigError(f"{origin}:{lineno}: unknown section {section!r}")
        names = {f.name for f in dataclasses.fields(sections[section])}
        if name not in names:
            raise ConfigError(f"{origin}:{lineno}: unknown field {key!r}")
        new_value = _coerce(value, getattr(sections[section], name))
        try:
            sections[section] = dataclasses.replace(sections[section], **{name: new_value})
        except ConfigError as exc:
            raise ConfigError(f"{origin}:{lineno}: {exc}") from None
    return Settings(**sections)


def load_settings(path=None, seed: int | None = None) -> Settings:
    settings = Settings()
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        settings = apply_overrides(settings, text, str(path))
    if seed is not None:
        settings = dataclasses.replace(settings, mlp=dataclasses.replace(settings.mlp, seed=seed))
    return settings


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _filterbank(cfg: FrontendConfig, fs: int):
    return build_mel_filterbank(cfg, fs)


def speech_segment(u: Utterance, vad: VadConfig) -> Utterance:
    seg = longest_segment(energy_vad(u, vad))
    if seg is None:
        raise NoSpeechError(f"{u.source_id or 'utterance'}: no speech found")
    return u.slice(*seg)


def cepstra(u: Utterance, settings: Settings, frontend: str = "float") -> np.ndarray:
    """VAD-trimmed cepstral matrix from the chosen front-end."""
    if frontend not in FRONTENDS:
        raise ConfigError(f"frontend must be one of {FRONTENDS}")
    v = speech_segment(u, settings.vad)
    fb = _filterbank(settings.frontend, u.sample_rate_hz)
    if frontend == "float":
        return mfcc(v, settings.frontend, fb)
    return fixed_mfcc(v, settings.frontend, settings.fixed, fb)


def extract_features(u: Utterance, settings: Settings, frontend: str = "float") -> np.ndarray:
    return compress_features(cepstra(u, settings, frontend))


@dataclass
class PrepareResult:
    rows: list[CachedFeature]
    failures: list[tuple[str, str]]


def prepare(manifest: DatasetManifest, settings: Settings, frontend: str = "float",
            cache_path=None) -> PrepareResult:
    """Features for every manifest entry, in manifest order.

    Files that fail are reported and skipped; the rest are still written.
    """
    rows, failures = [], []
    for entry in manifest.entries:
        try:
            u = read_wav(manifest.resolve(entry), label=entry.label, source_id=entry.path)
            rows.append(CachedFeature(entry.path, entry.label, extract_features(u, settings, frontend)))
        except (NfasrError, OSError) as exc:
            log.error("%s: %s", entry.path, exc)
            failures.append((entry.path, str(exc)))
    if cache_path is not None:
        write_feature_cache(cache_path, rows)
    return PrepareResult(rows, failures)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    source_id: str
    label: str
    speaker: str
    split: str
    features: np.ndarray


def join_records(manifest: DatasetManifest, rows: Sequence[CachedFeature]) -> list[Record]:
    """Attach split and speaker from the manifest to cached features."""
    by_id = {r.source_id: r for r in rows}
    records = []
    for e in manifest.entries:
        row = by_id.get(e.path)
        if row is None:
            log.warning("%s: no cached features, skipped", e.path)
            continue
        if row.label != e.label:
            raise DataError(f"{e.path}: cache label {row.label!r} disagrees with manifest {e.label!r}")
        records.append(Record(e.path, e.label, e.speaker_id, e.split, row.values))
    return records


Predictor = Callable[[np.ndarray], list]
Trainer = Callable[[np.ndarray, list], tuple[object, Predictor]]


def anfis_trainer(settings: Settings, vocabulary) -> Trainer:
    vocabulary = tuple(vocabulary)

    def train(X, labels):
        ens = train_ensemble(X, labels, vocabulary, settings.clustering, settings.anfis)
        return ens, lambda F: [argmax_label(vocabulary, s) for s in ens.scores(np.atleast_2d(F))]
    return train


def mlp_trainer(settings: Settings, vocabulary) -> Trainer:
    vocabulary = tuple(vocabulary)

    def train(X, labels):
        clf = train_mlp_classifier(X, labels, vocabulary, settings.mlp)
        return clf, lambda F: [argmax_label(vocabulary, p) for p in clf.probabilities(np.atleast_2d(F))]
    return train


def make_trainer(kind: str, settings: Settings, vocabulary) -> Trainer:
    if kind == "anfis":
        return anfis_trainer(settings, vocabulary)
    if kind == "mlp":
        return mlp_trainer(settings, vocabulary)
    raise ConfigError(f"classifier must be one of {CLASSIFIERS}")


def train_on_split(records: Sequence[Record], kind: str, settings: Settings, vocabulary,
                   split: str = "train"):
    chosen = [r for r in records if r.split == split]
    labels = [r.label for r in chosen]
    for word in vocabulary:
        if word not in labels:
            raise DataError(f"class {word!r} has no {split} samples")
    X = np.array([r.features for r in chosen])
    model, _ = make_trainer(kind, settings, vocabulary)(X, labels)
    return model


def describe_model(model) -> str:
    if isinstance(model, AnfisEnsemble):
        counts = ", ".join(f"{w}={m.n_rules}" for w, m in zip(model.vocabulary, model.models))
        return f"anfis rules per class: {counts}"
    if isinstance(model, MlpClassifier):
        h = model.history
        return (f"mlp sizes {model.model.sizes}: loss {h[0]:.6f} -> {h[-1]:.6f} "
                f"over {len(h)} epochs")
    return repr(model)


# ---------------------------------------------------------------------------
# Two-step evaluation
# ---------------------------------------------------------------------------

@dataclass
class StepResult:
    step: int
    train_split: str
    test_split: str
    vocabulary: tuple[str, ...]
    speakers: list[str]
    confusion: dict[str, np.ndarray]      # speaker -> (true, predicted) counts
    model: object = field(repr=False, default=None)

    def cell(self, speaker: str) -> tuple[int, int]:
        c = self.confusion[speaker]
        return int(np.trace(c)), int(c.sum())

    def accuracy(self, speaker: str) -> float:
        correct, total = self.cell(speaker)
        return correct / total if total else float("nan")

    @property
    def total_confusion(self) -> np.ndarray:
        return sum(self.confusion.values())


@dataclass
class EvaluationReport:
    classifier: str
    vocabulary: tuple[str, ...]
    steps: list[StepResult]

    @property
    def speakers(self) -> list[str]:
        return sorted({s for st in self.steps for s in st.speakers})

    def cells(self) -> list[tuple[int, str, float]]:
        return [(st.step, spk, st.accuracy(spk)) for st in self.steps for spk in st.speakers]

    @property
    def overall_accuracy(self) -> float:
        c = sum(st.total_confusion for st in self.steps)
        return float(np.trace(c) / c.sum())

    def structured(self) -> list[str]:
        k = self.classifier
        out = []
        for st in self.steps:
            for spk in st.speakers:
                correct, total = st.cell(spk)
                out.append(f"{k}.step{st.step}.{spk}.correct={correct}")
                out.append(f"{k}.step{st.step}.{spk}.total={total}")
                out.append(f"{k}.step{st.step}.{spk}.accuracy={st.accuracy(spk):.6f}")
            conf = st.total_confusion
            for word, row in zip(self.vocabulary, conf):
                out.append(f"{k}.step{st.step}.confusion.{word}=" + ",".join(str(int(v)) for v in row))
        out.append(f"{k}.overall.accuracy={self.overall_accuracy:.6f}")
        return out


def evaluate_two_step(records: Sequence[Record], vocabulary, trainer: Trainer,
                      classifier: str = "custom") -> EvaluationReport:
    """Train on one split and test on the other, then swap and retrain.

    The trainer only ever sees training-split features and labels.
    """
    vocabulary = tuple(vocabulary)
    index = {w: i for i, w in enumerate(vocabulary)}
    steps = []
    for step, (train_split, test_split) in enumerate((("train", "test"), ("test", "train")), start=1):
        train = [r for r in records if r.split == train_split]
        test = [r for r in records if r.split == test_split]
        if not train or not test:
            raise DataError(f"step {step}: both the {train_split} and {test_split} splits must be non-empty")
        model, predictor = trainer(np.array([r.features for r in train]), [r.label for r in train])
        predicted = predictor(np.array([r.features for r in test]))
        speakers = sorted({r.speaker for r in test})
        confusion = {s: np.zeros((len(vocabulary), len(vocabulary)), dtype=np.int64) for s in speakers}
        for r, p in zip(test, predicted):
            confusion[r.speaker][index[r.label], index[p]] += 1
        steps.append(StepResult(step, train_split, test_split, vocabulary, speakers, confusion, model))
    return EvaluationReport(classifier, vocabulary, steps)


def format_table(reports: Sequence[EvaluationReport]) -> str:
    """Accuracy per step and speaker, one row per classifier."""
    speakers = sorted({s for r in reports for s in r.speakers})
    steps = sorted({st.step for r in reports for st in r.steps})
    head1 = f"{'':<8}" + "".join(f"{'Step ' + str(s):>7}" + " " * (10 * len(speakers) - 7) for s in steps)
    head2 = f"{'':<8}" + "".join(f"{spk:>7}   " for _ in steps for spk in speakers)
    lines = [head1.rstrip(), head2.rstrip()]
    for r in reports:
        row = f"{r.classifier.upper():<8}"
        for st in r.steps:
            for spk in speakers:
                row += f"{st.accuracy(spk) * 100:>6.1f}%   " if spk in st.speakers else f"{'-':>7}   "
        lines.append(row.rstrip())
    lines.append("")
    for r in reports:
        for st in r.steps:
            lines.append(f"{r.classifier} step {st.step} (train={st.train_split}, test={st.test_split}) "
                         "confusion, rows=true, cols=predicted:")
            width = max(len(w) for w in r.vocabulary) + 2
            lines.append(" " * width + "".join(f"{w:>{width}}" for w in r.vocabulary))
            for word, row in zip(r.vocabulary, st.total_confusion):
                lines.append(f"{word:<{width}}" + "".join(f"{int(v):>{width}}" for v in row))
            lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Recognition
# ---------------------------------------------------------------------------

def model_scores(model, f) -> tuple[str, np.ndarray]:
    f = np.asarray(f, dtype=np.float64)
    if isinstance(model, AnfisEnsemble):
        scores = model.scores(f[None, :])[0]
    elif isinstance(model, MlpClassifier):
        scores = model.probabilities(f)
    else:
        raise TypeError(f"unsupported model {type(model).__name__}")
    return argmax_label(model.vocabulary, scores), scores


def recognize(model, u: Utterance, settings: Settings, frontend: str = "float"):
    return model_scores(model, extract_features(u, settings, frontend))


# ---------------------------------------------------------------------------
# Fixed versus float precision
# ---------------------------------------------------------------------------

@dataclass
class PrecisionReport:
    max_abs: np.ndarray        # per cepstral channel, over all frames
    mean_abs: np.ndarray
    max_rel_c0: float
    n_files: int
    n_frames: int
    agreement: float | None
    failures: list[tuple[str, str]]

    @property
    def within_bounds(self) -> bool:
        return bool(np.all(self.max_abs[1:] <= MAX_ABS_ERROR_CK) and self.max_rel_c0 <= MAX_REL_ERROR_C0)

    @property
    def passed(self) -> bool:
        agree = self.agreement is None or self.agreement >= MIN_LABEL_AGREEMENT
        return self.within_bounds and agree and not self.failures

    def format(self) -> str:
        lines = [f"{'channel':>8} {'max_abs_err':>14} {'mean_abs_err':>14}"]
        for k, (mx, mn) in enumerate(zip(self.max_abs, self.mean_abs)):
            lines.append(f"{'C' + str(k):>8} {mx:>14.6e} {mn:>14.6e}")
        lines.append(f"C0 max relative error: {self.max_rel_c0:.6e} (bound {MAX_REL_ERROR_C0})")
        lines.append(f"C1..C{len(self.max_abs) - 1} max absolute error: {self.max_abs[1:].max():.6e} "
                     f"(bound {MAX_ABS_ERROR_CK})")
        lines.append(f"files: {self.n_files}  frames: {self.n_frames}  failures: {len(self.failures)}")
        if self.agreement is not None:
            lines.append(f"label agreement: {self.agreement * 100:.2f}% (bound {MIN_LABEL_AGREEMENT * 100:.0f}%)")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def compare_precision(manifest: DatasetManifest, settings: Settings, model=None,
                      reference: str = "float", candidate: str = "fixed") -> PrecisionReport:
    """Run two front-ends over every file and compare their cepstra.

    Label agreement is measured on the test split with ``model``; without
    one, an ANFIS ensemble is trained on the reference front-end's
    training-split features.
    """
    K = settings.frontend.num_cepstra
    max_abs = np.zeros(K)
    sum_abs = np.zeros(K)
    max_rel = 0.0
    n_frames = 0
    failures = []
    feats = {}
    for entry in manifest.entries:
        try:
            u = read_wav(manifest.resolve(entry), label=entry.label, source_id=entry.path)
            a = cepstra(u, settings, reference)
            b = cepstra(u, settings, candidate)
        except (NfasrError, OSError) as exc:
            log.error("%s: %s", entry.path, exc)
            failures.append((entry.path, str(exc)))
            continue
        d = np.abs(a - b)
        max_abs = np.maximum(max_abs, d.max(axis=1))
        sum_abs += d.sum(axis=1)
        n_frames += d.shape[1]
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(d[0] == 0, 0.0, d[0] / np.abs(a[0]))
        max_rel = max(max_rel, float(rel.max()))
        feats[entry.path] = (entry, compress_features(a), compress_features(b))

    agreement = None
    test = [v for v in feats.values() if v[0].split == "test"]
    if test:
        if model is None:
            train = [v for v in feats.values() if v[0].split == "train"]
            labels = [v[0].label for v in train]
            if all(w in labels for w in manifest.vocabulary):
                model = train_ensemble(np.array([v[1] for v in train]), labels, manifest.vocabulary,
                                       settings.clustering, settings.anfis)
        if model is not None:
            same = [model_scores(model, v[1])[0] == model_scores(model, v[2])[0] for v in test]
            agreement = float(np.mean(same))
    mean_abs = sum_abs / max(n_frames, 1)
    return PrecisionReport(max_abs, mean_abs, max_rel, len(feats), n_frames, agreement, failures)
