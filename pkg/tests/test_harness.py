import dataclasses

import numpy as np
import pytest

from nfasr import cli, harness
from nfasr.anfis import AnfisEnsemble, ClusteringConfig
from nfasr.audio_io import Utterance, load_manifest, read_wav, write_wav
from nfasr.errors import ConfigError, DataError, NoSpeechError
from nfasr.features import read_feature_cache
from nfasr.fixedpoint import Q1_14
from nfasr.harness import Record, Settings
from nfasr.mlp import MlpClassifier
from nfasr.modelio import format_anfis, format_mlp, load_model, save_model
from nfasr.synth import synth_corpus

VOCAB = ("left", "right", "up", "down")


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

def test_corpus_layout(corpus_dir, corpus_manifest):
    assert len(list(corpus_dir.glob("*.wav"))) == 96
    assert len(corpus_manifest.split("train")) == 48
    assert len(corpus_manifest.split("test")) == 48
    for spk in ("spk1", "spk2"):
        for word in VOCAB:
            for split in ("train", "test"):
                n = sum(1 for e in corpus_manifest.entries
                        if (e.speaker_id, e.label, e.split) == (spk, word, split))
                assert n == 6
    u = read_wav(corpus_dir / corpus_manifest.entries[0].path)
    assert u.sample_rate_hz == 48000


def test_small_corpus_is_byte_reproducible(tmp_path):
    a = synth_corpus(5, tmp_path / "a", per_class=4)
    b = synth_corpus(5, tmp_path / "b", per_class=4)
    names = sorted(p.name for p in a.parent.iterdir())
    assert names == sorted(p.name for p in b.parent.iterdir())
    for name in names:
        assert (a.parent / name).read_bytes() == (b.parent / name).read_bytes()
    c = synth_corpus(6, tmp_path / "c", per_class=4)
    assert (c.parent / names[0]).read_bytes() != (a.parent / names[0]).read_bytes()


def test_per_class_must_split_evenly(tmp_path):
    with pytest.raises(ConfigError):
        synth_corpus(1, tmp_path, per_class=6)


def nearest_centroid_accuracy(train, test):
    X = np.array([r.features for r in train])
    mu, sd = X.mean(axis=0), X.std(axis=0)
    cents = {w: ((np.array([r.features for r in train if r.label == w]) - mu) / sd).mean(axis=0)
             for w in VOCAB}
    hits = 0
    for r in test:
        z = (r.features - mu) / sd
        hits += min(VOCAB, key=lambda w: np.sum((z - cents[w]) ** 2)) == r.label
    return hits / len(test)


def test_classes_separable_by_nearest_centroid(float_records):
    train = [r for r in float_records if r.split == "train"]
    test = [r for r in float_records if r.split == "test"]
    assert nearest_centroid_accuracy(train, test) >= 0.9
    assert nearest_centroid_accuracy(test, train) >= 0.9


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

def test_prepare_writes_one_line_per_file(tmp_path, corpus_manifest, float_records):
    cache = tmp_path / "f.cache"
    result = harness.prepare(corpus_manifest, Settings(), "float", cache)
    lines = cache.read_text().splitlines()
    assert len(lines) == 96
    assert all(len(line.split(",")) == 15 for line in lines)
    assert [line.split(",")[0] for line in lines] == [e.path for e in corpus_manifest.entries]
    rows = read_feature_cache(cache)
    for row, rec in zip(rows, float_records):
        np.testing.assert_array_equal(row.values, rec.features)
    first = cache.read_bytes()
    harness.prepare(corpus_manifest, Settings(), "float", cache)
    assert cache.read_bytes() == first
    assert not result.failures


def _mini_corpus(tmp_path, corpus_dir, corpus_manifest, extra_silent=True):
    """Three real files plus a silent one."""
    out = tmp_path / "mini"
    out.mkdir()
    lines = []
    for e in corpus_manifest.entries[:3]:
        (out / e.path).write_bytes((corpus_dir / e.path).read_bytes())
        lines.append(f"{e.path},{e.label},{e.speaker_id},{e.split}")
    if extra_silent:
        write_wav(out / "silent.wav", np.zeros(24000), 48000)
        lines.insert(1, "silent.wav,up,spk1,train")
    (out / "manifest.csv").write_text("\n".join(lines) + "\n")
    return out / "manifest.csv"


def test_prepare_isolates_failures(tmp_path, corpus_dir, corpus_manifest):
    m = load_manifest(_mini_corpus(tmp_path, corpus_dir, corpus_manifest))
    result = harness.prepare(m, Settings(), "float")
    assert [p for p, _ in result.failures] == ["silent.wav"]
    assert "no speech" in result.failures[0][1]
    assert [r.source_id for r in result.rows] == [e.path for e in corpus_manifest.entries[:3]]


# ---------------------------------------------------------------------------
# train, model files
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained(float_records):
    anfis = harness.train_on_split(float_records, "anfis", Settings(), VOCAB)
    mlp = harness.train_on_split(float_records, "mlp", Settings(), VOCAB)
    return anfis, mlp


def test_train_reports(trained):
    anfis, mlp = trained
    assert isinstance(anfis, AnfisEnsemble) and isinstance(mlp, MlpClassifier)
    text = harness.describe_model(anfis)
    for w, m in zip(VOCAB, anfis.models):
        assert f"{w}={m.n_rules}" in text
        assert 1 <= m.n_rules <= 48
    assert "500 epochs" in harness.describe_model(mlp)


def test_mlp_model_file_reproducible(float_records, trained):
    again = harness.train_on_split(float_records, "mlp", Settings(), VOCAB)
    assert format_mlp(again) == format_mlp(trained[1])


def test_train_missing_class(float_records):
    records = [r for r in float_records if r.label != "up"]
    with pytest.raises(DataError, match="'up'"):
        harness.train_on_split(records, "anfis", Settings(), VOCAB)


def test_model_files_roundtrip(trained, float_records, tmp_path):
    X = np.array([r.features for r in float_records])
    for model in trained:
        path = tmp_path / "m.model"
        save_model(model, path)
        back = load_model(path)
        assert back.vocabulary == model.vocabulary
        if isinstance(model, AnfisEnsemble):
            np.testing.assert_array_equal(back.scores(X), model.scores(X))
            assert format_anfis(back) == path.read_text()
        else:
            np.testing.assert_array_equal(back.probabilities(X), model.probabilities(X))
            assert format_mlp(back) == path.read_text()


def test_model_file_errors(tmp_path):
    p = tmp_path / "bad.model"
    p.write_text("format_version 2\nkind anfis\nvocabulary a b\n")
    with pytest.raises(DataError, match="format_version"):
        load_model(p)
    p.write_text("format_version 1\nkind svm\nvocabulary a b\n")
    with pytest.raises(DataError, match="kind"):
        load_model(p)
    p.write_text("format_version 1\nkind anfis\nvocabulary a\ninput_dim 2\nclass a 1\nrule 0 0 | 1 1 | 0 0\n")
    with pytest.raises(DataError, match="wrong number"):
        load_model(p)


# ---------------------------------------------------------------------------
# two-step evaluation
# ---------------------------------------------------------------------------

def _records(n_per=3):
    out = []
    rng = np.random.default_rng(0)
    for split in ("train", "test"):
        for spk in ("spk1", "spk2"):
            for w in VOCAB:
                for i in range(n_per):
                    out.append(Record(f"{split}_{spk}_{w}_{i}", w, spk, split, rng.normal(size=13)))
    return out


def test_perfect_classifier_scores_every_cell_100(float_records):
    truth = {r.features.tobytes(): r.label for r in float_records}

    def oracle(X, labels):
        return None, lambda F: [truth[f.tobytes()] for f in F]

    report = harness.evaluate_two_step(float_records, VOCAB, oracle, "oracle")
    assert [c[2] for c in report.cells()] == [1.0] * 4
    assert report.overall_accuracy == 1.0


def test_constant_classifier_scores_25_percent():
    report = harness.evaluate_two_step(_records(), VOCAB, lambda X, y: (None, lambda F: ["down"] * len(F)))
    assert [c[2] for c in report.cells()] == [0.25] * 4
    for st in report.steps:
        np.testing.assert_array_equal(st.total_confusion[:, 3], [6, 6, 6, 6])


def test_confusion_recount():
    recs = _records()

    def noisy(X, labels):
        return None, lambda F: [VOCAB[int(abs(f[0]) * 1000) % 4] for f in F]

    report = harness.evaluate_two_step(recs, VOCAB, noisy)
    for st in report.steps:
        test = [r for r in recs if r.split == st.test_split]
        for spk in st.speakers:
            mine = [r for r in test if r.speaker == spk]
            correct = sum(VOCAB[int(abs(r.features[0]) * 1000) % 4] == r.label for r in mine)
            assert st.cell(spk) == (correct, len(mine))
            conf = st.confusion[spk]
            for i, w in enumerate(VOCAB):
                assert conf[i].sum() == sum(r.label == w for r in mine)
            assert st.accuracy(spk) == np.trace(conf) / conf.sum()
    kv = dict(line.split("=") for line in report.structured())
    assert float(kv["custom.step1.spk1.accuracy"]) == pytest.approx(report.steps[0].accuracy("spk1"), abs=1e-6)


def test_step_two_swaps_and_retrains():
    seen = []

    def spy(X, labels):
        seen.append(X.copy())
        return None, lambda F: ["left"] * len(F)

    recs = _records()
    report = harness.evaluate_two_step(recs, VOCAB, spy)
    assert [(s.train_split, s.test_split) for s in report.steps] == [("train", "test"), ("test", "train")]
    np.testing.assert_array_equal(seen[0], [r.features for r in recs if r.split == "train"])
    np.testing.assert_array_equal(seen[1], [r.features for r in recs if r.split == "test"])


@pytest.mark.parametrize("kind", ["anfis", "mlp"])
def test_no_leakage_from_the_held_out_split(float_records, kind):
    def corrupt(split):
        return [dataclasses.replace(r, features=r.features * -3.0 + 100.0) if r.split == split else r
                for r in float_records]

    fmt = format_anfis if kind == "anfis" else format_mlp
    trainer = harness.make_trainer(kind, Settings(), VOCAB)
    base = harness.evaluate_two_step(float_records, VOCAB, trainer, kind)
    bad_test = harness.evaluate_two_step(corrupt("test"), VOCAB, trainer, kind)
    bad_train = harness.evaluate_two_step(corrupt("train"), VOCAB, trainer, kind)
    assert fmt(bad_test.steps[0].model) == fmt(base.steps[0].model)
    assert fmt(bad_train.steps[1].model) == fmt(base.steps[1].model)


def test_empty_split_rejected():
    recs = [r for r in _records() if r.split == "train"]
    with pytest.raises(DataError):
        harness.evaluate_two_step(recs, VOCAB, lambda X, y: (None, lambda F: ["left"] * len(F)))


def test_table_layout():
    report = harness.evaluate_two_step(_records(), VOCAB, lambda X, y: (None, lambda F: ["left"] * len(F)),
                                       "anfis")
    text = harness.format_table([report])
    first = text.splitlines()
    assert "Step 1" in first[0] and "Step 2" in first[0]
    assert first[1].split() == ["spk1", "spk2", "spk1", "spk2"]
    assert first[2].split() == ["ANFIS", "25.0%", "25.0%", "25.0%", "25.0%"]


# ---------------------------------------------------------------------------
# recognize and precision comparison
# ---------------------------------------------------------------------------

def test_recognize_left_file(trained, corpus_dir, corpus_manifest):
    entry = next(e for e in corpus_manifest.entries if e.label == "left" and e.split == "test")
    u = read_wav(corpus_dir / entry.path)
    label, scores = harness.recognize(trained[0], u, Settings())
    assert label == "left"
    label2, scores2 = harness.recognize(trained[0], u, Settings())
    assert scores.tobytes() == scores2.tobytes()


def test_recognize_silence(trained):
    with pytest.raises(NoSpeechError):
        harness.recognize(trained[0], Utterance(np.zeros(4800), 48000), Settings())


def test_float_against_float_is_exact(tmp_path, corpus_dir, corpus_manifest):
    m = load_manifest(_mini_corpus(tmp_path, corpus_dir, corpus_manifest, extra_silent=False))
    report = harness.compare_precision(m, Settings(), candidate="float")
    assert np.all(report.max_abs == 0) and np.all(report.mean_abs == 0)
    assert report.max_rel_c0 == 0
    assert report.passed
    assert "PASS" in report.format()


def test_precision_failure_isolated(tmp_path, corpus_dir, corpus_manifest):
    m = load_manifest(_mini_corpus(tmp_path, corpus_dir, corpus_manifest))
    report = harness.compare_precision(m, Settings())
    assert report.n_files == 3 and [p for p, _ in report.failures] == ["silent.wav"]
    assert report.within_bounds and not report.passed


# ---------------------------------------------------------------------------
# settings overrides
# ---------------------------------------------------------------------------

def test_overrides_apply():
    s = harness.apply_overrides(Settings(), """
        # comment
        vad.hangover_frames = 3
        frontend.fft_size = 4096
        frontend.high_freq_hz = 8000
        clustering.radius = 0.3   # wider
        anfis.epochs = 10
        mlp.learning_rate = 0.1
        fixed.cos_table_size = none
    """)
    assert s.vad.hangover_frames == 3
    assert s.frontend.fft_size == 4096 and s.frontend.high_freq_hz == 8000
    assert s.clustering == ClusteringConfig(radius=0.3)
    assert s.anfis.epochs == 10 and s.mlp.learning_rate == 0.1


@pytest.mark.parametrize("text", [
    "nosuch.field = 1",
    "vad.nosuch = 1",
    "vad.hangover_frames = many",
    "vad.hangover_frames 3",
    "mlp.learning_rate = 0",
    "fixed.sample_format = Q1.14",
    "fixed.sample_format = 1.14",
])
def test_bad_overrides(text):
    with pytest.raises(ConfigError):
        harness.apply_overrides(Settings(), text)


def test_qformat_override_parses():
    with pytest.raises(ConfigError, match="Q0.15"):
        harness.apply_overrides(Settings(), f"fixed.sample_format = {Q1_14}")


def test_seed_flows_into_mlp():
    assert harness.load_settings(None, seed=9).mlp.seed == 9


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, corpus_dir, corpus_manifest, capsys):
    manifest = _mini_corpus(tmp_path, corpus_dir, corpus_manifest)
    cache = tmp_path / "c.cache"
    assert cli.main(["prepare", "--manifest", str(manifest), "--cache", str(cache)]) == cli.EXIT_PARTIAL
    assert len(cache.read_text().splitlines()) == 3
    assert "silent.wav" in capsys.readouterr().out

    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("frontend.num_cepstra = 40\n")
    rc = cli.main(["prepare", "--manifest", str(manifest), "--cache", str(cache), "--config", str(bad_cfg)])
    assert rc == cli.EXIT_CONFIG
    rc = cli.main(["prepare", "--manifest", str(tmp_path / "missing.csv"), "--cache", str(cache)])
    assert rc == cli.EXIT_DATA
    (tmp_path / "empty.csv").write_text("")
    assert cli.main(["prepare", "--manifest", str(tmp_path / "empty.csv"), "--cache", str(cache)]) == cli.EXIT_DATA
    assert len({cli.EXIT_OK, cli.EXIT_CONFIG, cli.EXIT_DATA, cli.EXIT_PARTIAL}) == 4


def test_cli_train_and_recognize(tmp_path, corpus_dir, corpus_manifest, capsys):
    manifest = corpus_dir / "manifest.csv"
    cache = tmp_path / "f.cache"
    assert cli.main(["prepare", "--manifest", str(manifest), "--cache", str(cache)]) == 0
    out = tmp_path / "models"
    assert cli.main(["train", "--manifest", str(manifest), "--cache", str(cache),
                     "--classifier", "both", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "rules per class" in text and "loss" in text
    wav = corpus_dir / next(e.path for e in corpus_manifest.entries if e.label == "down")
    assert cli.main(["recognize", "--model", str(out / "anfis.model"), "--wav", str(wav)]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "down"
    silent = tmp_path / "silent.wav"
    write_wav(silent, np.zeros(4800), 48000)
    assert cli.main(["recognize", "--model", str(out / "mlp.model"), "--wav", str(silent)]) == cli.EXIT_DATA
