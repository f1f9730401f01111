import numpy as np
import pytest

from nfasr.audio_io import load_manifest
from nfasr.harness import Settings, join_records, prepare
from nfasr.synth import synth_corpus

_RESULTS = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _RESULTS.append((marker.args[0], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _RESULTS:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {status}  {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus_seed1")
    synth_corpus(1, out, per_class=24)
    return out


@pytest.fixture(scope="session")
def corpus_manifest(corpus_dir):
    return load_manifest(corpus_dir / "manifest.csv")


@pytest.fixture(scope="session")
def float_records(corpus_manifest):
    result = prepare(corpus_manifest, Settings(), "float")
    assert not result.failures
    return join_records(corpus_manifest, result.rows)
