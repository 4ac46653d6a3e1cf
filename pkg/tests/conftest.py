"""Shared fixtures: small synthetic sequences, a held-out vocabulary and the hypothesis profile."""
from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from mpr.dataset import Modality, generate_synthetic_pair
from mpr.descriptors import training_features
from mpr.descriptors.vocabulary import build_vocabulary

sys.path.insert(0, str(Path(__file__).parent))

from builders import write_pair  # noqa: E402

settings.register_profile(
    "mpr",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("mpr")

VOCAB_SEED_SCENE = 101  # vocabulary scenes never overlap the evaluation scenes


@pytest.fixture(scope="session")
def synth_pair():
    """24-frame zero-perturbation query/database pair."""
    return generate_synthetic_pair(3, 24)


@pytest.fixture(scope="session")
def vocab():
    """k=10, L=5 vocabulary trained on frames of an unrelated synthetic scene."""
    _, db, _ = generate_synthetic_pair(VOCAB_SEED_SCENE, 20)
    feats = training_features(db, (Modality.COLOR, Modality.INFRARED))
    return build_vocabulary(feats, 10, 5, 0)


@pytest.fixture(scope="session")
def vocab_file(vocab, tmp_path_factory):
    path = tmp_path_factory.mktemp("vocab") / "vocab.bin"
    vocab.save(path)
    return path


@pytest.fixture(scope="session")
def synth_dir(synth_pair, tmp_path_factory):
    """The ``synth_pair`` fixture written to disk with ground truth."""
    return write_pair(tmp_path_factory.mktemp("synth"), *synth_pair)


# -- acceptance report ---------------------------------------------------------
# Tests marked ``criterion("name")`` contribute one PASS/FAIL/SKIP line to the
# terminal summary; ``record_property("detail", ...)`` adds the measured values.

_CRITERIA: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        return
    status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    detail = dict(item.user_properties).get("detail", "")
    if rep.skipped and isinstance(rep.longrepr, tuple):
        detail = rep.longrepr[2].removeprefix("Skipped: ")
    _CRITERIA.append((mark.args[0], status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    width = max(len(name) for name, _, _ in _CRITERIA)
    for name, status, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name:<{width}}  {detail}".rstrip())
