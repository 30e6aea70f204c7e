import numpy as np
import pytest

from seqdec.model import CopyChannelModel
from seqdec.textprep import Vocabulary

# Lines appended by acceptance tests; echoed in the terminal summary.
ACCEPTANCE_NOTES: list[str] = []
_OUTCOMES: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        if report.nodeid not in _OUTCOMES or report.outcome != "passed":
            _OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in _OUTCOMES.items():
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
    for note in ACCEPTANCE_NOTES:
        terminalreporter.write_line(f"      {note}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def letters():
    return Vocabulary.from_tokens("abcdefghij")


@pytest.fixture(scope="session")
def copy_model(letters):
    return CopyChannelModel(letters, epsilon=0.1)
