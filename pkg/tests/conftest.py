import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cellseer.nn.model import ArchConfig  # noqa: E402

TINY_ARCH = ArchConfig(enc_lstm=2, enc_dense=2, code=2, pred_lstm1=2, pred_lstm2=2, pred_dense=2)
SMALL_ARCH = ArchConfig(enc_lstm=6, enc_dense=4, code=2, pred_lstm1=6, pred_lstm2=6, pred_dense=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting ------------------------------------------------------------
# Tests marked ``criterion(n)`` get one PASS/FAIL line in the terminal summary,
# with whatever detail they stored through the ``criterion_detail`` fixture.

_OUTCOMES: dict[int, list[str]] = {}
_DETAILS: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def criterion_detail(request):
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0] if marker else 0

    def record(text: str):
        _DETAILS.setdefault(number, []).append(text)

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _OUTCOMES.setdefault(marker.args[0], []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        status = "PASS" if all(o == "passed" for o in _OUTCOMES[number]) else "FAIL"
        detail = "; ".join(_DETAILS.get(number, []))
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
