import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "long: full-length reproduction runs (set TETHERSIM_LONG=1)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("TETHERSIM_LONG"):
        return
    skip = pytest.mark.skip(reason="long-running; set TETHERSIM_LONG=1")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion; returns the verdict."""
    def report(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {title} | {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
