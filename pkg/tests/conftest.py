import sys

import pytest

from metaq import datasets


@pytest.fixture(scope="session")
def placebo():
    return datasets.load_example("placebo")


@pytest.fixture(scope="session")
def light():
    return datasets.load_example("light")


def _criterion_key(item):
    num, _, suffix = str(item[0]).partition("-")
    return int(num), suffix


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(results.items(), key=_criterion_key):
        terminalreporter.write_line(line)
