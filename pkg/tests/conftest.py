import pytest

from specflow.arithmetic import cf_expand
from specflow.roof import load_roof


@pytest.fixture(scope="session")
def golden():
    return cf_expand("golden", 40)


@pytest.fixture(scope="session")
def silver():
    return cf_expand("sqrt2m1", 40)


@pytest.fixture(scope="session")
def canonical():
    return load_roof("canonical")


@pytest.fixture(scope="session")
def wavy():
    return load_roof("canonical_sin")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
