import sys

import pytest

from combcache.topology import build_combination_network, build_general_network

SYMMETRIC_RELAYS = {1: [1, 2, 3], 2: [1, 3, 4], 3: [1, 4, 5], 4: [2, 4, 5], 5: [2, 3, 5]}
LOPSIDED_RELAYS = {1: [1, 2, 3], 2: [1, 3, 4], 3: [1, 4, 5], 4: [3, 4, 5], 5: [2, 3, 5]}


@pytest.fixture
def h4r2_network():
    return build_combination_network(4, 2)


@pytest.fixture
def symmetric_network():
    return build_general_network(SYMMETRIC_RELAYS)


@pytest.fixture
def lopsided_network():
    return build_general_network(LOPSIDED_RELAYS)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
