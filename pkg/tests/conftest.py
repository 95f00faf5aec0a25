import numpy as np
import pytest

from fibrosim.model import default_params


@pytest.fixture
def p0():
    return default_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in sys.modules.items() if name.split(".")[-1] == "test_acceptance"), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
