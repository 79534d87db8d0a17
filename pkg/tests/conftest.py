import numpy as np
import pytest

from exp3lgc.config import parse_config


@pytest.fixture
def small_config():
    """The fig2 preset shrunk to a thousand rounds."""
    return parse_config("paper_fig2").with_overrides(horizon=1000, trials=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for k in sorted(REPORT):
            terminalreporter.write_line(REPORT[k])
