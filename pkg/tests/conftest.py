import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flmchange.estimator import SplineBasis  # noqa: E402
from flmchange.funcdata import equidistant_grid  # noqa: E402
from flmchange.limits import default_tables  # noqa: E402


@pytest.fixture(scope="session")
def grid300():
    return equidistant_grid(300)


@pytest.fixture(scope="session")
def basis():
    return SplineBasis()


@pytest.fixture(scope="session")
def limit_tables():
    return default_tables()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)
