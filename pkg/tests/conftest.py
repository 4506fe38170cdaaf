import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from epls import _backend  # noqa: E402

BACKENDS = ["python"]
try:
    _backend.load("cython")
    BACKENDS.insert(0, "cython")
except ImportError:
    pass


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return _backend.load(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
