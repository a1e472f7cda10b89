import numpy as np
import pytest

from zextavg.acceptance import MASTER_SEED
from zextavg.rng import generator, task_id


@pytest.fixture
def rng(request) -> np.random.Generator:
    """A generator keyed by the test name, so tests do not share streams."""
    return generator(MASTER_SEED, task_id(request.node.name))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
