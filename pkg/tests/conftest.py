import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from weldnde.synthgen import generate_dataset  # noqa: E402


@pytest.fixture(scope="session")
def small_dataset():
    """Twelve seeded 256 x 256 scenes shared by several test modules."""
    return generate_dataset(12, seed=11)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
