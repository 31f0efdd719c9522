import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edgesched.scenario import load_scenario  # noqa: E402

SCENARIO_DIR = Path(str(resources.files("edgesched") / "scenarios"))


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def default_scenario():
    return load_scenario(SCENARIO_DIR / "default.json")


# one line per acceptance criterion, repeated at the end of the run so it
# survives output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
