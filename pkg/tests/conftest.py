from pathlib import Path

import pytest

from noisysynth import Grammar

ROOT = Path(__file__).resolve().parents[1]
GRAMMARS = ROOT / "grammars"
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def arith():
    return Grammar.load(GRAMMARS / "arith.json")


@pytest.fixture(scope="session")
def strings():
    return Grammar.load(GRAMMARS / "strings.json")


@pytest.fixture(scope="session")
def strings_ab():
    return Grammar.load(GRAMMARS / "strings_ab.json")


@pytest.fixture(scope="session")
def prefix_ab():
    return Grammar.load(GRAMMARS / "prefix_ab.json")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
