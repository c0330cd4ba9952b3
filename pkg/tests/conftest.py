import numpy as np
import pytest

from scenemap.layout import CategoryPalette
from scenemap.synth import GrammarConfig, build_catalog, generate_corpus


@pytest.fixture(scope="session")
def palette():
    return CategoryPalette.desk()


@pytest.fixture(scope="session")
def grammar():
    return GrammarConfig()


@pytest.fixture(scope="session")
def catalog(palette, grammar):
    return build_catalog(palette, grammar)


@pytest.fixture(scope="session")
def corpus():
    """A small synthetic corpus shared by the module tests."""
    return generate_corpus(120, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
