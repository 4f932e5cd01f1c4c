import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))

from dgkit.config import load_config  # noqa: E402

FIXTURES = TESTS / "fixtures"
GOLDEN = TESTS / "golden"


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture
def store(cfg):
    """A fresh store with the bundled ontology, UCM and reference lists loaded."""
    return cfg.open_store()


@pytest.fixture
def empty_store(cfg):
    return cfg.new_store()


@pytest.fixture
def minter(cfg):
    return cfg.minter


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})")
