"""Shared fixtures; puts scripts/ on sys.path like the entry points do."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

PROJECT_ROOT = Path(__file__).resolve().parent.parent
SCRIPT_DIR = PROJECT_ROOT / "scripts"
sys.path.insert(0, str(SCRIPT_DIR))

from disorder import DisorderModel  # noqa: E402
from excursion_law import law_from_preset  # noqa: E402


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def table_law():
    """p = (0.5, 0.3, 0.2)."""
    return law_from_preset("table", 10, table=[0.5, 0.3, 0.2])


@pytest.fixture(scope="session")
def srw2d_law():
    return law_from_preset("srw2d", 2000)


@pytest.fixture
def gaussian() -> DisorderModel:
    return DisorderModel("gaussian")


@pytest.fixture
def zero_disorder() -> DisorderModel:
    return DisorderModel("zero")
