from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the shared gen helpers

from gen import fixture_instances  # noqa: E402

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixtures200():
    """The 200 oracle-solvable reference instances (cached per session)."""
    return fixture_instances(200)


@pytest.fixture(scope="session")
def fixtures40(fixtures200):
    return fixtures200[:40]


@pytest.fixture()
def data_dir() -> Path:
    return DATA_DIR
