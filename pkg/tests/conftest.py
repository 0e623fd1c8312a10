import json
from pathlib import Path

import pytest

from norobi import load_instance

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"
ALL_FIXTURES = ["e1", "e3", "e_tu", "g4", "infeasible_norbip"]


def fixture_path(name: str) -> Path:
    return FIXTURES / f"{name}.json"


def fixture_doc(name: str) -> dict:
    return json.loads(fixture_path(name).read_text())


@pytest.fixture
def e1():
    return load_instance(fixture_path("e1"))


@pytest.fixture
def e3():
    return load_instance(fixture_path("e3"))


@pytest.fixture
def e_tu():
    return load_instance(fixture_path("e_tu"))


@pytest.fixture
def g4():
    return load_instance(fixture_path("g4"))
