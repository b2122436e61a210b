import json
import sys
from pathlib import Path

import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))  # makes tests.oracles importable

from chainclose.presets import get_preset  # noqa: E402


@pytest.fixture(scope="session")
def frozen():
    return json.loads((HERE / "data" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def product():
    return get_preset("product").system


@pytest.fixture(scope="session")
def cat_skew():
    return get_preset("cat_skew").system


@pytest.fixture(scope="session")
def two_circle():
    return get_preset("two_circle").system
