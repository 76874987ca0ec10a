from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from helpers import make_role  # noqa: E402


@pytest.fixture
def role():
    return make_role()
