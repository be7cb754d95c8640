from __future__ import annotations

import json

import pytest
from hypothesis import settings

from levybridge.models import LengthLaw

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def two_atoms() -> LengthLaw:
    return LengthLaw.from_atoms([(1.0, 0.5), (2.0, 0.5)])


@pytest.fixture
def atoms_file(tmp_path):
    path = tmp_path / "atoms.json"
    path.write_text(json.dumps({"atoms": [{"r": 1.0, "p": 0.5}, {"r": 2.0, "p": 0.5}]}))
    return path
