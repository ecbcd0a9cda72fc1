from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deal.features import Model, parse_feature  # noqa: E402
from deal.kg import load_kg  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture
def songs_kg():
    return load_kg(DATA / "songs_kg.json")


def tagger_features():
    return [parse_feature("play <music_title> by", 1, 1.2),
            parse_feature("play <music_artist>", 2, 0.8),
            parse_feature("to <city> <state;rel=contains@1>", 3, -0.4)]


@pytest.fixture
def tagger():
    return Model(1.0, tagger_features())
