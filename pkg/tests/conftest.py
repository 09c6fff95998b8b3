from __future__ import annotations

import json
from pathlib import Path

import pytest

from tripletext.corpus import read_canonical

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def fixture_corpus():
    return read_canonical((DATA / "fixture_corpus_50.jsonl").read_bytes())


@pytest.fixture(scope="session")
def bleu_fixture():
    rows = []
    for line in (DATA / "bleu_fixture.jsonl").read_text(encoding="utf-8").splitlines():
        rows.append(json.loads(line))
    return rows
