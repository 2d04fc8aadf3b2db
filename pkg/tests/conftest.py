from __future__ import annotations

import json
import os

import pytest

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def load_fixture(name: str):
    with open(fixture_path(name), encoding="utf-8") as fh:
        if name.endswith(".jsonl"):
            return [json.loads(line) for line in fh if line.strip()]
        return json.load(fh)


@pytest.fixture
def questions_abcd():
    from thinkctl import McqQuestion

    def make(qid: str, gold: str = "B", source: str = "src", stem: str | None = None):
        return McqQuestion(
            id=qid,
            stem=stem or f"Question text for {qid}?",
            options={"A": "one", "B": "two", "C": "three", "D": "four"},
            gold=gold,
            source=source,
        )

    return make
