from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rppm import load_documents  # noqa: E402

DATA = Path(__file__).parent / "data"


def read_docs(name: str) -> list[str]:
    base = DATA / name
    return [
        (base / f"{kind}.txt").read_text() if (base / f"{kind}.txt").exists() else ""
        for kind in ("model", "graph", "policy", "config")
    ]


def load(name: str, **overrides):
    docs = load_documents(*read_docs(name))
    for key, value in overrides.items():
        setattr(docs.config.cache, key, value)
    return docs


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def chain():
    return load("chain").engine()


@pytest.fixture
def sod():
    return load("sod").engine()


@pytest.fixture
def wall():
    return load("cw").engine()


def requests_of(name: str) -> list[tuple[str, str, str]]:
    text = (DATA / name / "requests.txt").read_text()
    return [tuple(line.split()) for line in text.splitlines() if line.strip()]


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
