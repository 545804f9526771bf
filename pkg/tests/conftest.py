from __future__ import annotations

import json
from pathlib import Path

import pytest

from repoctx.extractor import build_graph

FIXTURES = Path(__file__).parent / "fixtures"

REPO_NAMES = ("minirepo", "textkit", "starpkg", "shadowrepo", "classrepo", "relpkg")


def load_labels(name: str) -> dict[str, list[str]]:
    path = FIXTURES / "labels" / f"{name}.json"
    return json.loads(path.read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def fixture_graphs():
    return {name: build_graph(FIXTURES / name) for name in REPO_NAMES}


@pytest.fixture(scope="session")
def fixture_labels():
    return {name: load_labels(name) for name in REPO_NAMES}


@pytest.fixture(scope="session")
def minirepo_graph(fixture_graphs):
    return fixture_graphs["minirepo"]


@pytest.fixture(scope="session")
def classrepo_graph(fixture_graphs):
    return fixture_graphs["classrepo"]
