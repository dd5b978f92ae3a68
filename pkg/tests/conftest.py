from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import chainshell as cs

REPO_ROOT = Path(__file__).resolve().parents[1]
DEMO_KB_PATH = REPO_ROOT / "examples" / "chest.kb"


@pytest.fixture(scope="session")
def demo_text() -> str:
    return DEMO_KB_PATH.read_text("utf-8")


@pytest.fixture(scope="session")
def demo_kb(demo_text: str) -> cs.KnowledgeBase:
    return cs.parse_kb(demo_text)


@pytest.fixture
def bool_true() -> cs.Value:
    return cs.Value.boolean(True)
