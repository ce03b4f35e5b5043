from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ctxcompress.model import Conversation  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def toy() -> Conversation:
    return Conversation.from_dict(json.loads((DATA / "toy_8turn.json").read_text(encoding="utf-8")))


@pytest.fixture
def synthetic_200() -> Conversation:
    return Conversation.from_dict(json.loads((DATA / "synthetic_200.json").read_text(encoding="utf-8")))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s[2:4])):
            terminalreporter.write_line(line)
