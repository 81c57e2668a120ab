from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from workcell.demo import demo_project, demo_registry, demo_scene


@pytest.fixture
def registry():
    return demo_registry()


@pytest.fixture
def scene():
    return demo_scene()


@pytest.fixture
def project():
    return demo_project()


@pytest.fixture
def store(tmp_path):
    from workcell.store import Store

    return Store(tmp_path / "store")
