"""Shipped miniature fixtures: a search engine plus four task sites."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..sitegraph import SiteGraph, load_site_graph
from ..tasks import TaskSpec, parse_task_file


def fixture_dir() -> Path:
    return Path(str(resources.files("keyweb") / "fixtures"))


def load_fixture_graph() -> SiteGraph:
    root = fixture_dir()
    return load_site_graph((root / "sitegraph.json").read_bytes(), base_dir=root)


def load_fixture_tasks() -> list[TaskSpec]:
    return parse_task_file((fixture_dir() / "tasks.json").read_bytes())
