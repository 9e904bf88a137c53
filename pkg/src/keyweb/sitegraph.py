"""The mock web: pages plus deterministic action-triggered transitions.

A site graph is the environment's transition function. Pages are keyed by
normalized URL; click/search/select transitions are keyed by the source page
and the acted element's normalized selector. Search queries are normalized
(lowercase, whitespace collapsed) so lookups are deterministic.

Graph file, version 1: a JSON bundle whose pages carry inline ``html`` or an
``html_file`` path relative to the bundle.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import DanglingEdge, SchemaError
from .matching import normalize_selector, normalize_url

GRAPH_FILE_VERSION = 1


def normalize_query(query: str) -> str:
    return re.sub(r"\s+", " ", query).strip().lower()


@dataclass(frozen=True)
class Page:
    url: str  # canonical
    title: str
    html: str


@dataclass(frozen=True)
class ClickDestination:
    url: str
    new_tab: bool = False


@dataclass
class SiteGraph:
    pages: dict[str, Page] = field(default_factory=dict)
    click_edges: dict[tuple[str, str], ClickDestination] = field(default_factory=dict)
    search_edges: dict[tuple[str, str, str], str] = field(default_factory=dict)
    select_effects: dict[tuple[str, str, str], str | None] = field(default_factory=dict)
    google_index: dict[str, str] = field(default_factory=dict)
    default_results: str | None = None

    @staticmethod
    def canonical(url: str) -> str:
        return normalize_url(url).canonical

    def has_page(self, url: str) -> bool:
        return self.canonical(url) in self.pages

    def page(self, url: str) -> Page:
        return self.pages[self.canonical(url)]

    def click_destination(self, url: str, selector: str) -> ClickDestination | None:
        return self.click_edges.get((self.canonical(url), normalize_selector(selector)))

    def search_destination(self, url: str, selector: str, query: str) -> str | None:
        key = (self.canonical(url), normalize_selector(selector), normalize_query(query))
        return self.search_edges.get(key)

    def select_effect(self, url: str, selector: str, value: str) -> tuple[bool, str | None]:
        """(has_effect_entry, destination-or-None) for a select action."""
        key = (self.canonical(url), normalize_selector(selector), value)
        if key in self.select_effects:
            return True, self.select_effects[key]
        return False, None

    def google_destination(self, query: str) -> str | None:
        return self.google_index.get(normalize_query(query), self.default_results)

    def add_page(self, url: str, title: str, html: str) -> None:
        self.pages[self.canonical(url)] = Page(self.canonical(url), title, html)

    def replace_page_html(self, url: str, html: str) -> None:
        page = self.page(url)
        self.pages[page.url] = Page(page.url, page.title, html)

    def check(self) -> None:
        """Raise :class:`DanglingEdge` if any destination lacks a page."""
        def ensure(url: str | None, what: str) -> None:
            if url is not None and url not in self.pages:
                raise DanglingEdge(f"{what} points at unknown page {url!r}")

        for key, dest in self.click_edges.items():
            ensure(dest.url, f"click edge {key}")
        for key, url in self.search_edges.items():
            ensure(url, f"search edge {key}")
        for key, url in self.select_effects.items():
            ensure(url, f"select effect {key}")
        for query, url in self.google_index.items():
            ensure(url, f"google index entry {query!r}")
        ensure(self.default_results, "default results page")


def _edge_field(raw: dict[str, Any], key: str, loc: str) -> str:
    if key not in raw:
        raise SchemaError(f"missing field {key!r}", loc)
    return str(raw[key])


def load_site_graph(data: bytes | str, base_dir: Path | str | None = None) -> SiteGraph:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    if doc.get("version") != GRAPH_FILE_VERSION:
        raise SchemaError(f"unsupported version {doc.get('version')!r}")

    graph = SiteGraph()
    base = Path(base_dir) if base_dir is not None else None

    for i, raw in enumerate(doc.get("pages", [])):
        loc = f"pages[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError("page must be an object", loc)
        url = graph.canonical(_edge_field(raw, "url", loc))
        if url in graph.pages:
            raise SchemaError(f"duplicate page {url!r}", loc)
        if "html" in raw:
            html = str(raw["html"])
        elif "html_file" in raw:
            if base is None:
                raise SchemaError("html_file requires a base directory", loc)
            html = (base / str(raw["html_file"])).read_text(encoding="utf-8")
        else:
            raise SchemaError("page needs 'html' or 'html_file'", loc)
        graph.pages[url] = Page(url=url, title=str(raw.get("title", "")), html=html)

    for i, raw in enumerate(doc.get("click_edges", [])):
        loc = f"click_edges[{i}]"
        key = (graph.canonical(_edge_field(raw, "from", loc)),
               normalize_selector(_edge_field(raw, "selector", loc)))
        graph.click_edges[key] = ClickDestination(
            url=graph.canonical(_edge_field(raw, "to", loc)),
            new_tab=bool(raw.get("new_tab", False)),
        )

    for i, raw in enumerate(doc.get("search_edges", [])):
        loc = f"search_edges[{i}]"
        key = (graph.canonical(_edge_field(raw, "from", loc)),
               normalize_selector(_edge_field(raw, "selector", loc)),
               normalize_query(_edge_field(raw, "query", loc)))
        graph.search_edges[key] = graph.canonical(_edge_field(raw, "to", loc))

    for i, raw in enumerate(doc.get("select_effects", [])):
        loc = f"select_effects[{i}]"
        key = (graph.canonical(_edge_field(raw, "from", loc)),
               normalize_selector(_edge_field(raw, "selector", loc)),
               _edge_field(raw, "value", loc))
        dest = raw.get("to")
        graph.select_effects[key] = graph.canonical(str(dest)) if dest is not None else None

    for i, raw in enumerate(doc.get("google_index", [])):
        loc = f"google_index[{i}]"
        graph.google_index[normalize_query(_edge_field(raw, "query", loc))] = graph.canonical(
            _edge_field(raw, "to", loc)
        )

    if doc.get("default_results") is not None:
        graph.default_results = graph.canonical(str(doc["default_results"]))

    graph.check()
    return graph


def load_site_graph_file(path: Path | str) -> SiteGraph:
    path = Path(path)
    return load_site_graph(path.read_text(encoding="utf-8"), base_dir=path.parent)
