"""Minimal HTML DOM with XPath-style selector generation and resolution.

Parsing is error tolerant: stray end tags are ignored, unclosed elements are
closed by their ancestors, missing ``html``/``head``/``body`` wrappers are
synthesized so every document exposes the same skeleton.

Selector dialect (the only one produced and resolved here):

* ``//*[@id="X"]/tag[2]/tag`` — anchored at the single element whose ``id``
  attribute equals ``X``, followed by positional child steps;
* ``/html/body/div[2]/a`` — fully positional from the root.

A positional step ``tag[n]`` picks the n-th child with that tag (1-based);
the index is omitted when the element is the only child of its tag, so a
path resolves to exactly one node for any document it was generated from.
"""

from __future__ import annotations

import html as html_escape
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Iterator

VOID_TAGS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
})

# Tags whose subtree text never counts as page content.
NONCONTENT_TAGS = frozenset({"script", "style", "template", "noscript"})

# Tags that belong in <head> when they appear before any body content.
_HEAD_TAGS = frozenset({"title", "meta", "link", "style", "base"})


@dataclass(eq=False)
class DomNode:
    """One element. ``children`` holds child elements and raw text chunks."""

    tag: str
    attrs: dict[str, str] = field(default_factory=dict)
    parent: "DomNode | None" = None
    children: list["DomNode | str"] = field(default_factory=list)

    def child_elements(self) -> list["DomNode"]:
        return [c for c in self.children if isinstance(c, DomNode)]

    def own_text(self) -> str:
        """Text directly inside this element, whitespace collapsed."""
        return collapse_ws("".join(c for c in self.children if isinstance(c, str)))

    def attr(self, name: str) -> str | None:
        return self.attrs.get(name)

    def ancestors(self) -> Iterator["DomNode"]:
        node = self.parent
        while node is not None:
            yield node
            node = node.parent

    def walk(self) -> Iterator["DomNode"]:
        """Pre-order traversal including self."""
        yield self
        for child in self.children:
            if isinstance(child, DomNode):
                yield from child.walk()

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"<DomNode {self.tag} {self.attrs}>"


def collapse_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


class Document:
    """A parsed page: the ``html`` root plus id bookkeeping."""

    def __init__(self, root: DomNode) -> None:
        self.root = root
        self._id_counts: dict[str, int] | None = None

    @property
    def body(self) -> DomNode | None:
        for child in self.root.child_elements():
            if child.tag == "body":
                return child
        return None

    @property
    def title(self) -> str:
        for node in self.root.walk():
            if node.tag == "title":
                return node.own_text()
        return ""

    def elements(self) -> Iterator[DomNode]:
        yield from self.root.walk()

    def id_count(self, value: str) -> int:
        if self._id_counts is None:
            counts: dict[str, int] = {}
            for node in self.root.walk():
                node_id = node.attrs.get("id")
                if node_id:
                    counts[node_id] = counts.get(node_id, 0) + 1
            self._id_counts = counts
        return self._id_counts.get(value, 0)

    def invalidate(self) -> None:
        """Drop caches after a structural mutation."""
        self._id_counts = None


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.root = DomNode("html")
        self._head: DomNode | None = None
        self._body: DomNode | None = None
        self._stack: list[DomNode] = [self.root]

    def _ensure(self, tag: str) -> DomNode:
        current = self._head if tag == "head" else self._body
        if current is None:
            current = DomNode(tag, parent=self.root)
            self.root.children.append(current)
            if tag == "head":
                self._head = current
            else:
                self._body = current
        return current

    def _insertion_parent(self, tag: str | None = None) -> DomNode:
        top = self._stack[-1]
        if top is not self.root:
            return top
        if tag is not None and tag in _HEAD_TAGS and self._body is None:
            return self._ensure("head")
        return self._ensure("body")

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        attr_map = {}
        for name, value in attrs:
            attr_map.setdefault(name, value if value is not None else "")
        if tag == "html":
            for name, value in attr_map.items():
                self.root.attrs.setdefault(name, value)
            return
        if tag in ("head", "body"):
            node = self._ensure(tag)
            node.attrs.update(attr_map)
            self._stack.append(node)
            return
        parent = self._insertion_parent(tag)
        node = DomNode(tag, attrs=attr_map, parent=parent)
        parent.children.append(node)
        if tag not in VOID_TAGS:
            self._stack.append(node)

    def handle_startendtag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        if tag in VOID_TAGS:
            self.handle_starttag(tag, attrs)
            return
        self.handle_starttag(tag, attrs)
        self.handle_endtag(tag)

    def handle_endtag(self, tag: str) -> None:
        if tag == "html":
            del self._stack[1:]
            return
        if tag in VOID_TAGS:
            return
        for depth in range(len(self._stack) - 1, 0, -1):
            if self._stack[depth].tag == tag:
                del self._stack[depth:]
                return
        # Stray end tag: ignore.

    def handle_data(self, data: str) -> None:
        if not data:
            return
        top = self._stack[-1]
        if top is self.root:
            if not data.strip():
                return
            top = self._ensure("body")
        top.children.append(data)


def parse_html(text: str) -> Document:
    builder = _TreeBuilder()
    builder.feed(text)
    builder.close()
    return Document(builder.root)


# ---------------------------------------------------------------------------
# Selector generation


def _positional_step(node: DomNode) -> str:
    parent = node.parent
    if parent is None:
        return f"/{node.tag}"
    same_tag = [c for c in parent.child_elements() if c.tag == node.tag]
    if len(same_tag) == 1:
        return f"/{node.tag}"
    return f"/{node.tag}[{same_tag.index(node) + 1}]"


def _is_unique_anchor(doc: Document, node: DomNode) -> bool:
    node_id = node.attrs.get("id")
    return bool(node_id) and '"' not in node_id and doc.id_count(node_id) == 1


def xpath_for(doc: Document, node: DomNode) -> str:
    """Selector path for ``node``; resolving it yields exactly that node."""
    steps: list[str] = []
    current: DomNode | None = node
    while current is not None:
        if _is_unique_anchor(doc, current):
            anchor = f'//*[@id="{current.attrs["id"]}"]'
            return anchor + "".join(reversed(steps))
        steps.append(_positional_step(current))
        current = current.parent
    return "".join(reversed(steps))


# ---------------------------------------------------------------------------
# Selector resolution

_ID_ANCHOR_RE = re.compile(r'^//\*\[@id=(["\'])(?P<id>.*?)\1\]')
_STEP_RE = re.compile(r"^(?P<tag>\*|[a-zA-Z][a-zA-Z0-9_-]*)(?:\[(?P<idx>\d+)\])?$")


def _apply_step(nodes: list[DomNode], step: str) -> list[DomNode]:
    match = _STEP_RE.match(step)
    if match is None:
        return []
    tag = match.group("tag")
    idx = match.group("idx")
    result: list[DomNode] = []
    for node in nodes:
        children = node.child_elements()
        if tag != "*":
            children = [c for c in children if c.tag == tag]
        if idx is None:
            result.extend(children)
        else:
            i = int(idx)
            if 1 <= i <= len(children):
                result.append(children[i - 1])
    return result


def resolve_xpath(doc: Document, path: str) -> list[DomNode]:
    """Resolve a path in the supported dialect; unresolvable paths yield []."""
    path = path.strip()
    anchor = _ID_ANCHOR_RE.match(path)
    if anchor is not None:
        wanted = anchor.group("id")
        nodes = [n for n in doc.root.walk() if n.attrs.get("id") == wanted]
        rest = path[anchor.end():]
    elif path.startswith("/") and not path.startswith("//"):
        rest = path
        first, _, remainder = rest.lstrip("/").partition("/")
        match = _STEP_RE.match(first)
        if match is None:
            return []
        tag = match.group("tag")
        if tag not in ("*", doc.root.tag):
            return []
        nodes = [doc.root]
        rest = "/" + remainder if remainder else ""
    else:
        return []
    for step in [s for s in rest.split("/") if s]:
        nodes = _apply_step(nodes, step)
        if not nodes:
            return []
    return nodes


# ---------------------------------------------------------------------------
# Serialization (used by replay-health tooling to re-emit mutated pages)


def to_html(node: DomNode) -> str:
    parts: list[str] = []
    _serialize(node, parts)
    return "".join(parts)


def _serialize(node: DomNode, parts: list[str]) -> None:
    attrs = "".join(
        f' {name}' if value == "" else f' {name}="{html_escape.escape(value, quote=True)}"'
        for name, value in node.attrs.items()
    )
    parts.append(f"<{node.tag}{attrs}>")
    if node.tag in VOID_TAGS:
        return
    for child in node.children:
        if isinstance(child, str):
            parts.append(html_escape.escape(child, quote=False))
        else:
            _serialize(child, parts)
    parts.append(f"</{node.tag}>")
