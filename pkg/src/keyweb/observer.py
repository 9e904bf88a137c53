"""Build agent observations from HTML snapshots.

The observation is a filtered accessibility tree: only interactive, visible,
content-bearing elements are kept, each annotated with a numeric id, its tag,
its content, and a selector path. Content owned by inert wrapper elements
(``span`` inside a ``button``, ...) is mapped upward to the nearest
interactive ancestor; content that never reaches one is discarded.

``tree_text`` format, version 1: one line per emitted element,
``[id] tag 'content'``, LF line endings, two-space indentation per DOM depth
level below ``body``, single quotes around content with ``\\`` and ``'``
backslash-escaped. The format is bit-exact and covered by golden files.

Visibility is approximated from static HTML (there is no layout engine):
an element is hidden by its own ``hidden`` attribute, inline
``display:none``/``visibility:hidden``, ``type="hidden"`` on inputs, or
``aria-hidden="true"`` on itself or any ancestor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .dom import NONCONTENT_TAGS, Document, DomNode, collapse_ws, parse_html, xpath_for
from .errors import EmptyDocument

TREE_FORMAT_VERSION = 1

DEFAULT_MAPPING_DEPTH = 5

INTERACTIVE_TAGS = frozenset({"a", "button", "input", "textarea", "select", "option"})
INTERACTIVE_ROLES = frozenset({"button", "link", "textbox", "combobox"})

# Content fallbacks after the element's own text, in priority order.
_CONTENT_ATTRS = ("value", "placeholder", "aria-label", "alt", "title")


@dataclass(frozen=True)
class ElementNode:
    """One emitted interactive element."""

    element_id: int
    tag: str
    content: str
    selector_path: str
    interactive: bool
    visible: bool


@dataclass(frozen=True)
class Observation:
    tab_name: str
    url: str
    tree_text: str
    id_map: dict[int, ElementNode]
    screenshot_ref: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": TREE_FORMAT_VERSION,
            "tab_name": self.tab_name,
            "url": self.url,
            "tree_text": self.tree_text,
            "screenshot_ref": self.screenshot_ref,
            "elements": [
                {
                    "id": node.element_id,
                    "tag": node.tag,
                    "content": node.content,
                    "selector": node.selector_path,
                }
                for _, node in sorted(self.id_map.items())
            ],
        }


def is_interactive(node: DomNode) -> bool:
    if node.tag == "input":
        return node.attrs.get("type", "").lower() != "hidden"
    if node.tag in INTERACTIVE_TAGS:
        return True
    return node.attrs.get("role", "").lower() in INTERACTIVE_ROLES


def is_usable(node: DomNode) -> bool:
    """Usability filter: disabled controls are not part of the observation."""
    return "disabled" not in node.attrs and node.attrs.get("aria-disabled", "").lower() != "true"


def is_visible(node: DomNode) -> bool:
    if node.tag in NONCONTENT_TAGS:
        return False
    if "hidden" in node.attrs:
        return False
    if node.tag == "input" and node.attrs.get("type", "").lower() == "hidden":
        return False
    style = node.attrs.get("style", "").lower().replace(" ", "")
    if "display:none" in style or "visibility:hidden" in style:
        return False
    current: DomNode | None = node
    while current is not None:
        if current.attrs.get("aria-hidden", "").lower() == "true":
            return False
        current = current.parent
    return True


def map_content_upward(leaf: DomNode, depth_limit: int = DEFAULT_MAPPING_DEPTH) -> DomNode | None:
    """Nearest interactive ancestor-or-self of a content-bearing element.

    Returns ``None`` when no interactive element exists within ``depth_limit``
    upward hops; callers then discard the content.
    """
    if depth_limit < 1:
        raise ValueError("depth_limit must be >= 1")
    if is_interactive(leaf):
        return leaf
    current = leaf.parent
    for _ in range(depth_limit):
        if current is None:
            return None
        if is_interactive(current):
            return current
        current = current.parent
    return None


def _mapped_descendant_text(node: DomNode, depth_limit: int) -> str:
    """Text from inert visible descendants whose mapping target is ``node``."""
    chunks: list[str] = []

    def gather(element: DomNode, hops: int) -> None:
        if hops > depth_limit:
            return
        for child in element.children:
            if isinstance(child, str):
                chunks.append(child)
            elif not is_interactive(child) and is_visible(child):
                gather(child, hops + 1)

    gather(node, 0)
    return collapse_ws(" ".join(chunks))


def element_content(node: DomNode, depth_limit: int = DEFAULT_MAPPING_DEPTH) -> str:
    """Content for an interactive element, applying the fallback chain."""
    own = node.own_text()
    if own:
        return own
    for attr in _CONTENT_ATTRS:
        value = node.attrs.get(attr)
        if value:
            collapsed = collapse_ws(value)
            if collapsed:
                return collapsed
    return _mapped_descendant_text(node, depth_limit)


def selector_for(doc: Document, node: DomNode) -> str:
    return xpath_for(doc, node)


def _escape_content(content: str) -> str:
    return content.replace("\\", "\\\\").replace("'", "\\'")


def build_observation(
    html: str,
    url: str,
    title: str | None = None,
    *,
    screenshot_ref: str | None = None,
    depth_limit: int = DEFAULT_MAPPING_DEPTH,
) -> Observation:
    """Observation for a page snapshot; deterministic for identical input."""
    doc = parse_html(html)
    body = doc.body
    if body is None:
        raise EmptyDocument(f"no body content in snapshot for {url}")
    tab_name = title if title is not None else doc.title

    lines: list[str] = []
    id_map: dict[int, ElementNode] = {}
    next_id = 1

    def emit(node: DomNode, depth: int) -> None:
        nonlocal next_id
        visible = is_visible(node)
        if visible and is_usable(node) and is_interactive(node):
            content = element_content(node, depth_limit)
            if content:
                element = ElementNode(
                    element_id=next_id,
                    tag=node.tag,
                    content=content,
                    selector_path=selector_for(doc, node),
                    interactive=True,
                    visible=True,
                )
                id_map[next_id] = element
                lines.append(f"{'  ' * depth}[{next_id}] {node.tag} '{_escape_content(content)}'")
                next_id += 1
        for child in node.child_elements():
            emit(child, depth + 1)

    for child in body.child_elements():
        emit(child, 0)

    tree_text = "\n".join(lines) + "\n" if lines else ""
    return Observation(
        tab_name=tab_name,
        url=url,
        tree_text=tree_text,
        id_map=id_map,
        screenshot_ref=screenshot_ref,
    )
