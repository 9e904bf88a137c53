"""Exception hierarchy shared across the package."""

from __future__ import annotations


class KeywebError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(KeywebError):
    """A document does not conform to its file format.

    ``location`` is a dotted/indexed path into the document, e.g.
    ``tasks[2].key_nodes[0]``.
    """

    def __init__(self, message: str, location: str = "") -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class IncompatiblePair(KeywebError):
    """A key node pairs an evaluation target with an unsupported match function."""

    def __init__(self, target: str, match_function: str, node_id: str = "") -> None:
        self.target = target
        self.match_function = match_function
        self.node_id = node_id
        where = f" (node {node_id})" if node_id else ""
        super().__init__(f"{target} does not support {match_function} match{where}")


class MalformedUrl(KeywebError):
    """Input string is not an absolute http(s) URL."""


class JudgeUnavailable(KeywebError):
    """The semantic judge backend failed; evaluation must not silently score 0."""


class UnparseableReply(KeywebError):
    """A judge reply carried no quoted score."""


class EmptyDocument(KeywebError):
    """An HTML snapshot had no body content to observe."""


class DanglingEdge(KeywebError):
    """A site-graph edge points at a URL with no page."""


class UnknownEntryUrl(KeywebError):
    """A task's entry URL is not present in the site graph."""


class PolicyError(KeywebError):
    """A policy raised or returned a malformed decision."""


class SelectorNotFound(KeywebError):
    """A recorded selector did not resolve against the current observation."""


class ProtocolViolation(KeywebError):
    """A session message broke the wire protocol (bad seq, unknown kind, ...)."""


class UnknownTask(KeywebError):
    """A session referenced a task id that is not loaded."""


class EmptyInput(KeywebError):
    """An aggregation was requested over zero reports."""


class UnsupportedAction(KeywebError):
    """Evaluation-function suggestion only covers input and click operations."""
