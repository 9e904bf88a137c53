"""Annotated tasks, key nodes, and the task file format.

A task couples a natural-language instruction with a recorded reference
workflow and a set of key nodes — milestone conditions any successful
trajectory must satisfy, each checked by one (target, match function) pair.
Key-node order is stored but not enforced at evaluation time: milestones may
be reached in any order.

Task file, version 1: UTF-8 JSON, ``{"version": 1, "tasks": [...]}``. Unknown
fields are rejected when parsing strictly and logged otherwise. Parsed values
are immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from .actions import ELEMENT_ACTION_TYPES, ActionType
from .errors import SchemaError, UnsupportedAction
from .jsonutil import fraction_from_number
from .matching import (
    DEFAULT_SEMANTIC_THRESHOLD,
    COMPATIBILITY,
    MatchFunction,
    MatchReference,
    PathReference,
    SemanticReference,
    Target,
    UrlComponent,
    UrlReference,
    ValueReference,
    check_compatibility,
    normalize_url,
)

logger = logging.getLogger(__name__)

TASK_FILE_VERSION = 1

_INPUT_ACTIONS = frozenset({ActionType.FILL_FORM, ActionType.FILL_SEARCH, ActionType.SELECT})


@dataclass(frozen=True)
class AnnotatedStep:
    """One recorded workflow step with its post-state URL."""

    index: int
    action_type: ActionType
    post_url: str
    action_value: str | None = None
    selector_path: str | None = None
    element_value: str | None = None
    coordinates: tuple[float, float] | None = None
    screenshot_ref: str | None = None

    def targets_element(self) -> bool:
        return self.action_type in ELEMENT_ACTION_TYPES


@dataclass(frozen=True)
class KeyNode:
    node_id: str
    target: Target
    match_function: MatchFunction
    reference: MatchReference
    pass_threshold: Fraction = Fraction(1)


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    instruction: str
    entry_url: str
    reference_workflow: tuple[AnnotatedStep, ...]
    key_nodes: tuple[KeyNode, ...]
    reference_length: int

    def node(self, node_id: str) -> KeyNode:
        for node in self.key_nodes:
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    location: str
    message: str


@dataclass(frozen=True)
class Suggestion:
    """Candidate evaluation functions for a necessary workflow step."""

    candidates: tuple[tuple[Target, MatchFunction], ...]


# ---------------------------------------------------------------------------
# Parsing


def _require(raw: dict[str, Any], key: str, loc: str) -> Any:
    if key not in raw:
        raise SchemaError(f"missing field {key!r}", loc)
    return raw[key]


def _check_fields(raw: dict[str, Any], allowed: set[str], loc: str, strict: bool) -> None:
    unknown = set(raw) - allowed
    if not unknown:
        return
    message = f"unknown fields {sorted(unknown)}"
    if strict:
        raise SchemaError(message, loc)
    logger.warning("%s: %s", loc, message)


def _parse_reference(
    raw: Any, target: Target, fn: MatchFunction, loc: str, strict: bool
) -> MatchReference:
    if not isinstance(raw, dict):
        raise SchemaError("reference must be an object", loc)
    try:
        if fn is MatchFunction.SEMANTIC:
            _check_fields(raw, {"instruction"}, loc, strict)
            instruction = str(_require(raw, "instruction", loc))
            if not instruction.strip():
                raise SchemaError("semantic instruction must be non-empty", loc)
            return SemanticReference(instruction=instruction)
        if target is Target.URL:
            _check_fields(raw, {"component", "param", "value", "url"}, loc, strict)
            component = UrlComponent(raw.get("component", "full"))
            param = raw.get("param")
            if component is UrlComponent.QUERY_PARAM and not param:
                raise SchemaError("query_param reference requires 'param'", loc)
            return UrlReference(
                value=str(_require(raw, "value", loc)),
                component=component,
                param_name=str(param) if param is not None else None,
                url=str(raw["url"]) if "url" in raw else None,
            )
        if target is Target.ELEMENT_PATH:
            _check_fields(raw, {"selector"}, loc, strict)
            selector = str(_require(raw, "selector", loc))
            if not selector.strip():
                raise SchemaError("selector must be non-empty", loc)
            return PathReference(selector=selector)
        _check_fields(raw, {"expected"}, loc, strict)
        return ValueReference(expected=str(_require(raw, "expected", loc)))
    except ValueError as exc:
        raise SchemaError(str(exc), loc) from exc


def _parse_key_node(
    raw: Any, loc: str, strict: bool, default_semantic_threshold: Fraction
) -> KeyNode:
    if not isinstance(raw, dict):
        raise SchemaError("key node must be an object", loc)
    _check_fields(raw, {"node_id", "target", "match", "reference", "threshold"}, loc, strict)
    node_id = str(_require(raw, "node_id", loc))
    try:
        target = Target(_require(raw, "target", loc))
        fn = MatchFunction(_require(raw, "match", loc))
    except ValueError as exc:
        raise SchemaError(str(exc), loc) from exc
    check_compatibility(target, fn, node_id)
    reference = _parse_reference(raw.get("reference"), target, fn, f"{loc}.reference", strict)
    if "threshold" in raw:
        try:
            threshold = fraction_from_number(raw["threshold"])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"bad threshold: {exc}", loc) from exc
    elif fn is MatchFunction.SEMANTIC:
        threshold = default_semantic_threshold
    else:
        threshold = Fraction(1)
    if not 0 < threshold <= 1:
        raise SchemaError("threshold must be in (0, 1]", loc)
    return KeyNode(
        node_id=node_id,
        target=target,
        match_function=fn,
        reference=reference,
        pass_threshold=threshold,
    )


def _parse_step(raw: Any, loc: str, strict: bool) -> AnnotatedStep:
    if not isinstance(raw, dict):
        raise SchemaError("step must be an object", loc)
    _check_fields(
        raw,
        {"index", "action", "selector_path", "element_value", "post_url", "coordinates",
         "screenshot_ref"},
        loc,
        strict,
    )
    action_raw = _require(raw, "action", loc)
    if not isinstance(action_raw, dict):
        raise SchemaError("action must be an object", f"{loc}.action")
    _check_fields(action_raw, {"type", "value", "selector"}, f"{loc}.action", strict)
    try:
        kind = ActionType(_require(action_raw, "type", f"{loc}.action"))
    except ValueError as exc:
        raise SchemaError(str(exc), f"{loc}.action") from exc
    index = _require(raw, "index", loc)
    if not isinstance(index, int) or isinstance(index, bool) or index < 0:
        raise SchemaError("index must be a non-negative integer", loc)
    selector = raw.get("selector_path", action_raw.get("selector"))
    coordinates = None
    if raw.get("coordinates") is not None:
        coords_raw = raw["coordinates"]
        if not (isinstance(coords_raw, list) and len(coords_raw) == 2):
            raise SchemaError("coordinates must be [x, y]", loc)
        coordinates = (float(coords_raw[0]), float(coords_raw[1]))
    step = AnnotatedStep(
        index=index,
        action_type=kind,
        post_url=str(_require(raw, "post_url", loc)),
        action_value=str(action_raw["value"]) if "value" in action_raw else None,
        selector_path=str(selector) if selector is not None else None,
        element_value=str(raw["element_value"]) if "element_value" in raw else None,
        coordinates=coordinates,
        screenshot_ref=str(raw["screenshot_ref"]) if "screenshot_ref" in raw else None,
    )
    if step.targets_element() and not step.selector_path:
        raise SchemaError("element action requires a selector_path", loc)
    return step


def _parse_task(
    raw: Any, loc: str, strict: bool, default_semantic_threshold: Fraction
) -> TaskSpec:
    if not isinstance(raw, dict):
        raise SchemaError("task must be an object", loc)
    _check_fields(
        raw,
        {"task_id", "instruction", "entry_url", "reference_workflow", "key_nodes",
         "reference_length"},
        loc,
        strict,
    )
    steps_raw = _require(raw, "reference_workflow", loc)
    nodes_raw = _require(raw, "key_nodes", loc)
    if not isinstance(steps_raw, list) or not isinstance(nodes_raw, list):
        raise SchemaError("reference_workflow and key_nodes must be lists", loc)
    steps = tuple(
        _parse_step(s, f"{loc}.reference_workflow[{i}]", strict) for i, s in enumerate(steps_raw)
    )
    nodes = tuple(
        _parse_key_node(n, f"{loc}.key_nodes[{i}]", strict, default_semantic_threshold)
        for i, n in enumerate(nodes_raw)
    )
    reference_length = raw.get("reference_length", len(steps))
    task = TaskSpec(
        task_id=str(_require(raw, "task_id", loc)),
        instruction=str(_require(raw, "instruction", loc)),
        entry_url=str(_require(raw, "entry_url", loc)),
        reference_workflow=steps,
        key_nodes=nodes,
        reference_length=reference_length,
    )
    problems = [d for d in validate_task(task) if d.severity == "error"]
    if problems:
        first = problems[0]
        raise SchemaError(f"{first.location}: {first.message}", loc)
    return task


def parse_task_file(
    data: bytes | str,
    *,
    strict: bool = True,
    default_semantic_threshold: Fraction = DEFAULT_SEMANTIC_THRESHOLD,
) -> list[TaskSpec]:
    """Parse a task file; either every task parses or an error is raised."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    _check_fields(doc, {"version", "tasks"}, "$", strict)
    if doc.get("version") != TASK_FILE_VERSION:
        raise SchemaError(f"unsupported version {doc.get('version')!r}", "$")
    tasks_raw = _require(doc, "tasks", "$")
    if not isinstance(tasks_raw, list):
        raise SchemaError("tasks must be a list", "$")
    return [
        _parse_task(raw, f"tasks[{i}]", strict, default_semantic_threshold)
        for i, raw in enumerate(tasks_raw)
    ]


def parse_annotated_step(raw: Any, *, strict: bool = True, location: str = "step") -> AnnotatedStep:
    """Parse one step object in the task-file step schema."""
    return _parse_step(raw, location, strict)


# ---------------------------------------------------------------------------
# Serialization (parse ∘ serialize is the identity on TaskSpec values)


def _threshold_to_json(threshold: Fraction) -> float | str:
    as_float = float(threshold)
    if Fraction(str(as_float)) == threshold:
        return as_float
    return str(threshold)


def reference_to_dict(reference: MatchReference) -> dict[str, Any]:
    match reference:
        case SemanticReference(instruction):
            return {"instruction": instruction}
        case PathReference(selector):
            return {"selector": selector}
        case ValueReference(expected):
            return {"expected": expected}
        case UrlReference():
            out: dict[str, Any] = {"component": reference.component.value,
                                   "value": reference.value}
            if reference.param_name is not None:
                out["param"] = reference.param_name
            if reference.url is not None:
                out["url"] = reference.url
            return out
    raise TypeError(f"unknown reference {reference!r}")  # pragma: no cover


def step_to_dict(step: AnnotatedStep) -> dict[str, Any]:
    action: dict[str, Any] = {"type": step.action_type.value}
    if step.action_value is not None:
        action["value"] = step.action_value
    out: dict[str, Any] = {"index": step.index, "action": action, "post_url": step.post_url}
    if step.selector_path is not None:
        out["selector_path"] = step.selector_path
    if step.element_value is not None:
        out["element_value"] = step.element_value
    if step.coordinates is not None:
        out["coordinates"] = list(step.coordinates)
    if step.screenshot_ref is not None:
        out["screenshot_ref"] = step.screenshot_ref
    return out


def node_to_dict(node: KeyNode) -> dict[str, Any]:
    return {
        "node_id": node.node_id,
        "target": node.target.value,
        "match": node.match_function.value,
        "reference": reference_to_dict(node.reference),
        "threshold": _threshold_to_json(node.pass_threshold),
    }


def task_to_dict(task: TaskSpec) -> dict[str, Any]:
    return {
        "task_id": task.task_id,
        "instruction": task.instruction,
        "entry_url": task.entry_url,
        "reference_workflow": [step_to_dict(s) for s in task.reference_workflow],
        "key_nodes": [node_to_dict(n) for n in task.key_nodes],
        "reference_length": task.reference_length,
    }


def serialize_tasks(tasks: list[TaskSpec]) -> bytes:
    doc = {"version": TASK_FILE_VERSION, "tasks": [task_to_dict(t) for t in tasks]}
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Validation


def _url_problem(url: str) -> str | None:
    from .errors import MalformedUrl

    try:
        normalize_url(url)
    except MalformedUrl as exc:
        return str(exc)
    return None


def validate_task(task: TaskSpec) -> list[Diagnostic]:
    """Diagnostics for a task; empty iff every invariant holds."""
    out: list[Diagnostic] = []

    def error(location: str, message: str) -> None:
        out.append(Diagnostic("error", location, message))

    if not task.key_nodes:
        error(task.task_id, "task has no key nodes")
    seen: set[str] = set()
    for node in task.key_nodes:
        if node.node_id in seen:
            error(node.node_id, "duplicate node_id")
        seen.add(node.node_id)
        if (node.target, node.match_function) not in COMPATIBILITY:
            error(node.node_id,
                  f"{node.target.value} does not support {node.match_function.value} match")
            continue
        if node.match_function is MatchFunction.SEMANTIC:
            if not isinstance(node.reference, SemanticReference):
                error(node.node_id, "semantic node requires a judge instruction")
        elif node.target is Target.URL and not isinstance(node.reference, UrlReference):
            error(node.node_id, "url node requires a url reference")
        elif node.target is Target.ELEMENT_PATH and not isinstance(node.reference, PathReference):
            error(node.node_id, "element_path node requires a selector reference")
        if not 0 < node.pass_threshold <= 1:
            error(node.node_id, "pass_threshold must be in (0, 1]")

    if task.reference_length != len(task.reference_workflow):
        error(task.task_id,
              f"reference_length {task.reference_length} != "
              f"{len(task.reference_workflow)} workflow steps")
    for position, step in enumerate(task.reference_workflow):
        loc = f"{task.task_id}:step[{position}]"
        if step.index != position:
            error(loc, f"index {step.index} not contiguous from 0")
        if step.targets_element() and not step.selector_path:
            error(loc, "element action requires a selector_path")
        problem = _url_problem(step.post_url)
        if problem:
            error(loc, f"bad post_url: {problem}")
    problem = _url_problem(task.entry_url)
    if problem:
        error(task.task_id, f"bad entry_url: {problem}")
    return out


# ---------------------------------------------------------------------------
# Evaluation-function suggestion

_URL_CANDIDATES = (
    (Target.URL, MatchFunction.EXACT),
    (Target.URL, MatchFunction.INCLUDE),
    (Target.URL, MatchFunction.SEMANTIC),
)

_ELEMENT_CANDIDATES = (
    (Target.ELEMENT_PATH, MatchFunction.EXACT),
    (Target.ELEMENT_VALUE, MatchFunction.EXACT),
    (Target.ELEMENT_VALUE, MatchFunction.INCLUDE),
    (Target.ELEMENT_VALUE, MatchFunction.SEMANTIC),
)


def suggest_evaluation_function(
    step: AnnotatedStep, url_changed: bool, necessary: bool
) -> Suggestion | None:
    """Candidate (target, match) pairs for annotating a step as a key node.

    Steps that are not necessary conditions get no suggestion. Necessary steps
    whose effect shows in the URL suggest url checks on the post-action state;
    otherwise element-level checks are suggested.
    """
    if step.action_type is not ActionType.CLICK and step.action_type not in _INPUT_ACTIONS:
        raise UnsupportedAction(
            f"no suggestion rule for {step.action_type.value!r} actions"
        )
    if not necessary:
        return None
    if url_changed:
        return Suggestion(candidates=_URL_CANDIDATES)
    return Suggestion(candidates=_ELEMENT_CANDIDATES)
