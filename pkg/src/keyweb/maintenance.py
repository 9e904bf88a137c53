"""Dataset health checks by workflow replay.

Each task's recorded workflow is replayed against the (possibly updated) site
graph with a layered element-matching strategy: recorded selector first, then
unique content match, then nearest recorded-coordinate match (pages may carry
``data-pos="x,y"`` as their mock layout). Every key node is then re-checked
against the replayed trajectory.

``workflow_status`` reflects replay health only: ``valid`` when every step
executed directly by selector, ``degraded`` when any fallback tier was
needed, ``broken`` on a non-recoverable step failure. Evaluation-function
health is reported per node, so a task can have a valid workflow and still
flag a stale key node. After a broken step, only ``goto``/``google_search``
steps are still attempted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable

from .actions import (
    Action,
    ActionType,
    Click,
    FillForm,
    FillSearch,
    GoBack,
    GoogleSearch,
    Goto,
    Hover,
    Select,
    SwitchTab,
)
from .dom import Document, DomNode, collapse_ws, parse_html, xpath_for
from .env import StepRecord, reset, step
from .errors import UnknownEntryUrl
from .judge import SemanticJudge
from .matching import MatchFunction, normalize_selector
from .observer import element_content, is_interactive, is_usable, is_visible
from .scoring import evaluate_step as eval_step
from .scoring import new_eval_state
from .sitegraph import SiteGraph
from .tasks import AnnotatedStep, TaskSpec

DEFAULT_COORDINATE_RADIUS = 50.0

_NAV_AFTER_FAILURE = frozenset({ActionType.GOTO, ActionType.GOOGLE_SEARCH})


class ResolutionTier(str, Enum):
    BY_SELECTOR = "by_selector"
    BY_CONTENT = "by_content"
    BY_COORDINATES = "by_coordinates"
    FAILED = "failed"


class WorkflowStatus(str, Enum):
    VALID = "valid"
    DEGRADED = "degraded"
    BROKEN = "broken"


class NodeHealth(str, Enum):
    VALID = "valid"
    FAILED = "failed"
    JUDGE_SKIPPED = "judge_skipped"


@dataclass(frozen=True)
class ReplayStepResult:
    index: int
    resolution: ResolutionTier
    note: str = ""


@dataclass(frozen=True)
class TaskValidity:
    task_id: str
    workflow_status: WorkflowStatus
    first_failed_step: int | None
    step_results: tuple[ReplayStepResult, ...]
    eval_status: dict[str, NodeHealth]
    error_messages: tuple[str, ...]
    checked_at: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "workflow_status": self.workflow_status.value,
            "first_failed_step": self.first_failed_step,
            "steps": [
                {"index": r.index, "resolution": r.resolution.value, "note": r.note}
                for r in self.step_results
            ],
            "eval_status": {k: v.value for k, v in sorted(self.eval_status.items())},
            "error_messages": list(self.error_messages),
            "checked_at": self.checked_at,
        }


def _element_pos(node: DomNode) -> tuple[float, float] | None:
    raw = node.attrs.get("data-pos")
    if not raw:
        return None
    parts = raw.split(",")
    if len(parts) != 2:
        return None
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        return None


def _actable(doc: Document) -> list[DomNode]:
    body = doc.body
    if body is None:
        return []
    return [
        node for node in body.walk()
        if node is not body and is_interactive(node) and is_visible(node)
        and is_usable(node) and element_content(node)
    ]


def resolve_element(
    doc: Document,
    step: AnnotatedStep,
    *,
    coordinate_radius: float = DEFAULT_COORDINATE_RADIUS,
) -> tuple[ReplayStepResult, DomNode | None]:
    """Locate the recorded step's element: selector, then content, then coordinates."""
    from .dom import resolve_xpath

    if step.selector_path:
        nodes = resolve_xpath(doc, step.selector_path)
        if len(nodes) == 1:
            return ReplayStepResult(step.index, ResolutionTier.BY_SELECTOR), nodes[0]

    if step.element_value:
        wanted = collapse_ws(step.element_value)
        matches = [node for node in _actable(doc) if element_content(node) == wanted]
        if len(matches) == 1:
            note = f"selector stale; matched unique content {wanted!r}"
            return ReplayStepResult(step.index, ResolutionTier.BY_CONTENT, note), matches[0]

    if step.coordinates is not None:
        x, y = step.coordinates
        best: tuple[float, DomNode] | None = None
        for node in _actable(doc):
            pos = _element_pos(node)
            if pos is None:
                continue
            distance = math.dist((x, y), pos)
            if distance <= coordinate_radius and (best is None or distance < best[0]):
                best = (distance, node)
        if best is not None:
            note = f"selector stale; nearest element at {best[0]:.1f}px"
            return ReplayStepResult(step.index, ResolutionTier.BY_COORDINATES, note), best[1]

    return (
        ReplayStepResult(step.index, ResolutionTier.FAILED,
                         "no selector, content, or coordinate match"),
        None,
    )


def _build_action(recorded: AnnotatedStep, element_id: int | None) -> Action:
    value = recorded.element_value or recorded.action_value or ""
    match recorded.action_type:
        case ActionType.GOTO:
            return Goto(recorded.action_value or recorded.post_url)
        case ActionType.GOOGLE_SEARCH:
            return GoogleSearch(recorded.action_value or "")
        case ActionType.SWITCH_TAB:
            return SwitchTab(int(recorded.action_value or 0))
        case ActionType.GO_BACK:
            return GoBack()
        case ActionType.CLICK:
            return Click(element_id or 0)
        case ActionType.HOVER:
            return Hover(element_id or 0)
        case ActionType.FILL_FORM:
            return FillForm(element_id or 0, value)
        case ActionType.FILL_SEARCH:
            return FillSearch(element_id or 0, value)
        case ActionType.SELECT:
            return Select(element_id or 0, value)
    raise ValueError(recorded.action_type)  # pragma: no cover


def _replay_task(
    task: TaskSpec,
    graph: SiteGraph,
    coordinate_radius: float,
) -> tuple[list[ReplayStepResult], list[StepRecord], int | None, list[str]]:
    results: list[ReplayStepResult] = []
    records: list[StepRecord] = []
    errors: list[str] = []
    first_failed: int | None = None
    state, observation = reset(graph, task)

    def fail(index: int, note: str) -> None:
        nonlocal first_failed
        results.append(ReplayStepResult(index, ResolutionTier.FAILED, note))
        errors.append(f"step {index}: {note}")
        if first_failed is None:
            first_failed = index

    for recorded in task.reference_workflow:
        if first_failed is not None and recorded.action_type not in _NAV_AFTER_FAILURE:
            results.append(ReplayStepResult(
                recorded.index, ResolutionTier.FAILED, "not attempted after first failure"
            ))
            continue

        tier = ResolutionTier.BY_SELECTOR
        note = ""
        element_id: int | None = None
        if recorded.targets_element():
            doc = parse_html(graph.page(state.current_url).html)
            result, node = resolve_element(doc, recorded, coordinate_radius=coordinate_radius)
            if node is None:
                fail(recorded.index, result.note)
                continue
            tier, note = result.resolution, result.note
            selector = normalize_selector(xpath_for(doc, node))
            element_id = next(
                (eid for eid, el in observation.id_map.items()
                 if normalize_selector(el.selector_path) == selector),
                None,
            )
            if element_id is None:
                fail(recorded.index, f"resolved element {selector!r} is not actable")
                continue

        action = _build_action(recorded, element_id)
        state, observation, record = step(state, observation, action, graph)
        records.append(record)
        if not record.action_ok:
            fail(recorded.index, record.error_note or "action failed")
        else:
            results.append(ReplayStepResult(recorded.index, tier, note))
    return results, records, first_failed, errors


def _node_health(
    task: TaskSpec,
    records: list[StepRecord],
    judge: SemanticJudge | None,
    no_judge: bool,
) -> tuple[dict[str, NodeHealth], list[str]]:
    skipped = {
        node.node_id for node in task.key_nodes
        if no_judge and node.match_function is MatchFunction.SEMANTIC
    }
    checkable = replace(
        task, key_nodes=tuple(n for n in task.key_nodes if n.node_id not in skipped)
    )
    eval_state = new_eval_state(checkable)
    for record in records:
        eval_state = eval_step(eval_state, checkable, record, judge)
    health: dict[str, NodeHealth] = {}
    errors: list[str] = []
    for node in task.key_nodes:
        if node.node_id in skipped:
            health[node.node_id] = NodeHealth.JUDGE_SKIPPED
        elif eval_state.statuses[node.node_id].passed:
            health[node.node_id] = NodeHealth.VALID
        else:
            health[node.node_id] = NodeHealth.FAILED
            errors.append(f"key node {node.node_id} no longer passes on replay")
    return health, errors


def check_validity(
    tasks: Iterable[TaskSpec],
    graph: SiteGraph,
    judge: SemanticJudge | None = None,
    *,
    no_judge: bool = False,
    coordinate_radius: float = DEFAULT_COORDINATE_RADIUS,
    now: str | None = None,
) -> list[TaskValidity]:
    """Replay every task and re-check its key nodes; idempotent per input."""
    checked_at = now if now is not None else datetime.now(timezone.utc).isoformat()
    reports: list[TaskValidity] = []
    for task in tasks:
        try:
            results, records, first_failed, errors = _replay_task(
                task, graph, coordinate_radius
            )
        except UnknownEntryUrl as exc:
            reports.append(TaskValidity(
                task_id=task.task_id,
                workflow_status=WorkflowStatus.BROKEN,
                first_failed_step=0,
                step_results=(),
                eval_status={n.node_id: NodeHealth.FAILED for n in task.key_nodes},
                error_messages=(str(exc),),
                checked_at=checked_at,
            ))
            continue
        health, node_errors = _node_health(task, records, judge, no_judge)
        if first_failed is not None:
            status = WorkflowStatus.BROKEN
        elif any(r.resolution is not ResolutionTier.BY_SELECTOR for r in results):
            status = WorkflowStatus.DEGRADED
        else:
            status = WorkflowStatus.VALID
        reports.append(TaskValidity(
            task_id=task.task_id,
            workflow_status=status,
            first_failed_step=first_failed,
            step_results=tuple(results),
            eval_status=health,
            error_messages=tuple(errors + node_errors),
            checked_at=checked_at,
        ))
    return reports


def has_failures(reports: Iterable[TaskValidity]) -> bool:
    """True when any workflow is broken or any key node failed re-checking."""
    for report in reports:
        if report.workflow_status is WorkflowStatus.BROKEN:
            return True
        if any(h is NodeHealth.FAILED for h in report.eval_status.values()):
            return True
    return False


def render_validity_table(reports: Iterable[TaskValidity]) -> str:
    rows = [("task", "status", "failed step", "error message")]
    for report in reports:
        failed_nodes = sorted(
            node_id for node_id, health in report.eval_status.items()
            if health is NodeHealth.FAILED
        )
        message = report.error_messages[0] if report.error_messages else ""
        if failed_nodes and not message:
            message = f"failed nodes: {', '.join(failed_nodes)}"
        rows.append((
            report.task_id,
            report.workflow_status.value,
            "-" if report.first_failed_step is None else str(report.first_failed_step),
            message,
        ))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[j] for j in range(4)))
    return "\n".join(lines) + "\n"
