"""Streaming key-node evaluation and the derived metrics.

Nodes are milestones, not a forced sequence: every step's signals are tested
against every not-yet-passed node, so milestones may be satisfied in any
order, and a node that passed stays passed. The step score is binary per
node; graded semantic scores are thresholded before they count.

Metrics are exact rationals:

* completion rate  = achieved / total key nodes;
* task success(k)  = at most ``k`` nodes unpassed;
* efficiency score = trajectory length / achieved, undefined at 0 achieved
  (excluded from aggregation with an explicit count);
* alignment score  = 1 when complete with a completion signal, 0.95 when
  complete without one, achieved/total when incomplete but signaled, and
  0.8 x achieved/total when incomplete and ended without a signal (budget
  stop or environment error — both are forced endings).

Report JSON serializes every rational as a 4-fraction-digit decimal string
so golden files are platform stable.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Any, Sequence

from .env import StepRecord
from .errors import EmptyInput, JudgeUnavailable
from .judge import SemanticJudge
from .jsonutil import decimal4
from .matching import Target, evaluate_reference
from .tasks import TaskSpec

REPORT_VERSION = 1

SUCCESS_TOLERANCES = (0, 1)


class Termination(str, Enum):
    SIGNALED_FINISH = "signaled_finish"
    BUDGET_EXHAUSTED = "budget_exhausted"
    ENV_ERROR = "env_error"


@dataclass(frozen=True)
class Trajectory:
    task_id: str
    steps: tuple[StepRecord, ...]
    completion_signal: int | None
    termination: Termination


@dataclass(frozen=True)
class NodeStatus:
    passed: bool = False
    matched_step: int | None = None
    score: Fraction = Fraction(0)
    explanation: str = ""


@dataclass(frozen=True)
class EvalState:
    statuses: dict[str, NodeStatus]
    steps_seen: int = 0

    def achieved(self) -> int:
        return sum(1 for status in self.statuses.values() if status.passed)


def new_eval_state(task: TaskSpec) -> EvalState:
    return EvalState(statuses={node.node_id: NodeStatus() for node in task.key_nodes})


def _signal_for(target: Target, step: StepRecord) -> str | None:
    if target is Target.URL:
        return step.post_url
    if target is Target.ELEMENT_PATH:
        return step.acted_selector
    return step.acted_value


def evaluate_step(
    state: EvalState,
    task: TaskSpec,
    step: StepRecord,
    judge: SemanticJudge | None = None,
) -> EvalState:
    """Test the step's signals against all not-yet-passed nodes."""
    statuses = dict(state.statuses)
    for node in task.key_nodes:
        current = statuses[node.node_id]
        if current.passed:
            continue
        signal = _signal_for(node.target, step)
        if signal is None:
            continue
        try:
            result = evaluate_reference(
                node.target, node.match_function, node.reference, signal,
                judge, node.pass_threshold,
            )
        except JudgeUnavailable as exc:
            raise JudgeUnavailable(f"node {node.node_id}: {exc}") from exc
        if result.passed:
            statuses[node.node_id] = NodeStatus(
                passed=True, matched_step=step.index, score=result.score,
                explanation=result.explanation,
            )
        elif result.score > current.score:
            statuses[node.node_id] = replace(current, score=result.score)
    return EvalState(statuses=statuses, steps_seen=state.steps_seen + 1)


# ---------------------------------------------------------------------------
# Metric formulas


def completion_rate(achieved: int, total: int) -> Fraction:
    return Fraction(achieved, total)


def task_success(achieved: int, total: int, tolerance: int = 0) -> bool:
    return total - achieved <= tolerance


def efficiency_score(length: int, achieved: int) -> Fraction | None:
    if achieved == 0:
        return None
    return Fraction(length, achieved)


def has_score(achieved: int, total: int, signaled: bool) -> Fraction:
    """Alignment between the completion signal and actual completion."""
    if achieved == total:
        return Fraction(1) if signaled else Fraction(19, 20)
    ratio = Fraction(achieved, total)
    return ratio if signaled else Fraction(4, 5) * ratio


# ---------------------------------------------------------------------------
# Task reports


@dataclass(frozen=True)
class TaskReport:
    task_id: str
    achieved: int
    total: int
    completion_rate: Fraction
    trajectory_length: int
    efficiency_score: Fraction | None
    has: Fraction
    termination: Termination
    completion_signal: int | None
    per_node: tuple[tuple[str, NodeStatus], ...]

    def success(self, tolerance: int = 0) -> bool:
        return task_success(self.achieved, self.total, tolerance)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": REPORT_VERSION,
            "task_id": self.task_id,
            "achieved": self.achieved,
            "total": self.total,
            "completion_rate": decimal4(self.completion_rate),
            "task_success": {str(k): self.success(k) for k in SUCCESS_TOLERANCES},
            "trajectory_length": self.trajectory_length,
            "efficiency_score": decimal4(self.efficiency_score),
            "human_alignment": decimal4(self.has),
            "termination": self.termination.value,
            "completion_signal": self.completion_signal,
            "nodes": [
                {
                    "node_id": node_id,
                    "passed": status.passed,
                    "matched_step": status.matched_step,
                    "score": decimal4(status.score),
                    "explanation": status.explanation,
                }
                for node_id, status in self.per_node
            ],
        }


def finalize(state: EvalState, trajectory: Trajectory, task: TaskSpec) -> TaskReport:
    achieved = state.achieved()
    total = len(task.key_nodes)
    length = len(trajectory.steps)
    signaled = trajectory.completion_signal is not None
    return TaskReport(
        task_id=task.task_id,
        achieved=achieved,
        total=total,
        completion_rate=completion_rate(achieved, total),
        trajectory_length=length,
        efficiency_score=efficiency_score(length, achieved),
        has=has_score(achieved, total, signaled),
        termination=trajectory.termination,
        completion_signal=trajectory.completion_signal,
        per_node=tuple((node.node_id, state.statuses[node.node_id]) for node in task.key_nodes),
    )


def evaluate_trajectory(
    task: TaskSpec, trajectory: Trajectory, judge: SemanticJudge | None = None
) -> TaskReport:
    """Offline evaluation: fold the streaming evaluator over all steps."""
    state = new_eval_state(task)
    for step in trajectory.steps:
        state = evaluate_step(state, task, step, judge)
    return finalize(state, trajectory, task)


# ---------------------------------------------------------------------------
# Aggregation over runs


@dataclass(frozen=True)
class MetricSummary:
    mean: Fraction | None
    std: float | None
    per_run: tuple[Fraction | None, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": decimal4(self.mean),
            "std": None if self.std is None else f"{self.std:.4f}",
            "per_run": [decimal4(v) for v in self.per_run],
        }


@dataclass(frozen=True)
class RunReport:
    run_count: int
    task_count: int
    completion_rate: MetricSummary
    task_sr: dict[int, MetricSummary]
    efficiency: MetricSummary
    efficiency_excluded: int
    has: MetricSummary
    micro: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": REPORT_VERSION,
            "run_count": self.run_count,
            "task_count": self.task_count,
            "completion_rate_mode": "micro" if self.micro else "macro",
            "completion_rate": self.completion_rate.to_dict(),
            "task_sr": {str(k): v.to_dict() for k, v in sorted(self.task_sr.items())},
            "efficiency_score": {
                **self.efficiency.to_dict(),
                "excluded_tasks": self.efficiency_excluded,
            },
            "human_alignment": self.has.to_dict(),
        }


def _summarize(per_run: list[Fraction | None]) -> MetricSummary:
    defined = [value for value in per_run if value is not None]
    mean = sum(defined, Fraction(0)) / len(defined) if defined else None
    std = statistics.stdev(float(v) for v in defined) if len(defined) >= 2 else None
    return MetricSummary(mean=mean, std=std, per_run=tuple(per_run))


def aggregate(runs: Sequence[Sequence[TaskReport]], *, micro: bool = False) -> RunReport:
    """Mean metrics per run plus across-run standard deviation."""
    runs = [list(run) for run in runs]
    if not runs or any(not run for run in runs):
        raise EmptyInput("aggregation needs at least one report per run")

    cr_runs: list[Fraction | None] = []
    sr_runs: dict[int, list[Fraction | None]] = {k: [] for k in SUCCESS_TOLERANCES}
    es_runs: list[Fraction | None] = []
    has_runs: list[Fraction | None] = []
    excluded = 0
    for run in runs:
        count = len(run)
        if micro:
            cr_runs.append(
                Fraction(sum(r.achieved for r in run), sum(r.total for r in run))
            )
        else:
            cr_runs.append(sum((r.completion_rate for r in run), Fraction(0)) / count)
        for k in SUCCESS_TOLERANCES:
            sr_runs[k].append(Fraction(sum(1 for r in run if r.success(k)), count))
        defined = [r.efficiency_score for r in run if r.efficiency_score is not None]
        excluded += count - len(defined)
        es_runs.append(sum(defined, Fraction(0)) / len(defined) if defined else None)
        has_runs.append(sum((r.has for r in run), Fraction(0)) / count)

    return RunReport(
        run_count=len(runs),
        task_count=sum(len(run) for run in runs),
        completion_rate=_summarize(cr_runs),
        task_sr={k: _summarize(v) for k, v in sr_runs.items()},
        efficiency=_summarize(es_runs),
        efficiency_excluded=excluded,
        has=_summarize(has_runs),
        micro=micro,
    )


def render_run_table(report: RunReport) -> str:
    """Human-readable summary table."""
    def fmt(value: Fraction | None, percent: bool = False) -> str:
        if value is None:
            return "-"
        if percent:
            return f"{float(value) * 100:.1f}%"
        return f"{float(value):.2f}"

    rows = [
        ("Completion Rate", fmt(report.completion_rate.mean, percent=True),
         report.completion_rate.std),
        ("Task SR(0)", fmt(report.task_sr[0].mean, percent=True), report.task_sr[0].std),
        ("Task SR(1)", fmt(report.task_sr[1].mean, percent=True), report.task_sr[1].std),
        (f"Efficiency Score (excl. {report.efficiency_excluded})",
         fmt(report.efficiency.mean), report.efficiency.std),
        ("Human Alignment", fmt(report.has.mean), report.has.std),
    ]
    width = max(len(name) for name, _, _ in rows)
    lines = [f"{'metric'.ljust(width)}  {'mean':>8}  {'std':>8}"]
    for name, mean, std in rows:
        std_text = "-" if std is None else f"{std:.4f}"
        lines.append(f"{name.ljust(width)}  {mean:>8}  {std_text:>8}")
    return "\n".join(lines) + "\n"
