"""Episode runner: policies, memory, reward signals, and the step budget.

A policy consumes the episode memory plus the current observation and emits
a thought, an action, and optionally a finish declaration. Episodes end when
the policy declares finished, when a reward module configured as terminator
reports finished, or when the step budget — ceil(multiplier x annotated task
length), multiplier 1.5 by default — runs out. Every ``step`` call counts
against the budget, including failed actions.

Trajectory interchange format: JSON lines, one step record per line, then a
trailer record carrying ``termination`` and ``completion_signal``.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Protocol, Sequence

from .actions import (
    Action,
    Click,
    FillForm,
    FillSearch,
    GoBack,
    GoogleSearch,
    Goto,
    Hover,
    Select,
    SwitchTab,
    ActionType,
)
from .env import StepRecord, reset, step
from .errors import PolicyError, SchemaError
from .judge import SemanticJudge
from .matching import normalize_selector
from .observer import Observation
from .scoring import (
    TaskReport,
    Termination,
    Trajectory,
    evaluate_step,
    finalize,
    new_eval_state,
)
from .sitegraph import SiteGraph
from .tasks import AnnotatedStep, TaskSpec

logger = logging.getLogger(__name__)

DEFAULT_BUDGET_MULTIPLIER = Fraction(3, 2)

REWARD_SCORES = frozenset({1, 3, 7, 9, 10})


class RewardStatus(str, Enum):
    DOING = "doing"
    FINISHED = "finished"
    LOOP = "loop"


@dataclass(frozen=True)
class RewardSignal:
    status: RewardStatus
    score: int
    reason: str = ""
    description: str = ""

    def __post_init__(self) -> None:
        if self.score not in REWARD_SCORES:
            raise ValueError(f"reward score must be one of {sorted(REWARD_SCORES)}")


@dataclass(frozen=True)
class MemoryEntry:
    thought: str | None
    action: Action | None
    reward: RewardSignal | None = None


@dataclass
class Memory:
    """Instruction plus the append-only (thought, action, reward) history."""

    instruction: str
    entries: list[MemoryEntry] = field(default_factory=list)

    def append(self, thought: str | None, action: Action | None,
               reward: RewardSignal | None = None) -> None:
        self.entries.append(MemoryEntry(thought=thought, action=action, reward=reward))

    def __len__(self) -> int:
        return len(self.entries)


def detect_loop(memory: Memory) -> bool:
    """True when the last two actions are identical."""
    if len(memory.entries) < 2:
        return False
    last, previous = memory.entries[-1].action, memory.entries[-2].action
    return last is not None and last == previous


@dataclass(frozen=True)
class Decision:
    thought: str | None
    action: Action | None
    declare_finished: bool = False


class Policy(Protocol):
    def decide(self, memory: Memory, observation: Observation) -> Decision: ...


@dataclass(frozen=True)
class GoldenReference:
    """Task-progress metadata handed to reward modules for guided scoring."""

    instruction: str
    post_action_urls: tuple[str, ...]
    action_types: tuple[str, ...]
    selector_paths: tuple[str | None, ...]
    key_node_functions: tuple[dict[str, str], ...]


def golden_reference_metadata(task: TaskSpec) -> GoldenReference:
    return GoldenReference(
        instruction=task.instruction,
        post_action_urls=tuple(s.post_url for s in task.reference_workflow),
        action_types=tuple(s.action_type.value for s in task.reference_workflow),
        selector_paths=tuple(s.selector_path for s in task.reference_workflow),
        key_node_functions=tuple(
            {"node_id": n.node_id, "target": n.target.value, "match": n.match_function.value}
            for n in task.key_nodes
        ),
    )


class RewardModule(Protocol):
    def assess(
        self,
        memory: Memory,
        observation: Observation,
        golden_reference: GoldenReference | None = None,
    ) -> RewardSignal: ...


class StaticRewardModule:
    """Always returns the same status; handy stub for tests and demos."""

    def __init__(self, status: RewardStatus = RewardStatus.DOING, score: int = 7) -> None:
        self.status = status
        self.score = score

    def assess(
        self,
        memory: Memory,
        observation: Observation,
        golden_reference: GoldenReference | None = None,
    ) -> RewardSignal:
        if self.status is not RewardStatus.LOOP and detect_loop(memory):
            return RewardSignal(RewardStatus.LOOP, 1, reason="last two actions identical")
        return RewardSignal(self.status, self.score)


# ---------------------------------------------------------------------------
# Policies


class ScriptedPolicy:
    """Replays a recorded workflow, resolving selectors per observation.

    A recorded selector that no longer resolves produces a failed-action
    marker (element id 0 is never assigned), so the episode records a failed
    step and moves on. Declares finished together with the last step.
    """

    def __init__(self, workflow: Sequence[AnnotatedStep]) -> None:
        if not workflow:
            raise ValueError("scripted policy needs a non-empty workflow")
        self.workflow = list(workflow)

    def _element_id(self, observation: Observation, selector: str) -> int | None:
        wanted = normalize_selector(selector)
        for element_id, node in observation.id_map.items():
            if normalize_selector(node.selector_path) == wanted:
                return element_id
        return None

    def decide(self, memory: Memory, observation: Observation) -> Decision:
        position = len(memory.entries)
        if position >= len(self.workflow):
            return Decision(thought="workflow exhausted", action=None, declare_finished=True)
        recorded = self.workflow[position]
        last = position == len(self.workflow) - 1
        thought = f"replaying recorded step {recorded.index}"

        element_id: int | None = None
        if recorded.targets_element():
            element_id = self._element_id(observation, recorded.selector_path or "")
            if element_id is None:
                thought = f"recorded selector not found at step {recorded.index}"
                element_id = 0  # never assigned: the step is recorded as failed

        value = recorded.element_value or recorded.action_value or ""
        match recorded.action_type:
            case ActionType.GOTO:
                action: Action = Goto(recorded.action_value or recorded.post_url)
            case ActionType.GOOGLE_SEARCH:
                action = GoogleSearch(recorded.action_value or "")
            case ActionType.CLICK:
                action = Click(element_id)
            case ActionType.HOVER:
                action = Hover(element_id)
            case ActionType.FILL_FORM:
                action = FillForm(element_id, value)
            case ActionType.FILL_SEARCH:
                action = FillSearch(element_id, value)
            case ActionType.SELECT:
                action = Select(element_id, value)
            case ActionType.SWITCH_TAB:
                action = SwitchTab(int(recorded.action_value or 0))
            case ActionType.GO_BACK:
                action = GoBack()
        return Decision(thought=thought, action=action, declare_finished=last)


def scripted_policy(workflow: Sequence[AnnotatedStep]) -> ScriptedPolicy:
    return ScriptedPolicy(workflow)


class RandomPolicy:
    """Seeded random actions over the current observation; never finishes."""

    def __init__(self, seed: int = 0) -> None:
        self.rng = random.Random(seed)

    def decide(self, memory: Memory, observation: Observation) -> Decision:
        ids = sorted(observation.id_map)
        choices: list[Action] = [GoBack()]
        for element_id in ids:
            choices.append(Click(element_id))
            choices.append(Hover(element_id))
            choices.append(FillForm(element_id, "probe"))
        action = self.rng.choice(choices)
        return Decision(thought="random exploration", action=action)


# ---------------------------------------------------------------------------
# Episode loop


def compute_budget(reference_length: int,
                   multiplier: Fraction | float = DEFAULT_BUDGET_MULTIPLIER) -> int:
    return max(1, math.ceil(Fraction(multiplier) * reference_length))


def run_episode(
    graph: SiteGraph,
    task: TaskSpec,
    policy: Policy,
    *,
    judge: SemanticJudge | None = None,
    reward: RewardModule | None = None,
    budget_multiplier: Fraction | float = DEFAULT_BUDGET_MULTIPLIER,
    reward_terminates: bool = False,
) -> tuple[Trajectory, TaskReport]:
    """Run one episode and evaluate it as it streams.

    Judge failures propagate — they are evaluation errors, not policy errors.
    A policy that raises or returns a malformed decision ends the episode
    with an ``env_error`` termination and a partial report.
    """
    budget = compute_budget(task.reference_length, budget_multiplier)
    state, observation = reset(graph, task)
    memory = Memory(instruction=task.instruction)
    eval_state = new_eval_state(task)
    golden = golden_reference_metadata(task)
    steps: list[StepRecord] = []
    completion_signal: int | None = None
    termination: Termination | None = None

    while len(steps) < budget:
        try:
            decision = policy.decide(memory, observation)
            if decision.action is None and not decision.declare_finished:
                raise PolicyError("decision carries neither an action nor a finish")
        except Exception as exc:
            logger.warning("policy failed at step %d: %s", len(steps), exc)
            termination = Termination.ENV_ERROR
            break

        if decision.action is not None:
            try:
                state, observation, record = step(
                    state, observation, decision.action, graph, thought=decision.thought
                )
            except Exception as exc:
                logger.warning("malformed action at step %d: %s", len(steps), exc)
                termination = Termination.ENV_ERROR
                break
            steps.append(record)
            eval_state = evaluate_step(eval_state, task, record, judge)
            reward_signal = None
            if reward is not None:
                reward_signal = reward.assess(memory, observation, golden)
            memory.append(decision.thought, decision.action, reward_signal)
            if (
                reward_terminates
                and reward_signal is not None
                and reward_signal.status is RewardStatus.FINISHED
            ):
                completion_signal = record.index
                termination = Termination.SIGNALED_FINISH
                break

        if decision.declare_finished:
            completion_signal = steps[-1].index if steps else None
            termination = Termination.SIGNALED_FINISH
            break

    if termination is None:
        termination = Termination.BUDGET_EXHAUSTED

    trajectory = Trajectory(
        task_id=task.task_id,
        steps=tuple(steps),
        completion_signal=completion_signal,
        termination=termination,
    )
    return trajectory, finalize(eval_state, trajectory, task)


# ---------------------------------------------------------------------------
# Trajectory interchange files


def trajectory_to_jsonl(trajectory: Trajectory) -> str:
    from .jsonutil import canonical_dumps

    lines = [canonical_dumps(record.to_dict()) for record in trajectory.steps]
    lines.append(canonical_dumps({
        "task_id": trajectory.task_id,
        "termination": trajectory.termination.value,
        "completion_signal": trajectory.completion_signal,
    }))
    return "\n".join(lines) + "\n"


def trajectory_from_jsonl(text: str) -> Trajectory:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise SchemaError("empty trajectory file")
    try:
        records = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise SchemaError(f"bad trajectory line: {exc}") from exc
    trailer = records[-1]
    if "termination" not in trailer:
        raise SchemaError("trajectory file has no trailer record")
    try:
        steps = tuple(StepRecord.from_dict(raw) for raw in records[:-1])
        termination = Termination(trailer["termination"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad trajectory record: {exc}") from exc
    signal = trailer.get("completion_signal")
    return Trajectory(
        task_id=str(trailer.get("task_id", "")),
        steps=steps,
        completion_signal=int(signal) if signal is not None else None,
        termination=termination,
    )
