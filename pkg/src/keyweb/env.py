"""Deterministic environment stepping over a site graph.

State transitions are pure: ``step`` returns a new state and never mutates
its input, so failed actions provably leave page, history, and form state
untouched. A failed action is a recorded no-op, not an exception — agents
observe the failure note and may recover, as they would on the live web.

Tab discipline: ``goto``/``google_search`` navigate the active tab; click
edges flagged ``new_tab`` open (and focus) a fresh tab; ``go_back`` pops the
active tab's history and refuses at the bottom of the stack.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

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
    action_from_dict,
    action_to_dict,
)
from .errors import MalformedUrl, UnknownEntryUrl
from .observer import Observation, build_observation
from .sitegraph import SiteGraph
from .tasks import TaskSpec


@dataclass(frozen=True)
class TabState:
    history: tuple[str, ...]
    form_state: tuple[tuple[str, str], ...] = ()

    @property
    def url(self) -> str:
        return self.history[-1]

    def form_value(self, selector: str) -> str | None:
        for key, value in self.form_state:
            if key == selector:
                return value
        return None

    def with_url(self, url: str) -> "TabState":
        return TabState(history=self.history + (url,), form_state=self.form_state)

    def with_form_value(self, selector: str, value: str) -> "TabState":
        kept = tuple(item for item in self.form_state if item[0] != selector)
        return TabState(history=self.history, form_state=kept + ((selector, value),))

    def popped(self) -> "TabState":
        return TabState(history=self.history[:-1], form_state=self.form_state)


@dataclass(frozen=True)
class EnvState:
    tabs: tuple[TabState, ...]
    active_tab: int = 0
    step_count: int = 0

    @property
    def current_url(self) -> str:
        return self.tabs[self.active_tab].url


@dataclass(frozen=True)
class StepRecord:
    """What one step did: the action, its element signals, and the post URL."""

    index: int
    action: Action
    post_url: str
    action_ok: bool
    thought: str | None = None
    acted_selector: str | None = None
    acted_value: str | None = None
    error_note: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "thought": self.thought,
            "action": action_to_dict(self.action),
            "acted_selector": self.acted_selector,
            "acted_value": self.acted_value,
            "post_url": self.post_url,
            "action_ok": self.action_ok,
            "error_note": self.error_note,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "StepRecord":
        return cls(
            index=int(raw["index"]),
            action=action_from_dict(raw["action"]),
            post_url=str(raw["post_url"]),
            action_ok=bool(raw["action_ok"]),
            thought=raw.get("thought"),
            acted_selector=raw.get("acted_selector"),
            acted_value=raw.get("acted_value"),
            error_note=raw.get("error_note"),
        )


def _observe(graph: SiteGraph, url: str) -> Observation:
    page = graph.page(url)
    return build_observation(page.html, page.url, page.title)


def reset(graph: SiteGraph, task: TaskSpec) -> tuple[EnvState, Observation]:
    try:
        entry = graph.canonical(task.entry_url)
    except MalformedUrl as exc:
        raise UnknownEntryUrl(str(exc)) from exc
    if entry not in graph.pages:
        raise UnknownEntryUrl(f"{task.task_id}: entry url {entry!r} not in the site graph")
    state = EnvState(tabs=(TabState(history=(entry,)),))
    return state, _observe(graph, entry)


@dataclass
class _Outcome:
    tabs: tuple[TabState, ...]
    active: int
    ok: bool = True
    note: str | None = None

    def fail(self, note: str) -> None:
        self.ok = False
        self.note = note


def _with_tab(tabs: tuple[TabState, ...], index: int, tab: TabState) -> tuple[TabState, ...]:
    return tabs[:index] + (tab,) + tabs[index + 1:]


def step(
    state: EnvState,
    obs: Observation,
    action: Action,
    graph: SiteGraph,
    thought: str | None = None,
) -> tuple[EnvState, Observation, StepRecord]:
    """Apply one action; always consumes exactly one step."""
    out = _Outcome(tabs=state.tabs, active=state.active_tab)
    acted_selector: str | None = None
    acted_value: str | None = None

    def tab() -> TabState:
        return out.tabs[out.active]

    def navigate(url: str) -> None:
        out.tabs = _with_tab(out.tabs, out.active, tab().with_url(url))

    def resolve(element_id: int) -> str | None:
        node = obs.id_map.get(element_id)
        if node is None:
            out.fail(f"invalid element id {element_id}")
            return None
        return node.selector_path

    match action:
        case Goto(url=target):
            try:
                dest = graph.canonical(target)
            except MalformedUrl as exc:
                dest = None
                out.fail(f"malformed url: {exc}")
            if dest is not None:
                if dest in graph.pages:
                    navigate(dest)
                else:
                    out.fail(f"unknown url {dest!r}")
        case GoogleSearch(query=query):
            dest = graph.google_destination(query)
            if dest is None:
                out.fail("no results page configured")
            else:
                navigate(dest)
        case Click(element_id=element_id):
            selector = resolve(element_id)
            if selector is not None:
                acted_selector = selector
                edge = graph.click_destination(state.current_url, selector)
                if edge is None:
                    out.fail(f"no click transition from {selector!r}")
                elif edge.new_tab:
                    out.tabs = out.tabs + (TabState(history=(edge.url,)),)
                    out.active = len(out.tabs) - 1
                else:
                    navigate(edge.url)
        case Hover(element_id=element_id):
            selector = resolve(element_id)
            if selector is not None:
                acted_selector = selector
        case FillForm(element_id=element_id, value=value):
            selector = resolve(element_id)
            if selector is not None:
                acted_selector, acted_value = selector, value
                out.tabs = _with_tab(out.tabs, out.active, tab().with_form_value(selector, value))
        case FillSearch(element_id=element_id, value=value):
            selector = resolve(element_id)
            if selector is not None:
                acted_selector, acted_value = selector, value
                dest = graph.search_destination(state.current_url, selector, value)
                if dest is None:
                    out.fail(f"no search transition from {selector!r}")
                else:
                    out.tabs = _with_tab(
                        out.tabs, out.active, tab().with_form_value(selector, value)
                    )
                    navigate(dest)
        case Select(element_id=element_id, value=value):
            selector = resolve(element_id)
            if selector is not None:
                acted_selector, acted_value = selector, value
                out.tabs = _with_tab(out.tabs, out.active, tab().with_form_value(selector, value))
                has_effect, dest = graph.select_effect(state.current_url, selector, value)
                if has_effect and dest is not None:
                    navigate(dest)
        case SwitchTab(tab_index=tab_index):
            if 0 <= tab_index < len(out.tabs):
                out.active = tab_index
            else:
                out.fail(f"invalid tab index {tab_index}")
        case GoBack():
            if len(tab().history) > 1:
                out.tabs = _with_tab(out.tabs, out.active, tab().popped())
            else:
                out.fail("already at the bottom of the history stack")

    if out.ok:
        new_state = EnvState(tabs=out.tabs, active_tab=out.active,
                             step_count=state.step_count + 1)
    else:
        new_state = EnvState(tabs=state.tabs, active_tab=state.active_tab,
                             step_count=state.step_count + 1)

    record = StepRecord(
        index=state.step_count,
        action=action,
        post_url=new_state.current_url,
        action_ok=out.ok,
        thought=thought,
        acted_selector=acted_selector,
        acted_value=acted_value,
        error_note=out.note,
    )
    return new_state, _observe(graph, new_state.current_url), record
