"""Action space of the environment.

Nine variants: page navigation (goto, google_search, go_back), element
interaction (click, hover, fill_form, fill_search, select), and tab control
(switch_tab). ``fill_form`` only writes a value; ``fill_search`` writes the
value and submits.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any

from .errors import SchemaError


class ActionType(str, Enum):
    GOTO = "goto"
    GOOGLE_SEARCH = "google_search"
    CLICK = "click"
    HOVER = "hover"
    FILL_FORM = "fill_form"
    FILL_SEARCH = "fill_search"
    SELECT = "select"
    SWITCH_TAB = "switch_tab"
    GO_BACK = "go_back"


#: Variants that act on an element from the current observation.
ELEMENT_ACTION_TYPES = frozenset({
    ActionType.CLICK,
    ActionType.HOVER,
    ActionType.FILL_FORM,
    ActionType.FILL_SEARCH,
    ActionType.SELECT,
})

#: Variants that write a value into an element.
VALUE_ACTION_TYPES = frozenset({
    ActionType.FILL_FORM,
    ActionType.FILL_SEARCH,
    ActionType.SELECT,
})


@dataclass(frozen=True)
class Goto:
    url: str


@dataclass(frozen=True)
class GoogleSearch:
    query: str


@dataclass(frozen=True)
class Click:
    element_id: int


@dataclass(frozen=True)
class Hover:
    element_id: int


@dataclass(frozen=True)
class FillForm:
    element_id: int
    value: str


@dataclass(frozen=True)
class FillSearch:
    element_id: int
    value: str


@dataclass(frozen=True)
class Select:
    element_id: int
    value: str


@dataclass(frozen=True)
class SwitchTab:
    tab_index: int


@dataclass(frozen=True)
class GoBack:
    pass


Action = Goto | GoogleSearch | Click | Hover | FillForm | FillSearch | Select | SwitchTab | GoBack

_TYPE_BY_CLASS: dict[type, ActionType] = {
    Goto: ActionType.GOTO,
    GoogleSearch: ActionType.GOOGLE_SEARCH,
    Click: ActionType.CLICK,
    Hover: ActionType.HOVER,
    FillForm: ActionType.FILL_FORM,
    FillSearch: ActionType.FILL_SEARCH,
    Select: ActionType.SELECT,
    SwitchTab: ActionType.SWITCH_TAB,
    GoBack: ActionType.GO_BACK,
}


def action_type(action: Action) -> ActionType:
    return _TYPE_BY_CLASS[type(action)]


def targets_element(action: Action) -> bool:
    return action_type(action) in ELEMENT_ACTION_TYPES


def action_value(action: Action) -> str | None:
    """The value an action writes into an element, if any."""
    if isinstance(action, (FillForm, FillSearch, Select)):
        return action.value
    return None


def action_to_dict(action: Action) -> dict[str, Any]:
    kind = action_type(action)
    out: dict[str, Any] = {"type": kind.value}
    match action:
        case Goto(url):
            out["url"] = url
        case GoogleSearch(query):
            out["query"] = query
        case Click(element_id) | Hover(element_id):
            out["element_id"] = element_id
        case FillForm(element_id, value) | FillSearch(element_id, value) | Select(element_id, value):
            out["element_id"] = element_id
            out["value"] = value
        case SwitchTab(tab_index):
            out["tab_index"] = tab_index
        case GoBack():
            pass
    return out


def action_from_dict(raw: dict[str, Any], location: str = "action") -> Action:
    if not isinstance(raw, dict):
        raise SchemaError("action must be an object", location)
    try:
        kind = ActionType(raw.get("type"))
    except ValueError:
        raise SchemaError(f"unknown action type {raw.get('type')!r}", location) from None
    try:
        match kind:
            case ActionType.GOTO:
                return Goto(url=str(raw["url"]))
            case ActionType.GOOGLE_SEARCH:
                return GoogleSearch(query=str(raw["query"]))
            case ActionType.CLICK:
                return Click(element_id=int(raw["element_id"]))
            case ActionType.HOVER:
                return Hover(element_id=int(raw["element_id"]))
            case ActionType.FILL_FORM:
                return FillForm(element_id=int(raw["element_id"]), value=str(raw["value"]))
            case ActionType.FILL_SEARCH:
                return FillSearch(element_id=int(raw["element_id"]), value=str(raw["value"]))
            case ActionType.SELECT:
                return Select(element_id=int(raw["element_id"]), value=str(raw["value"]))
            case ActionType.SWITCH_TAB:
                return SwitchTab(tab_index=int(raw["tab_index"]))
            case ActionType.GO_BACK:
                return GoBack()
    except KeyError as exc:
        raise SchemaError(f"missing field {exc.args[0]!r}", location) from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(str(exc), location) from None
    raise SchemaError(f"unhandled action type {kind}", location)  # pragma: no cover
