"""Semantic judge backends.

Two implementations behind one interface: a table-driven deterministic stub
for tests and offline runs, and an HTTP client that posts the shipped
semantic-match prompt to a configurable endpoint. Backend failures raise
:class:`~keyweb.errors.JudgeUnavailable` — they are never reported as score 0,
so benchmark numbers cannot be silently deflated by an outage.
"""

from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from typing import Protocol

from .errors import JudgeUnavailable, SchemaError, UnparseableReply
from .jsonutil import fraction_from_number
from .matching import parse_judge_reply


@dataclass(frozen=True)
class JudgeVerdict:
    score: Fraction  # in [0, 1], quantized to two decimals
    explanation: str


class SemanticJudge(Protocol):
    def judge(self, rule: str, answer: str) -> JudgeVerdict: ...


def load_asset_text(name: str) -> str:
    return (resources.files("keyweb") / "assets" / name).read_text(encoding="utf-8")


def semantic_match_prompt() -> str:
    return load_asset_text("semantic_match_prompt.txt")


@dataclass(frozen=True)
class StubRule:
    rule_pattern: str
    answer_pattern: str
    score: Fraction


class StubJudge:
    """Deterministic judge: first matching table entry wins.

    Patterns are case-insensitive regexes applied with ``re.search``. When no
    entry matches, the verdict falls back to plain containment: 1 when the
    answer text occurs inside the rule text, 0 otherwise. The verdict is a
    pure function of (rule, answer).
    """

    def __init__(self, rules: list[StubRule] | None = None) -> None:
        if rules is None:
            rules = _parse_table(load_asset_text("stub_judge_table.json"))
        self.rules = list(rules)

    @classmethod
    def from_table_json(cls, data: bytes | str) -> "StubJudge":
        text = data.decode("utf-8") if isinstance(data, bytes) else data
        return cls(_parse_table(text))

    def judge(self, rule: str, answer: str) -> JudgeVerdict:
        for i, entry in enumerate(self.rules):
            if re.search(entry.rule_pattern, rule, re.IGNORECASE) and re.search(
                entry.answer_pattern, answer, re.IGNORECASE
            ):
                return JudgeVerdict(entry.score, f"stub table entry {i}")
        contained = _squash(answer) in _squash(rule) if answer.strip() else False
        if contained:
            return JudgeVerdict(Fraction(1), "answer text occurs in the rule")
        return JudgeVerdict(Fraction(0), "no stub rule matched")


def _squash(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().casefold()


def _parse_table(text: str) -> list[StubRule]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"stub table is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("rules"), list):
        raise SchemaError("stub table must be an object with a 'rules' list")
    rules = []
    for i, raw in enumerate(doc["rules"]):
        loc = f"rules[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError("entry must be an object", loc)
        try:
            score = fraction_from_number(raw["score"])
            rules.append(StubRule(str(raw["rule_pattern"]), str(raw["answer_pattern"]), score))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad entry: {exc}", loc) from exc
        if score < 0 or score > 1:
            raise SchemaError("score must be in [0, 1]", loc)
    return rules


class HttpJudge:
    """Judge client posting (rule, answer) with the shipped system prompt.

    The endpoint receives ``{"system", "rule", "answer"}`` as JSON and must
    reply with the raw judge text (first quoted decimal = score). Each call
    opens its own connection, so instances are safe to share across threads.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        token: str | None = None,
        timeout: float = 10.0,
        retries: int = 1,
    ) -> None:
        self.endpoint = endpoint
        self.token = token
        self.timeout = timeout
        self.retries = retries
        self._system = semantic_match_prompt()

    def judge(self, rule: str, answer: str) -> JudgeVerdict:
        payload = json.dumps(
            {"system": self._system, "rule": rule, "answer": answer}
        ).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            request = urllib.request.Request(self.endpoint, data=payload, headers=headers)
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    reply = response.read().decode("utf-8")
                return JudgeVerdict(parse_judge_reply(reply), reply.strip())
            except UnparseableReply as exc:
                raise JudgeUnavailable(f"judge reply unparseable: {exc}") from exc
            except (urllib.error.URLError, OSError, ValueError) as exc:
                last_error = exc
        raise JudgeUnavailable(f"judge endpoint {self.endpoint} failed: {last_error}")
