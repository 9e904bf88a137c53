"""Match functions over evaluation targets, plus URL/selector normalization.

Three targets (URL, element path, element value) crossed with three match
functions (exact, include, semantic). Element paths only support exact
matching; the other two targets support all three. :func:`check_compatibility`
rejects forbidden pairs before any matching runs.

Scores are exact rationals: 0 or 1 for exact/include, two-decimal fractions
for semantic verdicts. A node passes when its score reaches the pass
threshold.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING
from urllib.parse import parse_qsl, quote, unquote, urlencode, urlsplit

from .errors import IncompatiblePair, MalformedUrl, UnparseableReply

if TYPE_CHECKING:  # pragma: no cover
    from .judge import SemanticJudge

logger = logging.getLogger(__name__)

DEFAULT_SEMANTIC_THRESHOLD = Fraction(9, 10)

_DEFAULT_PORTS = {"http": 80, "https": 443}


class Target(str, Enum):
    URL = "url"
    ELEMENT_PATH = "element_path"
    ELEMENT_VALUE = "element_value"


class MatchFunction(str, Enum):
    EXACT = "exact"
    INCLUDE = "include"
    SEMANTIC = "semantic"


class UrlComponent(str, Enum):
    FULL = "full"
    PATH = "path"
    QUERY_PARAM = "query_param"


#: (target, match function) pairs that are supported.
COMPATIBILITY = frozenset({
    (Target.URL, MatchFunction.EXACT),
    (Target.URL, MatchFunction.INCLUDE),
    (Target.URL, MatchFunction.SEMANTIC),
    (Target.ELEMENT_PATH, MatchFunction.EXACT),
    (Target.ELEMENT_VALUE, MatchFunction.EXACT),
    (Target.ELEMENT_VALUE, MatchFunction.INCLUDE),
    (Target.ELEMENT_VALUE, MatchFunction.SEMANTIC),
})


def check_compatibility(target: Target, fn: MatchFunction, node_id: str = "") -> None:
    if (target, fn) not in COMPATIBILITY:
        raise IncompatiblePair(target.value, fn.value, node_id)


# ---------------------------------------------------------------------------
# References


@dataclass(frozen=True)
class UrlReference:
    """Reference for url-target exact/include checks.

    ``value`` is the reference text for the scoped component: a full URL for
    ``FULL`` scope, a path (or URL whose path is used) for ``PATH``, and the
    expected parameter value for ``QUERY_PARAM``.
    """

    value: str
    component: UrlComponent = UrlComponent.FULL
    param_name: str | None = None
    url: str | None = None

    def __post_init__(self) -> None:
        if self.component is UrlComponent.QUERY_PARAM and not self.param_name:
            raise ValueError("query_param reference requires a param name")


@dataclass(frozen=True)
class PathReference:
    selector: str


@dataclass(frozen=True)
class ValueReference:
    expected: str


@dataclass(frozen=True)
class SemanticReference:
    instruction: str

    def __post_init__(self) -> None:
        if not self.instruction.strip():
            raise ValueError("semantic reference requires a judge instruction")


MatchReference = UrlReference | PathReference | ValueReference | SemanticReference


@dataclass(frozen=True)
class MatchResult:
    score: Fraction
    passed: bool
    explanation: str


def _result(score: Fraction, threshold: Fraction, explanation: str) -> MatchResult:
    return MatchResult(score=score, passed=score >= threshold, explanation=explanation)


def _binary(ok: bool, threshold: Fraction, explanation: str) -> MatchResult:
    return _result(Fraction(1 if ok else 0), threshold, explanation)


# ---------------------------------------------------------------------------
# URL normalization


@dataclass(frozen=True)
class NormalizedUrl:
    """Canonical comparable form of an absolute http(s) URL.

    Scheme and host are lowercased, default ports dropped, the path percent
    decoded with the trailing slash stripped (except at the root), the query
    treated as an order-insensitive multiset of decoded pairs, and the
    fragment discarded. Normalization is idempotent.
    """

    scheme: str
    host: str
    port: int | None
    path: str
    query: tuple[tuple[str, str], ...]
    original: str = field(compare=False, default="")

    @property
    def canonical(self) -> str:
        netloc = self.host if self.port is None else f"{self.host}:{self.port}"
        out = f"{self.scheme}://{netloc}{quote(self.path, safe='/~:@!$&()*+,;=-._')}"
        if self.query:
            out += "?" + urlencode(list(self.query))
        return out

    def query_values(self, name: str) -> list[str]:
        return [value for key, value in self.query if key == name]


def normalize_url(url: str) -> NormalizedUrl:
    """Normalize an absolute http(s) URL; raises :class:`MalformedUrl`."""
    if not isinstance(url, str) or not url.strip():
        raise MalformedUrl(f"not a URL: {url!r}")
    text = url.strip()
    try:
        parts = urlsplit(text)
        port = parts.port
    except ValueError as exc:
        raise MalformedUrl(f"{text!r}: {exc}") from exc
    scheme = parts.scheme.lower()
    if scheme not in _DEFAULT_PORTS:
        raise MalformedUrl(f"not an absolute http(s) URL: {text!r}")
    host = (parts.hostname or "").lower()
    if not host:
        raise MalformedUrl(f"missing host: {text!r}")
    if port == _DEFAULT_PORTS[scheme]:
        port = None
    path = unquote(parts.path) or "/"
    if len(path) > 1:
        path = path.rstrip("/") or "/"
    query = tuple(sorted(parse_qsl(parts.query, keep_blank_values=True)))
    return NormalizedUrl(scheme=scheme, host=host, port=port, path=path, query=query, original=url)


def _reference_path(value: str) -> str:
    if value.startswith("/"):
        path = unquote(value)
        if len(path) > 1:
            path = path.rstrip("/") or "/"
        return path
    return normalize_url(value).path


# ---------------------------------------------------------------------------
# Matchers


def match_url(
    ref: UrlReference | SemanticReference,
    observed: str,
    fn: MatchFunction,
    judge: "SemanticJudge | None" = None,
    threshold: Fraction | None = None,
) -> MatchResult:
    check_compatibility(Target.URL, fn)
    norm = normalize_url(observed)

    if fn is MatchFunction.SEMANTIC:
        if not isinstance(ref, SemanticReference):
            raise TypeError("semantic url match requires a semantic reference")
        if judge is None:
            raise TypeError("semantic match requires a judge")
        threshold = DEFAULT_SEMANTIC_THRESHOLD if threshold is None else threshold
        verdict = judge.judge(ref.instruction, norm.canonical)
        return _result(verdict.score, threshold, verdict.explanation)

    if not isinstance(ref, UrlReference):
        raise TypeError(f"{fn.value} url match requires a url reference")
    threshold = Fraction(1) if threshold is None else threshold

    if ref.component is UrlComponent.QUERY_PARAM:
        values = norm.query_values(ref.param_name or "")
        if fn is MatchFunction.EXACT:
            ok = ref.value in values
        else:
            ok = any(ref.value in value for value in values)
        return _binary(ok, threshold, f"param {ref.param_name}={values!r} vs {ref.value!r}")

    if ref.component is UrlComponent.PATH:
        ref_path = _reference_path(ref.value)
        if fn is MatchFunction.EXACT:
            ok = norm.path == ref_path
        else:
            ok = ref_path in norm.path
        return _binary(ok, threshold, f"path {norm.path!r} vs {ref_path!r}")

    if fn is MatchFunction.EXACT:
        ok = normalize_url(ref.value) == norm
    else:
        ok = ref.value in norm.canonical
    return _binary(ok, threshold, f"url {norm.canonical!r} vs {ref.value!r}")


_QUOTED_LITERAL_RE = re.compile(r"'([^']*)'")


def normalize_selector(selector: str) -> str:
    """Trim, collapse internal whitespace, unify attribute-literal quotes."""
    collapsed = re.sub(r"\s+", " ", selector).strip()
    return _QUOTED_LITERAL_RE.sub(
        lambda m: f'"{m.group(1)}"' if '"' not in m.group(1) else m.group(0),
        collapsed,
    )


def match_element_path(
    ref: str,
    observed: str,
    threshold: Fraction | None = None,
) -> MatchResult:
    threshold = Fraction(1) if threshold is None else threshold
    ref_norm = normalize_selector(ref)
    obs_norm = normalize_selector(observed)
    return _binary(ref_norm == obs_norm, threshold, f"selector {obs_norm!r} vs {ref_norm!r}")


def _collapse(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def match_element_value(
    ref: ValueReference | SemanticReference,
    observed: str,
    fn: MatchFunction,
    judge: "SemanticJudge | None" = None,
    threshold: Fraction | None = None,
) -> MatchResult:
    check_compatibility(Target.ELEMENT_VALUE, fn)

    if fn is MatchFunction.SEMANTIC:
        if not isinstance(ref, SemanticReference):
            raise TypeError("semantic value match requires a semantic reference")
        if judge is None:
            raise TypeError("semantic match requires a judge")
        threshold = DEFAULT_SEMANTIC_THRESHOLD if threshold is None else threshold
        verdict = judge.judge(ref.instruction, observed)
        return _result(verdict.score, threshold, verdict.explanation)

    if not isinstance(ref, ValueReference):
        raise TypeError(f"{fn.value} value match requires a value reference")
    threshold = Fraction(1) if threshold is None else threshold

    if fn is MatchFunction.EXACT:
        ok = _collapse(observed) == _collapse(ref.expected)
    else:
        ok = _collapse(ref.expected).lower() in _collapse(observed).lower()
    return _binary(ok, threshold, f"value {observed!r} vs {ref.expected!r}")


def evaluate_reference(
    target: Target,
    fn: MatchFunction,
    reference: MatchReference,
    observed: str,
    judge: "SemanticJudge | None" = None,
    threshold: Fraction | None = None,
) -> MatchResult:
    """Dispatch a (target, match function) check over an observed signal."""
    check_compatibility(target, fn)
    if target is Target.URL:
        return match_url(reference, observed, fn, judge, threshold)  # type: ignore[arg-type]
    if target is Target.ELEMENT_PATH:
        if not isinstance(reference, PathReference):
            raise TypeError("element_path match requires a path reference")
        return match_element_path(reference.selector, observed, threshold)
    return match_element_value(reference, observed, fn, judge, threshold)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Judge reply handling

_QUOTED_SCORE_RE = re.compile(r'"\s*(-?\d+(?:\.\d+)?)\s*"')


def parse_judge_reply(text: str) -> Fraction:
    """Extract the first quoted decimal from a judge reply.

    Values outside [0, 1] are clamped with a warning; replies with no quoted
    number raise :class:`UnparseableReply`. Scores are quantized to two
    decimal places.
    """
    match = _QUOTED_SCORE_RE.search(text)
    if match is None:
        raise UnparseableReply(f"no quoted score in reply: {text!r}")
    score = Fraction(match.group(1))
    if score < 0 or score > 1:
        logger.warning("judge score %s out of range, clamping", match.group(1))
        score = min(max(score, Fraction(0)), Fraction(1))
    return Fraction(round(score * 100), 100)


def render_judge_reply(score: Fraction, explanation: str = "") -> str:
    """Inverse of :func:`parse_judge_reply` for two-decimal scores."""
    scaled = round(Fraction(score) * 100)
    text = f'"{scaled // 100}.{scaled % 100:02d}"'
    return f"{text}, {explanation}" if explanation else text
