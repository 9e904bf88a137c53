"""Session protocol for external agents, over local sockets or stdio.

Wire format: UTF-8, one JSON object per line, fields exactly
``{"session_id", "seq", "kind", "payload"}``. Each peer numbers the messages
it sends within a session 1, 2, 3, ...; an out-of-order client seq is a
protocol violation and closes the session.

Session flow: ``create_session`` -> ``observation``; each ``action`` ->
``observation`` + ``eval_update``; ``finish`` or budget exhaustion ->
``report`` (exactly one, always last). The step budget is enforced here, so
external policies cannot overrun it; ``eval_update.remaining_budget`` tells
clients deterministically when the budget report follows. Sessions are
isolated; one connection may multiplex several.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, TextIO

from .actions import action_from_dict
from .env import EnvState, StepRecord, reset, step
from .errors import JudgeUnavailable, ProtocolViolation, SchemaError
from .harness import DEFAULT_BUDGET_MULTIPLIER, compute_budget
from .judge import SemanticJudge, StubJudge
from .jsonutil import canonical_dumps, decimal4
from .observer import Observation
from .scoring import EvalState, Termination, Trajectory, evaluate_step, finalize, new_eval_state
from .sitegraph import SiteGraph
from .tasks import TaskSpec

PROTOCOL_KINDS = frozenset({
    "create_session", "observation", "action", "finish",
    "eval_update", "report", "error",
})

CLIENT_KINDS = frozenset({"create_session", "action", "finish"})


@dataclass(frozen=True)
class SessionEnvelope:
    session_id: str
    seq: int
    kind: str
    payload: dict[str, Any]

    def to_line(self) -> str:
        return canonical_dumps({
            "session_id": self.session_id,
            "seq": self.seq,
            "kind": self.kind,
            "payload": self.payload,
        })


def parse_envelope(line: str) -> SessionEnvelope:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or set(raw) != {"session_id", "seq", "kind", "payload"}:
        raise ProtocolViolation(
            "envelope must have exactly session_id, seq, kind, payload"
        )
    if raw["kind"] not in PROTOCOL_KINDS:
        raise ProtocolViolation(f"unknown kind {raw['kind']!r}")
    if not isinstance(raw["seq"], int) or isinstance(raw["seq"], bool) or raw["seq"] < 1:
        raise ProtocolViolation("seq must be a positive integer")
    if not isinstance(raw["payload"], dict):
        raise ProtocolViolation("payload must be an object")
    return SessionEnvelope(
        session_id=str(raw["session_id"]),
        seq=raw["seq"],
        kind=str(raw["kind"]),
        payload=raw["payload"],
    )


@dataclass
class ServiceConfig:
    graph: SiteGraph
    tasks: dict[str, TaskSpec]
    judge: SemanticJudge = field(default_factory=StubJudge)
    budget_multiplier: Fraction | float = DEFAULT_BUDGET_MULTIPLIER


@dataclass
class _Session:
    task: TaskSpec
    state: EnvState
    observation: Observation
    eval_state: EvalState
    budget: int
    steps: list[StepRecord] = field(default_factory=list)
    next_client_seq: int = 2
    server_seq: int = 0
    done: bool = False


def _eval_payload(eval_state: EvalState, remaining_budget: int) -> dict[str, Any]:
    return {
        "steps_seen": eval_state.steps_seen,
        "remaining_budget": remaining_budget,
        "nodes": [
            {
                "node_id": node_id,
                "passed": status.passed,
                "matched_step": status.matched_step,
                "score": decimal4(status.score),
            }
            for node_id, status in sorted(eval_state.statuses.items())
        ],
    }


class SessionManager:
    """Protocol state machine; transport-agnostic and connection-scoped."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        self.sessions: dict[str, _Session] = {}

    def _reply(self, session_id: str, kind: str, payload: dict[str, Any]) -> SessionEnvelope:
        session = self.sessions.get(session_id)
        if session is not None:
            session.server_seq += 1
            seq = session.server_seq
        else:
            seq = 1
        return SessionEnvelope(session_id=session_id, seq=seq, kind=kind, payload=payload)

    def _error(self, session_id: str, code: str, message: str) -> SessionEnvelope:
        reply = self._reply(session_id, "error", {"code": code, "message": message})
        self.sessions.pop(session_id, None)
        return reply

    def _report(self, session_id: str, session: _Session,
                termination: Termination, completion_signal: int | None) -> SessionEnvelope:
        trajectory = Trajectory(
            task_id=session.task.task_id,
            steps=tuple(session.steps),
            completion_signal=completion_signal,
            termination=termination,
        )
        report = finalize(session.eval_state, trajectory, session.task)
        session.done = True
        return self._reply(session_id, "report", report.to_dict())

    def handle_line(self, line: str) -> list[SessionEnvelope]:
        try:
            envelope = parse_envelope(line)
        except ProtocolViolation as exc:
            return [SessionEnvelope("", 1, "error",
                                    {"code": "protocol_violation", "message": str(exc)})]
        sid = envelope.session_id
        if envelope.kind not in CLIENT_KINDS:
            return [self._error(sid, "protocol_violation",
                                f"clients may not send {envelope.kind!r}")]

        if envelope.kind == "create_session":
            if sid in self.sessions:
                return [self._error(sid, "protocol_violation", "session already exists")]
            if envelope.seq != 1:
                return [self._error(sid, "protocol_violation",
                                    "create_session must carry seq 1")]
            task_id = envelope.payload.get("task_id")
            task = self.config.tasks.get(str(task_id))
            if task is None:
                return [self._error(sid, "unknown_task", f"unknown task {task_id!r}")]
            state, observation = reset(self.config.graph, task)
            self.sessions[sid] = _Session(
                task=task,
                state=state,
                observation=observation,
                eval_state=new_eval_state(task),
                budget=compute_budget(task.reference_length, self.config.budget_multiplier),
            )
            return [self._reply(sid, "observation", observation.to_dict())]

        session = self.sessions.get(sid)
        if session is None:
            return [self._error(sid, "protocol_violation", "no such session")]
        if envelope.seq != session.next_client_seq:
            return [self._error(
                sid, "protocol_violation",
                f"expected seq {session.next_client_seq}, got {envelope.seq}",
            )]
        session.next_client_seq += 1
        if session.done:
            return [self._error(sid, "protocol_violation", "session already reported")]

        if envelope.kind == "finish":
            signal = session.steps[-1].index if session.steps else None
            reply = self._report(sid, session, Termination.SIGNALED_FINISH, signal)
            self.sessions.pop(sid, None)
            return [reply]

        # action
        try:
            action = action_from_dict(envelope.payload.get("action"))
        except SchemaError as exc:
            return [self._error(sid, "bad_request", str(exc))]
        thought = envelope.payload.get("thought")
        session.state, session.observation, record = step(
            session.state, session.observation, action, self.config.graph,
            thought=str(thought) if thought is not None else None,
        )
        session.steps.append(record)
        try:
            session.eval_state = evaluate_step(
                session.eval_state, session.task, record, self.config.judge
            )
        except JudgeUnavailable as exc:
            return [self._error(sid, "judge_unavailable", str(exc))]
        remaining = max(0, session.budget - len(session.steps))
        replies = [
            self._reply(sid, "observation", session.observation.to_dict()),
            self._reply(sid, "eval_update", _eval_payload(session.eval_state, remaining)),
        ]
        if len(session.steps) >= session.budget:
            replies.append(self._report(sid, session, Termination.BUDGET_EXHAUSTED, None))
            self.sessions.pop(sid, None)
        return replies


# ---------------------------------------------------------------------------
# Transports


def serve_stream(config: ServiceConfig, lines: Iterable[str],
                 write: Callable[[str], None]) -> None:
    """Drive one connection: read request lines, write reply lines."""
    manager = SessionManager(config)
    for line in lines:
        if not line.strip():
            continue
        for reply in manager.handle_line(line):
            write(reply.to_line() + "\n")


def serve_stdio(config: ServiceConfig, stdin: TextIO, stdout: TextIO) -> None:
    def write(text: str) -> None:
        stdout.write(text)
        stdout.flush()

    serve_stream(config, stdin, write)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:  # pragma: no cover - exercised via sockets in tests
        manager = SessionManager(self.server.config)  # type: ignore[attr-defined]
        for raw in self.rfile:
            line = raw.decode("utf-8")
            if not line.strip():
                continue
            for reply in manager.handle_line(line):
                self.wfile.write((reply.to_line() + "\n").encode("utf-8"))
            self.wfile.flush()


class EvalServer(socketserver.ThreadingTCPServer):
    """One session namespace per connection; connections run in parallel."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], config: ServiceConfig) -> None:
        super().__init__(address, _Handler)
        self.config = config

    @property
    def listen_address(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return str(host), int(port)


class EvalUnixServer(socketserver.ThreadingUnixStreamServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, path: str, config: ServiceConfig) -> None:
        super().__init__(path, _Handler)
        self.config = config


def start_server(config: ServiceConfig, host: str = "127.0.0.1",
                 port: int = 0) -> tuple[EvalServer, threading.Thread]:
    """Start a TCP server on a background thread; returns (server, thread)."""
    server = EvalServer((host, port), config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


def open_client(host: str, port: int, timeout: float = 10.0) -> socket.socket:
    return socket.create_connection((host, port), timeout=timeout)
