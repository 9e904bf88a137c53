import json
import socket
import threading

import pytest
from hypothesis import given, strategies as st

from keyweb.harness import run_episode, scripted_policy
from keyweb.jsonutil import canonical_dumps
from keyweb.matching import normalize_selector
from keyweb.service import (
    ServiceConfig,
    SessionEnvelope,
    SessionManager,
    parse_envelope,
    start_server,
)
from keyweb.errors import ProtocolViolation


@pytest.fixture()
def config(graph, tasks, judge):
    return ServiceConfig(graph=graph, tasks={t.task_id: t for t in tasks}, judge=judge)


def _envelope(session_id, seq, kind, payload):
    return canonical_dumps(
        {"session_id": session_id, "seq": seq, "kind": kind, "payload": payload}
    )


def _element_id(observation_payload, selector):
    wanted = normalize_selector(selector)
    for element in observation_payload["elements"]:
        if normalize_selector(element["selector"]) == wanted:
            return element["id"]
    raise AssertionError(f"selector {selector!r} not present")


def _action_payload(step, element_id):
    kind = step.action_type.value
    value = step.element_value or step.action_value or ""
    if kind == "goto":
        return {"type": "goto", "url": step.action_value or step.post_url}
    if kind == "google_search":
        return {"type": "google_search", "query": step.action_value or ""}
    if kind == "go_back":
        return {"type": "go_back"}
    if kind == "switch_tab":
        return {"type": "switch_tab", "tab_index": int(step.action_value or 0)}
    if kind in ("fill_form", "fill_search", "select"):
        return {"type": kind, "element_id": element_id, "value": value}
    return {"type": kind, "element_id": element_id}


def drive_scripted_session(send, task, session_id="s"):
    """Replay a task's workflow through the protocol; returns the report payload."""
    replies = send(_envelope(session_id, 1, "create_session", {"task_id": task.task_id}))
    assert replies[0]["kind"] == "observation", replies[0]
    observation = replies[0]["payload"]
    seq = 2
    for step in task.reference_workflow:
        element_id = None
        if step.targets_element():
            element_id = _element_id(observation, step.selector_path)
        replies = send(_envelope(session_id, seq, "action",
                                 {"action": _action_payload(step, element_id)}))
        assert replies[0]["kind"] == "observation"
        assert replies[1]["kind"] == "eval_update"
        observation = replies[0]["payload"]
        seq += 1
    replies = send(_envelope(session_id, seq, "finish", {}))
    assert replies[-1]["kind"] == "report"
    return replies[-1]["payload"]


def manager_sender(manager):
    def send(line):
        return [json.loads(reply.to_line()) for reply in manager.handle_line(line)]

    return send


class TestEnvelopes:
    @given(
        session_id=st.from_regex(r"[a-z0-9-]{1,12}", fullmatch=True),
        seq=st.integers(min_value=1, max_value=10_000),
        kind=st.sampled_from(sorted(["create_session", "observation", "action", "finish",
                                     "eval_update", "report", "error"])),
        payload=st.dictionaries(
            st.from_regex(r"[a-z_]{1,8}", fullmatch=True),
            st.one_of(st.integers(), st.text(max_size=12), st.booleans(), st.none()),
            max_size=4,
        ),
    )
    def test_round_trip(self, session_id, seq, kind, payload):
        envelope = SessionEnvelope(session_id=session_id, seq=seq, kind=kind,
                                   payload=payload)
        assert parse_envelope(envelope.to_line()) == envelope

    @pytest.mark.parametrize("line", [
        "not json",
        '{"session_id": "s", "seq": 1, "kind": "action"}',
        '{"session_id": "s", "seq": 0, "kind": "action", "payload": {}}',
        '{"session_id": "s", "seq": 1, "kind": "nope", "payload": {}}',
        '{"session_id": "s", "seq": 1, "kind": "action", "payload": [], "x": 1}',
    ])
    def test_rejects_malformed(self, line):
        with pytest.raises(ProtocolViolation):
            parse_envelope(line)


class TestSessionFlow:
    def test_scripted_session_matches_native_run(self, config, graph, tasks, judge):
        for task in tasks:
            manager = SessionManager(config)
            payload = drive_scripted_session(manager_sender(manager), task)
            _, native = run_episode(graph, task,
                                    scripted_policy(task.reference_workflow), judge=judge)
            assert canonical_dumps(payload) == canonical_dumps(native.to_dict())
            assert payload["task_success"]["0"] is True

    def test_action_before_create(self, config):
        manager = SessionManager(config)
        replies = manager.handle_line(
            _envelope("ghost", 1, "action", {"action": {"type": "go_back"}})
        )
        assert replies[0].kind == "error"
        assert replies[0].payload["code"] == "protocol_violation"

    def test_unknown_task(self, config):
        manager = SessionManager(config)
        replies = manager.handle_line(
            _envelope("s", 1, "create_session", {"task_id": "missing"})
        )
        assert replies[0].payload["code"] == "unknown_task"

    def test_out_of_order_seq_closes_session(self, config, tasks):
        manager = SessionManager(config)
        manager.handle_line(_envelope("s", 1, "create_session",
                                      {"task_id": tasks[0].task_id}))
        replies = manager.handle_line(_envelope("s", 5, "finish", {}))
        assert replies[0].payload["code"] == "protocol_violation"
        assert "s" not in manager.sessions

    def test_duplicate_create_rejected(self, config, tasks):
        manager = SessionManager(config)
        manager.handle_line(_envelope("s", 1, "create_session",
                                      {"task_id": tasks[0].task_id}))
        replies = manager.handle_line(_envelope("s", 1, "create_session",
                                                {"task_id": tasks[0].task_id}))
        assert replies[0].payload["code"] == "protocol_violation"

    def test_message_after_report_rejected(self, config, tasks):
        manager = SessionManager(config)
        send = manager_sender(manager)
        drive_scripted_session(send, tasks[1], session_id="s")
        replies = send(_envelope("s", 99, "finish", {}))
        assert replies[0]["payload"]["code"] == "protocol_violation"

    def test_budget_exhaustion_emits_report_last(self, config, tasks_by_id):
        task = tasks_by_id["biz-parking-wifi"]  # reference_length 2 -> budget 3
        manager = SessionManager(config)
        send = manager_sender(manager)
        send(_envelope("s", 1, "create_session", {"task_id": task.task_id}))
        for seq in (2, 3):
            replies = send(_envelope("s", seq, "action", {"action": {"type": "go_back"}}))
            assert [r["kind"] for r in replies] == ["observation", "eval_update"]
        replies = send(_envelope("s", 4, "action", {"action": {"type": "go_back"}}))
        assert [r["kind"] for r in replies] == ["observation", "eval_update", "report"]
        assert replies[-1]["payload"]["termination"] == "budget_exhausted"

    def test_server_seq_strictly_increases(self, config, tasks):
        manager = SessionManager(config)
        seen = []

        def send(line):
            replies = manager.handle_line(line)
            seen.extend(reply.seq for reply in replies)
            return [json.loads(reply.to_line()) for reply in replies]

        drive_scripted_session(send, tasks[0])
        assert seen == sorted(seen)
        assert len(set(seen)) == len(seen)

    def test_bad_action_payload(self, config, tasks):
        manager = SessionManager(config)
        send = manager_sender(manager)
        send(_envelope("s", 1, "create_session", {"task_id": tasks[0].task_id}))
        replies = send(_envelope("s", 2, "action", {"action": {"type": "warp"}}))
        assert replies[0]["payload"]["code"] == "bad_request"


class _SocketClient:
    def __init__(self, host, port):
        self.sock = socket.create_connection((host, port), timeout=10)
        self.file = self.sock.makefile("rw", encoding="utf-8")

    def send(self, line):
        self.file.write(line + "\n")
        self.file.flush()
        kind = json.loads(line)["kind"]
        replies = [json.loads(self.file.readline())]
        if replies[0]["kind"] == "error" or kind in ("create_session", "finish"):
            return replies
        replies.append(json.loads(self.file.readline()))  # eval_update
        if replies[-1]["payload"].get("remaining_budget") == 0:
            replies.append(json.loads(self.file.readline()))  # budget report
        return replies

    def close(self):
        self.file.close()
        self.sock.close()


class TestSockets:
    def test_concurrent_sessions_equal_serial(self, config, tasks_by_id):
        task = tasks_by_id["games-dota2-dlc"]
        server, _ = start_server(config)
        host, port = server.listen_address
        try:
            serial_manager = SessionManager(config)
            baseline = drive_scripted_session(manager_sender(serial_manager), task)

            results = {}

            def run_client(name):
                client = _SocketClient(host, port)
                try:
                    results[name] = drive_scripted_session(client.send, task,
                                                           session_id=name)
                finally:
                    client.close()

            threads = [threading.Thread(target=run_client, args=(f"c{i}",))
                       for i in range(2)]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join(timeout=30)
            assert set(results) == {"c0", "c1"}
            for payload in results.values():
                assert canonical_dumps(payload) == canonical_dumps(baseline)
        finally:
            server.shutdown()

    def test_two_sessions_multiplexed_on_one_connection(self, config, tasks_by_id):
        server, _ = start_server(config)
        host, port = server.listen_address
        try:
            client = _SocketClient(host, port)
            try:
                a = tasks_by_id["biz-parking-wifi"]
                b = tasks_by_id["shop-store-washington"]
                client.send(_envelope("a", 1, "create_session", {"task_id": a.task_id}))
                client.send(_envelope("b", 1, "create_session", {"task_id": b.task_id}))
                reply_a = client.send(_envelope("a", 2, "finish", {}))
                reply_b = client.send(_envelope("b", 2, "finish", {}))
                assert reply_a[-1]["payload"]["task_id"] == a.task_id
                assert reply_b[-1]["payload"]["task_id"] == b.task_id
            finally:
                client.close()
        finally:
            server.shutdown()
