"""Command-line entry points.

Subcommands: ``evaluate`` scores trajectory files offline, ``run`` executes an
episode with a scripted/random/external policy, ``validate`` replays tasks for
dataset health, ``suggest-eval`` proposes evaluation functions for a step, and
``serve`` exposes the session protocol.

Exit codes: 0 on success, 1 on evaluation/validation failures, 2 on usage
errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from .errors import KeywebError
from .harness import (
    DEFAULT_BUDGET_MULTIPLIER,
    RandomPolicy,
    run_episode,
    scripted_policy,
    trajectory_from_jsonl,
    trajectory_to_jsonl,
)
from .judge import HttpJudge, SemanticJudge, StubJudge
from .jsonutil import canonical_dumps
from .maintenance import check_validity, has_failures, render_validity_table
from .scoring import aggregate, evaluate_trajectory, render_run_table
from .service import ServiceConfig, EvalServer, EvalUnixServer, serve_stdio
from .sitegraph import load_site_graph_file
from .tasks import parse_annotated_step, parse_task_file, suggest_evaluation_function

JUDGE_TOKEN_ENV = "KEYWEB_JUDGE_TOKEN"


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise KeywebError("config file must hold a JSON object")
    return raw


def _judge_from_config(config: dict) -> SemanticJudge:
    judge_cfg = config.get("judge", {})
    mode = judge_cfg.get("mode", "stub")
    if mode == "stub":
        table = judge_cfg.get("table_file")
        if table:
            return StubJudge.from_table_json(Path(table).read_bytes())
        return StubJudge()
    if mode == "http":
        return HttpJudge(
            judge_cfg["endpoint"],
            token=os.environ.get(JUDGE_TOKEN_ENV),
            timeout=float(judge_cfg.get("timeout", 10.0)),
            retries=int(judge_cfg.get("retries", 1)),
        )
    raise KeywebError(f"unknown judge mode {mode!r}")


def _budget_multiplier(config: dict, override: float | None) -> Fraction:
    if override is not None:
        return Fraction(str(override))
    raw = config.get("budget_multiplier")
    return Fraction(str(raw)) if raw is not None else DEFAULT_BUDGET_MULTIPLIER


def _load_tasks(path: str) -> dict:
    tasks = parse_task_file(Path(path).read_bytes())
    return {task.task_id: task for task in tasks}


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    judge = _judge_from_config(config)
    tasks = _load_tasks(args.tasks)
    micro = args.micro or config.get("completion_rate_mode") == "micro"
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    reports = []
    for trajectory_path in args.trajectories:
        path = Path(trajectory_path)
        trajectory = trajectory_from_jsonl(path.read_text(encoding="utf-8"))
        task = tasks.get(trajectory.task_id)
        if task is None:
            raise KeywebError(f"{path}: unknown task {trajectory.task_id!r}")
        report = evaluate_trajectory(task, trajectory, judge)
        reports.append(report)
        report_path = out_dir / f"{path.stem}.report.json"
        report_path.write_text(canonical_dumps(report.to_dict()) + "\n", encoding="utf-8")
        print(f"{report.task_id}: {report.achieved}/{report.total} key nodes -> {report_path}")

    summary = aggregate([reports], micro=micro)
    (out_dir / "summary.json").write_text(
        canonical_dumps(summary.to_dict()) + "\n", encoding="utf-8"
    )
    print()
    print(render_run_table(summary), end="")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    judge = _judge_from_config(config)
    tasks = _load_tasks(args.tasks)
    graph = load_site_graph_file(args.graph)
    task = tasks.get(args.task)
    if task is None:
        raise KeywebError(f"unknown task {args.task!r}")
    multiplier = _budget_multiplier(config, args.budget_multiplier)

    if args.policy == "external":
        service = ServiceConfig(
            graph=graph, tasks={task.task_id: task}, judge=judge,
            budget_multiplier=multiplier,
        )
        serve_stdio(service, sys.stdin, sys.stdout)
        return 0

    policy = (
        scripted_policy(task.reference_workflow)
        if args.policy == "scripted"
        else RandomPolicy(seed=args.seed)
    )
    trajectory, report = run_episode(
        graph, task, policy, judge=judge, budget_multiplier=multiplier
    )
    out_path = Path(args.out or f"{task.task_id}.trajectory.jsonl")
    out_path.write_text(trajectory_to_jsonl(trajectory), encoding="utf-8")
    print(f"trajectory -> {out_path}")
    if args.report:
        Path(args.report).write_text(
            canonical_dumps(report.to_dict()) + "\n", encoding="utf-8"
        )
        print(f"report -> {args.report}")
    print(canonical_dumps(report.to_dict()))
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    judge = None if args.no_judge else _judge_from_config(config)
    tasks = list(_load_tasks(args.tasks).values())
    graph = load_site_graph_file(args.graph)
    reports = check_validity(
        tasks, graph, judge, no_judge=args.no_judge, coordinate_radius=args.radius
    )
    print(render_validity_table(reports), end="")
    if args.out:
        payload = [report.to_dict() for report in reports]
        Path(args.out).write_text(canonical_dumps(payload) + "\n", encoding="utf-8")
    return 1 if has_failures(reports) else 0


def _cmd_suggest_eval(args: argparse.Namespace) -> int:
    text = args.step
    if text.startswith("@"):
        text = Path(text[1:]).read_text(encoding="utf-8")
    raw = json.loads(text)
    if not isinstance(raw, dict) or "step" not in raw:
        raise KeywebError('expected {"step": {...}, "url_changed": bool, "necessary": bool}')
    step = parse_annotated_step(raw["step"], strict=False)
    suggestion = suggest_evaluation_function(
        step, bool(raw.get("url_changed", False)), bool(raw.get("necessary", True))
    )
    if suggestion is None:
        print(canonical_dumps({"suggestion": None}))
    else:
        print(canonical_dumps({
            "suggestion": {
                "candidates": [
                    {"target": target.value, "match": fn.value}
                    for target, fn in suggestion.candidates
                ]
            }
        }))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    service = ServiceConfig(
        graph=load_site_graph_file(args.graph),
        tasks=_load_tasks(args.tasks),
        judge=_judge_from_config(config),
        budget_multiplier=_budget_multiplier(config, None),
    )
    listen = args.listen
    if listen == "stdio":
        serve_stdio(service, sys.stdin, sys.stdout)
        return 0
    if listen.startswith("unix:"):
        server: EvalServer | EvalUnixServer = EvalUnixServer(listen[5:], service)
        print(f"listening on {listen}", flush=True)
    else:
        host, _, port = listen.rpartition(":")
        server = EvalServer((host or "127.0.0.1", int(port)), service)
        bound_host, bound_port = server.listen_address
        print(f"listening on {bound_host}:{bound_port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keyweb",
        description="Key-node evaluation for web agents in a deterministic mock web.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score trajectory files against their tasks")
    p.add_argument("trajectories", nargs="+", help="trajectory .jsonl files")
    p.add_argument("--tasks", required=True, help="task file (JSON)")
    p.add_argument("--out", default="reports", help="output directory")
    p.add_argument("--config", default=None)
    p.add_argument("--micro", action="store_true",
                   help="pool key nodes across tasks instead of averaging per task")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="run one episode in the mock web")
    p.add_argument("--tasks", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--task", required=True, help="task id")
    p.add_argument("--policy", choices=["scripted", "random", "external"], default="scripted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="trajectory output path")
    p.add_argument("--report", default=None, help="also write the report JSON here")
    p.add_argument("--budget-multiplier", type=float, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="replay workflows and re-check key nodes")
    p.add_argument("--tasks", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--no-judge", action="store_true",
                   help="skip semantic nodes instead of judging them")
    p.add_argument("--radius", type=float, default=50.0,
                   help="coordinate fallback radius in px")
    p.add_argument("--out", default=None, help="write full JSON report here")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("suggest-eval", help="suggest evaluation functions for a step")
    p.add_argument("--step", required=True,
                   help='JSON {"step": {...}, "url_changed": bool, "necessary": bool}, '
                        "or @file")
    p.set_defaults(func=_cmd_suggest_eval)

    p = sub.add_parser("serve", help="serve the session protocol")
    p.add_argument("--tasks", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--listen", default="127.0.0.1:0",
                   help="host:port, unix:PATH, or stdio")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeywebError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
