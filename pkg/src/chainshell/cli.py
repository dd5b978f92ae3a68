"""Command-line front end.

Subcommands: validate, run, consult, fmt, serve. Exit codes are part of the
contract: 0 success, 1 validation or inference failure, 2 usage error.
Fact and answer files hold one `variable = value` line each; `#` starts a
comment and, in answer files, `variable = unknown` records a refusal.
"""

from __future__ import annotations

import argparse
import os
import re
import socket
import sys
from pathlib import Path

from . import engine
from .dsl import ParseFailure, parse_kb, parse_value_text, serialize_kb
from .explain import how, render_explanation, why
from .kb import (
    Diagnostic,
    KnowledgeBase,
    Value,
    has_errors,
    validate_kb,
    value_text,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

_FACT_LINE = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_]*)\s*=\s*(.+?)\s*$")


def _read_kb_file(path: str) -> KnowledgeBase:
    text = Path(path).read_text("utf-8")
    return parse_kb(text)


def _print_parse_errors(exc: ParseFailure, stream) -> None:
    for e in exc.errors:
        print(f"{e.span.line}:{e.span.column} {e.message}", file=stream)


def _format_diagnostic(d: Diagnostic) -> str:
    rb = d.location.rulebase if d.location and d.location.rulebase else "-"
    rule = d.location.rule if d.location and d.location.rule else "-"
    return f"{d.severity.value} {d.code} {rb}:{rule} {d.message}"


def _load_fact_file(path: str, allow_unknown: bool) -> dict[str, Value | None]:
    """Parse `variable = value` lines; None marks an explicit `unknown`."""
    out: dict[str, Value | None] = {}
    for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _FACT_LINE.match(line)
        if m is None:
            raise _LineError(path, lineno, f"expected 'variable = value': {line!r}")
        name, literal = m.group(1), m.group(2)
        if allow_unknown and literal == "unknown":
            out[name] = None
            continue
        try:
            out[name] = parse_value_text(literal)
        except ValueError as exc:
            raise _LineError(path, lineno, str(exc)) from None
    return out


class _LineError(Exception):
    def __init__(self, path: str, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")


def _trace_line(event: engine.TraceEvent) -> str:
    if isinstance(event, engine.RuleFired):
        bindings = ", ".join(f"{v} = {value_text(val)}" for v, val in event.bindings)
        return f"fired {event.rule_id} ({bindings})"
    if isinstance(event, engine.RuleFailed):
        return f"failed {event.rule_id} at antecedent {event.antecedent_index + 1} ({event.reason.value})"
    if isinstance(event, engine.QuestionAsked):
        return f"question {event.variable}"
    if isinstance(event, engine.AnswerReceived):
        if event.value is None:
            return f"answer {event.variable} = unknown"
        return f"answer {event.variable} = {value_text(event.value)}"
    if isinstance(event, engine.ConflictSkipped):
        return f"conflict {event.rule_id} skipped {event.variable}"
    if isinstance(event, engine.SubgoalPushed):
        origin = event.requested_by or "goal"
        return f"subgoal {event.variable} for {origin}"
    assert isinstance(event, engine.SubgoalResolved)
    return f"subgoal {event.variable} {event.outcome.value}"


def _print_derived_and_recommendations(session: engine.InferenceSession) -> None:
    outcome = session.outcome
    assert outcome is not None
    derived = [
        f for f in outcome.memory.facts.values()
        if f.provenance.kind is engine.ProvenanceKind.DERIVED
    ]
    for fact in sorted(derived, key=lambda f: f.variable):
        print(f"{fact.variable} = {value_text(fact.value)}")
    for rec in outcome.recommendations:
        print(f"recommend: {rec}")


# -- subcommands -------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        kb = _read_kb_file(args.kb)
    except FileNotFoundError:
        print(f"no such file: {args.kb}", file=sys.stderr)
        return EXIT_USAGE
    except ParseFailure as exc:
        _print_parse_errors(exc, sys.stdout)
        return EXIT_FAILURE
    diagnostics = validate_kb(kb)
    for d in diagnostics:
        print(_format_diagnostic(d))
    return EXIT_FAILURE if has_errors(diagnostics) else EXIT_OK


def cmd_fmt(args: argparse.Namespace) -> int:
    try:
        original = Path(args.kb).read_text("utf-8")
    except FileNotFoundError:
        print(f"no such file: {args.kb}", file=sys.stderr)
        return EXIT_USAGE
    try:
        kb = parse_kb(original)
    except ParseFailure as exc:
        _print_parse_errors(exc, sys.stderr)
        return EXIT_FAILURE
    canonical = serialize_kb(kb)
    if args.check:
        return EXIT_OK if canonical == original else EXIT_FAILURE
    sys.stdout.write(canonical)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    if args.mode == "forward" and args.answers:
        print("--answers applies to hybrid runs only", file=sys.stderr)
        return EXIT_USAGE
    try:
        kb = _read_kb_file(args.kb)
    except FileNotFoundError:
        print(f"no such file: {args.kb}", file=sys.stderr)
        return EXIT_USAGE
    except ParseFailure as exc:
        _print_parse_errors(exc, sys.stdout)
        return EXIT_FAILURE
    diagnostics = validate_kb(kb)
    if has_errors(diagnostics):
        for d in diagnostics:
            print(_format_diagnostic(d))
        return EXIT_FAILURE
    try:
        facts = _load_fact_file(args.facts, allow_unknown=False) if args.facts else {}
        answers = _load_fact_file(args.answers, allow_unknown=True) if args.answers else {}
    except FileNotFoundError as exc:
        print(f"no such file: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except _LineError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    initial = {name: value for name, value in facts.items() if value is not None}
    mode = engine.Mode(args.mode)
    try:
        session = engine.start_session(kb, mode, initial)
        while session.status is engine.StatusKind.NEEDS_ANSWER:
            assert session.question is not None
            supplied = answers.get(session.question.variable)
            answer: engine.Answer = supplied if supplied is not None else engine.UNKNOWN
            session = engine.resume(session, answer)
    except engine.EngineError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE
    _print_derived_and_recommendations(session)
    if args.trace:
        for event in session.trace:
            print(_trace_line(event))
    return EXIT_OK


def cmd_consult(args: argparse.Namespace) -> int:
    if args.mode == "backward" and not args.goal:
        print("--goal is required for backward consultations", file=sys.stderr)
        return EXIT_USAGE
    try:
        kb = _read_kb_file(args.kb)
    except FileNotFoundError:
        print(f"no such file: {args.kb}", file=sys.stderr)
        return EXIT_USAGE
    except ParseFailure as exc:
        _print_parse_errors(exc, sys.stdout)
        return EXIT_FAILURE
    diagnostics = validate_kb(kb)
    if has_errors(diagnostics):
        for d in diagnostics:
            print(_format_diagnostic(d))
        return EXIT_FAILURE
    mode = engine.Mode(args.mode)
    goal = args.goal if mode is engine.Mode.BACKWARD else None
    try:
        session = engine.start_session(kb, mode, {}, goal)
    except engine.EngineError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE

    try:
        while session.status is engine.StatusKind.NEEDS_ANSWER:
            question = session.question
            assert question is not None
            if question.allowed_values is not None:
                options = "/".join(value_text(v) for v in question.allowed_values)
            else:
                options = "value"
            print(f"? {question.prompt} [{options}/unknown/why]")
            while True:
                line = input("> ").strip()
                if not line:
                    continue
                if line == "why":
                    print(render_explanation(why(session), session))
                    print(f"? {question.prompt} [{options}/unknown/why]")
                    continue
                if line == "unknown":
                    session = engine.resume(session, engine.UNKNOWN)
                    break
                try:
                    value = parse_value_text(line)
                except ValueError as exc:
                    print(f"invalid answer: {exc}")
                    continue
                try:
                    session = engine.resume(session, value)
                except engine.InvalidAnswer as exc:
                    print(f"invalid answer: {exc}")
                    continue
                break
    except EOFError:
        print("aborted")
        return EXIT_FAILURE

    outcome = session.outcome
    assert outcome is not None
    if session.mode is engine.Mode.BACKWARD:
        assert session.goal is not None
        if outcome.proven:
            assert outcome.value is not None
            print(f"{session.goal} = {value_text(outcome.value)}")
        else:
            print(f"{session.goal} not proven")
        for rec in outcome.recommendations:
            print(f"recommend: {rec}")
    else:
        _print_derived_and_recommendations(session)
    how_goal = session.goal or args.goal
    if how_goal and session.memory.get(how_goal) is not None:
        print(render_explanation(how(session, how_goal)))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    host = args.host
    port = args.port
    data_dir = args.data_dir
    static_dir = args.static_dir or os.environ.get("CHAINSHELL_STATIC_DIR")
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as exc:
        print(f"cannot bind {host}:{port}: {exc}", file=sys.stderr)
        sock.close()
        return EXIT_FAILURE
    bound = sock.getsockname()
    print(f"chainshell service on http://{bound[0]}:{bound[1]}", flush=True)
    print(f"data directory: {Path(data_dir).resolve()}", flush=True)
    if static_dir:
        print(f"static files: {Path(static_dir).resolve()}", flush=True)
    app = create_app(
        data_dir,
        admin_password=os.environ.get("CHAINSHELL_ADMIN_PASSWORD"),
        static_dir=static_dir,
    )
    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)
    # uvicorn re-raises a captured SIGINT after graceful shutdown; swallow it
    # so an interrupt during idle exits 0 as the CLI contract requires
    import signal as signal_module

    for sig in (signal_module.SIGINT, signal_module.SIGTERM):
        signal_module.signal(sig, lambda signum, frame: None)
    server.run(sockets=[sock])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainshell", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a knowledge base for consistency")
    p.add_argument("kb", help="knowledge base file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="batch inference over a facts file")
    p.add_argument("kb", help="knowledge base file")
    p.add_argument("--mode", choices=["forward", "hybrid"], default="forward")
    p.add_argument("--facts", help="initial facts file (variable = value lines)")
    p.add_argument("--answers", help="answers file for hybrid questions")
    p.add_argument("--trace", action="store_true", help="append the full trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("consult", help="interactive terminal consultation")
    p.add_argument("kb", help="knowledge base file")
    p.add_argument("--mode", choices=["backward", "hybrid"], default="backward")
    p.add_argument("--goal", help="goal variable (required for backward)")
    p.set_defaults(func=cmd_consult)

    p = sub.add_parser("fmt", help="print the canonical form of a knowledge base")
    p.add_argument("kb", help="knowledge base file")
    p.add_argument("--check", action="store_true", help="exit 1 if not already canonical")
    p.set_defaults(func=cmd_fmt)

    p = sub.add_parser("serve", help="run the consultation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=int(os.environ.get("CHAINSHELL_PORT", "8080")))
    p.add_argument(
        "--data-dir", default=os.environ.get("CHAINSHELL_DATA_DIR", "chainshell-data")
    )
    p.add_argument("--static-dir", help="directory of built web UI assets")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
