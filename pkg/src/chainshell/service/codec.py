"""JSON views of engine state for the HTTP API and the case archive."""

from __future__ import annotations

import json
from typing import Any

from ..engine import (
    AnswerReceived,
    ConflictSkipped,
    InferenceSession,
    Outcome,
    QuestionAsked,
    RuleFailed,
    RuleFired,
    SubgoalPushed,
    SubgoalResolved,
    TraceEvent,
)
from ..interchange import decode_value, encode_value
from ..kb import Diagnostic, Value


def encode_diagnostic(d: Diagnostic) -> dict[str, Any]:
    loc: dict[str, Any] | None = None
    if d.location is not None:
        loc = {"rulebase": d.location.rulebase, "rule": d.location.rule}
        if d.location.span is not None:
            loc["line"] = d.location.span.line
            loc["column"] = d.location.span.column
            loc["length"] = d.location.span.length
    return {"severity": d.severity.value, "code": d.code, "message": d.message, "location": loc}


def encode_outcome(outcome: Outcome) -> dict[str, Any]:
    facts = [
        {
            "variable": f.variable,
            "value": encode_value(f.value),
            "provenance": {"kind": f.provenance.kind.value, "rule_id": f.provenance.rule_id},
        }
        for f in sorted(outcome.memory.facts.values(), key=lambda f: f.variable)
    ]
    return {
        "proven": outcome.proven,
        "value": encode_value(outcome.value) if outcome.value is not None else None,
        "facts": facts,
        "recommendations": list(outcome.recommendations),
    }


def encode_trace_event(event: TraceEvent) -> dict[str, Any]:
    if isinstance(event, RuleFired):
        return {
            "seq": event.seq,
            "type": "rule_fired",
            "rule_id": event.rule_id,
            "bindings": [[v, encode_value(val)] for v, val in event.bindings],
        }
    if isinstance(event, RuleFailed):
        return {
            "seq": event.seq,
            "type": "rule_failed",
            "rule_id": event.rule_id,
            "antecedent_index": event.antecedent_index,
            "reason": event.reason.value,
        }
    if isinstance(event, QuestionAsked):
        return {"seq": event.seq, "type": "question_asked", "variable": event.variable}
    if isinstance(event, AnswerReceived):
        return {
            "seq": event.seq,
            "type": "answer_received",
            "variable": event.variable,
            "value": encode_value(event.value) if event.value is not None else None,
        }
    if isinstance(event, ConflictSkipped):
        return {
            "seq": event.seq,
            "type": "conflict_skipped",
            "rule_id": event.rule_id,
            "variable": event.variable,
        }
    if isinstance(event, SubgoalPushed):
        return {
            "seq": event.seq,
            "type": "subgoal_pushed",
            "variable": event.variable,
            "requested_by": event.requested_by,
        }
    assert isinstance(event, SubgoalResolved)
    return {
        "seq": event.seq,
        "type": "subgoal_resolved",
        "variable": event.variable,
        "outcome": event.outcome.value,
    }


def encode_question(session: InferenceSession) -> dict[str, Any] | None:
    q = session.question
    if q is None:
        return None
    return {
        "variable": q.variable,
        "prompt": q.prompt,
        "allowed_values": (
            [encode_value(v) for v in q.allowed_values] if q.allowed_values is not None else None
        ),
    }


def decode_answer_value(doc: Any) -> Value:
    return decode_value(doc, "value")


def canonical_bytes(doc: Any) -> bytes:
    """Stable byte encoding used for replay-integrity comparisons."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )
