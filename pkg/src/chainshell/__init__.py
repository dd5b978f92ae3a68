"""chainshell: a rule-based expert system shell.

Typed production rules over a small DSL, forward/backward/hybrid chaining
with interactive questioning, WHY/HOW explanations, and an HTTP consultation
service with a versioned knowledge-base store.
"""

from importlib import resources

from .dsl import ParseError, ParseFailure, parse_kb, serialize_kb
from .engine import (
    UNKNOWN,
    Fact,
    InferenceSession,
    Mode,
    Outcome,
    Question,
    WorkingMemory,
    backward_step,
    eval_condition,
    forward_chain,
    forward_step,
    hybrid_chain_step,
    match_rule,
    new_session,
    resume,
    start_session,
    step_bound,
)
from .explain import ProofNode, WhyChain, how, render_explanation, why
from .interchange import DecodeError, decode_interchange, encode_interchange
from .kb import (
    Assignment,
    Condition,
    Diagnostic,
    KnowledgeBase,
    MetaRule,
    Operator,
    Rule,
    RuleBase,
    Severity,
    Truth,
    Value,
    ValueKind,
    VariableDecl,
    dependency_graph,
    select_rulebase,
    structurally_equal,
    validate_kb,
)

__version__ = "0.1.0"


def demo_kb_text() -> str:
    """The bundled illustrative chest-symptom knowledge base (non-clinical)."""
    return resources.files("chainshell").joinpath("data/chest.kb").read_text("utf-8")


def demo_kb() -> KnowledgeBase:
    return parse_kb(demo_kb_text())


__all__ = [
    "Assignment",
    "Condition",
    "DecodeError",
    "Diagnostic",
    "Fact",
    "InferenceSession",
    "KnowledgeBase",
    "MetaRule",
    "Mode",
    "Operator",
    "Outcome",
    "ParseError",
    "ParseFailure",
    "ProofNode",
    "Question",
    "Rule",
    "RuleBase",
    "Severity",
    "Truth",
    "UNKNOWN",
    "Value",
    "ValueKind",
    "VariableDecl",
    "WhyChain",
    "WorkingMemory",
    "backward_step",
    "decode_interchange",
    "demo_kb",
    "demo_kb_text",
    "dependency_graph",
    "encode_interchange",
    "eval_condition",
    "forward_chain",
    "forward_step",
    "how",
    "hybrid_chain_step",
    "match_rule",
    "new_session",
    "parse_kb",
    "render_explanation",
    "resume",
    "select_rulebase",
    "serialize_kb",
    "start_session",
    "step_bound",
    "structurally_equal",
    "validate_kb",
    "why",
]
