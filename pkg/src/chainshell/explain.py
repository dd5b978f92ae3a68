"""Explanations: WHY a question is being asked, HOW a fact was derived.

Both views are reconstructed from immutable session state (trace, memory,
rule stack), never from live engine internals, so they stay available after
a session completes and across process restarts.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import (
    Fact,
    InferenceSession,
    InvalidState,
    Mode,
    ProvenanceKind,
    StatusKind,
)
from .kb import Rule, condition_text, value_text


class NoFactError(Exception):
    """The requested variable has no established fact in this session."""


@dataclass(frozen=True)
class ProofNode:
    """Justification tree: a fact plus how it came to be.

    Leaves carry given or answered facts; inner nodes carry derived facts
    with one child per antecedent of the firing rule, in antecedent order.
    """

    fact: Fact
    children: tuple["ProofNode", ...] = ()

    @property
    def rule_id(self) -> str | None:
        return self.fact.provenance.rule_id

    @property
    def is_leaf(self) -> bool:
        return self.fact.provenance.kind is not ProvenanceKind.DERIVED


@dataclass(frozen=True)
class WhyEntry:
    rule_id: str
    antecedent_index: int
    establishes: str | None  # None for a hybrid outer attempt


@dataclass(frozen=True)
class WhyChain:
    """Readout of the rule stack at asking time, innermost rule first."""

    question: str
    entries: tuple[WhyEntry, ...]
    goal: str | None
    mode: Mode


def why(session: InferenceSession) -> WhyChain:
    """Explain the pending question: which stacked rules need the answer."""
    if session.status is not StatusKind.NEEDS_ANSWER:
        raise InvalidState("why applies only to a session waiting for an answer")
    question = session.question
    assert question is not None
    entries = tuple(
        WhyEntry(rf.rule_id, rf.antecedent_index, rf.goal_variable)
        for rf in reversed(session.rule_frames)
    )
    return WhyChain(question.variable, entries, session.goal, session.mode)


def how(session: InferenceSession, variable: str) -> ProofNode:
    """Build the proof tree for an established fact of a finished session."""
    if session.status is not StatusKind.DONE:
        raise InvalidState("how applies only to a finished session")
    rb = session.kb.rulebase(session.active_rulebase)
    rules = {r.id: r for r in rb.rules}

    def build(name: str, pending: frozenset[str]) -> ProofNode:
        fact = session.memory.get(name)
        if fact is None:
            raise NoFactError(f"no fact was established for '{name}'")
        if fact.provenance.kind is not ProvenanceKind.DERIVED:
            return ProofNode(fact)
        rule_id = fact.provenance.rule_id
        assert rule_id is not None
        rule = rules.get(rule_id)
        if rule is None or name in pending:  # pragma: no cover - trace invariant
            raise NoFactError(f"trace does not justify '{name}'")
        nested = pending | {name}
        children = tuple(build(c.variable, nested) for c in rule.antecedents)
        return ProofNode(fact, children)

    return build(variable, frozenset())


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_LEAF_TAGS = {ProvenanceKind.GIVEN: "given", ProvenanceKind.ANSWERED: "answered"}


def _proof_lines(node: ProofNode, depth: int, out: list[str]) -> None:
    prov = node.fact.provenance
    if prov.kind is ProvenanceKind.DERIVED:
        tag = f"rule {prov.rule_id}"
    else:
        tag = _LEAF_TAGS[prov.kind]
    out.append("  " * depth + f"{node.fact.variable} = {value_text(node.fact.value)}  [{tag}]")
    for child in node.children:
        _proof_lines(child, depth + 1, out)


def _antecedent_text(rule: Rule, index: int) -> str:
    return condition_text(rule.antecedents[index])


def _why_lines(chain: WhyChain, rules: dict[str, Rule]) -> list[str]:
    if chain.mode is Mode.HYBRID:
        tail = "to advance hybrid chaining"
    else:
        tail = f"to prove the goal {chain.goal}"
    if not chain.entries:
        return [f"asking {chain.question} {tail}"]
    lines = [f"asking {chain.question}"]
    for entry in chain.entries:
        rule = rules[entry.rule_id]
        cond = _antecedent_text(rule, entry.antecedent_index)
        if entry.establishes is None:
            lines.append(
                f"  because rule {entry.rule_id} needs antecedent "
                f"{entry.antecedent_index + 1} ({cond}) to fire"
            )
        else:
            lines.append(
                f"  because rule {entry.rule_id} needs antecedent "
                f"{entry.antecedent_index + 1} ({cond}) to establish {entry.establishes}"
            )
    lines.append(f"  {tail}")
    return lines


def render_explanation(
    explanation: ProofNode | WhyChain, session: InferenceSession | None = None
) -> str:
    """Deterministic text: proofs indent two spaces per level, one node per line.

    Rendering a WhyChain needs the session (or at least its rules) to show
    the condition under pursuit.
    """
    if isinstance(explanation, ProofNode):
        lines: list[str] = []
        _proof_lines(explanation, 0, lines)
        return "\n".join(lines)
    if session is None:
        raise ValueError("rendering a WhyChain requires the session for rule lookup")
    rb = session.kb.rulebase(session.active_rulebase)
    rules = {r.id: r for r in rb.rules}
    return "\n".join(_why_lines(explanation, rules))
