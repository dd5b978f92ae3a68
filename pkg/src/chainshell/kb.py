"""Knowledge representation: values, conditions, rules, rule bases, meta-rules.

All types here are immutable after construction and safe to share across
threads. Source spans are carried for editor diagnostics but excluded from
equality, so two knowledge bases parsed from differently formatted text
compare equal when they mean the same thing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Union


class KbError(Exception):
    """Base class for knowledge-base level errors."""


class EvaluationError(KbError):
    """A condition was evaluated against a fact of the wrong kind.

    Raised only when a knowledge base that failed (or skipped) validation
    reaches the engine: this is an engine fault, not a user error.
    """


class ValueKind(Enum):
    BOOLEAN = "boolean"
    NUMBER = "number"
    TEXT = "text"
    SYMBOL = "symbol"


class Operator(Enum):
    EQ = "eq"
    NE = "ne"
    LT = "lt"
    LE = "le"
    GT = "gt"
    GE = "ge"
    IN = "in"


#: Operators that require a number-kind variable.
ORDERING_OPERATORS = frozenset({Operator.LT, Operator.LE, Operator.GT, Operator.GE})

OPERATOR_SYMBOLS = {
    Operator.EQ: "=",
    Operator.NE: "!=",
    Operator.LT: "<",
    Operator.LE: "<=",
    Operator.GT: ">",
    Operator.GE: ">=",
    Operator.IN: "in",
}


@dataclass(frozen=True)
class SourceSpan:
    """1-based position of a construct in DSL source text."""

    line: int
    column: int
    length: int = 1

    def __post_init__(self) -> None:
        if self.line < 1 or self.column < 1 or self.length < 1:
            raise ValueError(f"invalid source span {self.line}:{self.column}+{self.length}")


@dataclass(frozen=True)
class Value:
    """A typed runtime value: boolean, 64-bit float, text, or symbol.

    Numbers always carry float payloads (integers are widened on
    construction). Equality is payload equality within one kind; values of
    different kinds are never equal.
    """

    kind: ValueKind
    payload: Union[bool, float, str]

    def __post_init__(self) -> None:
        k, p = self.kind, self.payload
        if k is ValueKind.BOOLEAN:
            if not isinstance(p, bool):
                raise TypeError(f"boolean value needs a bool payload, got {type(p).__name__}")
        elif k is ValueKind.NUMBER:
            if isinstance(p, bool) or not isinstance(p, (int, float)):
                raise TypeError(f"number value needs a float payload, got {type(p).__name__}")
            object.__setattr__(self, "payload", float(p))
        elif not isinstance(p, str):
            raise TypeError(f"{k.value} value needs a str payload, got {type(p).__name__}")

    @classmethod
    def boolean(cls, payload: bool) -> "Value":
        return cls(ValueKind.BOOLEAN, payload)

    @classmethod
    def number(cls, payload: float) -> "Value":
        return cls(ValueKind.NUMBER, payload)

    @classmethod
    def text(cls, payload: str) -> "Value":
        return cls(ValueKind.TEXT, payload)

    @classmethod
    def symbol(cls, payload: str) -> "Value":
        return cls(ValueKind.SYMBOL, payload)


@dataclass(frozen=True)
class VariableDecl:
    """Declaration of a typed variable, optionally askable with a prompt."""

    name: str
    kind: ValueKind
    symbol_set: tuple[str, ...] | None = None
    askable: bool = False
    prompt: str | None = None
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Condition:
    """An atomic antecedent: variable, operator, operand.

    For the membership operator the operand is a non-empty tuple of values;
    for every other operator it is a single value.
    """

    variable: str
    operator: Operator
    operand: Union[Value, tuple[Value, ...]]
    span: SourceSpan | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.operator is Operator.IN:
            if not isinstance(self.operand, tuple) or not self.operand:
                raise TypeError("membership condition needs a non-empty tuple operand")
        elif not isinstance(self.operand, Value):
            raise TypeError(f"{self.operator.value} condition needs a single Value operand")


@dataclass(frozen=True)
class Assignment:
    """A consequent action: set a variable to a value."""

    variable: str
    value: Value
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Rule:
    """A production rule: conjunction of antecedents, list of assignments."""

    id: str
    order_index: int
    antecedents: tuple[Condition, ...]
    consequents: tuple[Assignment, ...]
    recommendation: str | None = None
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class RuleBase:
    """A named collection of declarations and rules with its own scope."""

    id: str
    declarations: tuple[VariableDecl, ...]
    rules: tuple[Rule, ...]
    span: SourceSpan | None = field(default=None, compare=False)

    def rule(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)


@dataclass(frozen=True)
class MetaRule:
    """Routes inference to a rule base when its conditions hold globally."""

    antecedents: tuple[Condition, ...]
    target_rulebase: str
    span: SourceSpan | None = field(default=None, compare=False)


@dataclass(frozen=True)
class KnowledgeBase:
    id: str
    version: int
    global_declarations: tuple[VariableDecl, ...]
    meta_rules: tuple[MetaRule, ...]
    rulebases: tuple[RuleBase, ...]

    def rulebase(self, rulebase_id: str) -> RuleBase:
        for rb in self.rulebases:
            if rb.id == rulebase_id:
                return rb
        raise KeyError(rulebase_id)

    def scope_declarations(self, rulebase_id: str) -> dict[str, VariableDecl]:
        """Declarations visible inside one rule base: globals plus locals."""
        decls = {d.name: d for d in self.global_declarations}
        decls.update({d.name: d for d in self.rulebase(rulebase_id).declarations})
        return decls


def structurally_equal(a: KnowledgeBase, b: KnowledgeBase) -> bool:
    """Equality of knowledge content, ignoring storage metadata (id, version).

    Source spans are already excluded from dataclass equality.
    """
    return (
        a.global_declarations == b.global_declarations
        and a.meta_rules == b.meta_rules
        and a.rulebases == b.rulebases
    )


# ---------------------------------------------------------------------------
# Condition evaluation
# ---------------------------------------------------------------------------


class Truth(Enum):
    """Three-valued condition outcome over a partial fact map."""

    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


def condition_truth(condition: Condition, facts: Mapping[str, Value]) -> Truth:
    """Evaluate one condition against variable -> value bindings.

    Unbound variable yields UNKNOWN. Kind mismatches raise EvaluationError
    (they indicate an unvalidated knowledge base, not a user mistake).
    """
    actual = facts.get(condition.variable)
    if actual is None:
        return Truth.UNKNOWN
    op = condition.operator
    if op is Operator.IN:
        members = condition.operand
        assert isinstance(members, tuple)
        for member in members:
            if member.kind is not actual.kind:
                raise EvaluationError(
                    f"membership test on '{condition.variable}' mixes {actual.kind.value} "
                    f"with {member.kind.value}"
                )
        return Truth.TRUE if any(actual == m for m in members) else Truth.FALSE
    operand = condition.operand
    assert isinstance(operand, Value)
    if operand.kind is not actual.kind:
        raise EvaluationError(
            f"condition on '{condition.variable}' compares {actual.kind.value} "
            f"with {operand.kind.value}"
        )
    if op is Operator.EQ:
        return Truth.TRUE if actual == operand else Truth.FALSE
    if op is Operator.NE:
        return Truth.TRUE if actual != operand else Truth.FALSE
    if actual.kind is not ValueKind.NUMBER:
        raise EvaluationError(
            f"ordering operator {op.value} on non-number variable '{condition.variable}'"
        )
    a, b = actual.payload, operand.payload
    assert isinstance(a, float) and isinstance(b, float)
    if op is Operator.LT:
        return Truth.TRUE if a < b else Truth.FALSE
    if op is Operator.LE:
        return Truth.TRUE if a <= b else Truth.FALSE
    if op is Operator.GT:
        return Truth.TRUE if a > b else Truth.FALSE
    return Truth.TRUE if a >= b else Truth.FALSE


def select_rulebase(kb: KnowledgeBase, global_context: Mapping[str, Value]) -> str:
    """Pick the entry rule base: first meta-rule fully satisfied, else the first.

    Meta-rule conditions evaluate over the global context only; an unknown
    variable leaves the meta-rule unsatisfied.
    """
    if not kb.rulebases:
        raise KbError("knowledge base has no rule bases")
    for meta in kb.meta_rules:
        if all(condition_truth(c, global_context) is Truth.TRUE for c in meta.antecedents):
            return meta.target_rulebase
    return kb.rulebases[0].id


# ---------------------------------------------------------------------------
# Static validation
# ---------------------------------------------------------------------------


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Location:
    rulebase: str | None = None
    rule: str | None = None
    span: SourceSpan | None = None


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    location: Location | None = None


def _diag(
    severity: Severity,
    code: str,
    message: str,
    rulebase: str | None = None,
    rule: str | None = None,
    span: SourceSpan | None = None,
) -> Diagnostic:
    return Diagnostic(severity, code, message, Location(rulebase, rule, span))


def _check_value_against_decl(
    value: Value,
    decl: VariableDecl,
    what: str,
    out: list[Diagnostic],
    rulebase: str | None,
    rule: str | None,
    span: SourceSpan | None,
) -> None:
    if value.kind is not decl.kind:
        out.append(
            _diag(
                Severity.ERROR,
                "kind-mismatch",
                f"{what} uses a {value.kind.value} value but '{decl.name}' is {decl.kind.value}",
                rulebase,
                rule,
                span,
            )
        )
        return
    if decl.kind is ValueKind.SYMBOL and decl.symbol_set:
        assert isinstance(value.payload, str)
        if value.payload not in decl.symbol_set:
            out.append(
                _diag(
                    Severity.ERROR,
                    "symbol-not-declared",
                    f"{what}: symbol '{value.payload}' is not in the set declared for '{decl.name}'",
                    rulebase,
                    rule,
                    span,
                )
            )


def _check_condition(
    cond: Condition,
    decls: Mapping[str, VariableDecl],
    out: list[Diagnostic],
    rulebase: str | None,
    rule: str | None,
) -> None:
    decl = decls.get(cond.variable)
    if decl is None:
        out.append(
            _diag(
                Severity.ERROR,
                "undeclared-variable",
                f"condition references undeclared variable '{cond.variable}'",
                rulebase,
                rule,
                cond.span,
            )
        )
        return
    if cond.operator in ORDERING_OPERATORS and decl.kind is not ValueKind.NUMBER:
        out.append(
            _diag(
                Severity.ERROR,
                "kind-mismatch",
                f"operator {OPERATOR_SYMBOLS[cond.operator]} requires a number variable "
                f"but '{decl.name}' is {decl.kind.value}",
                rulebase,
                rule,
                cond.span,
            )
        )
        return
    operands = cond.operand if isinstance(cond.operand, tuple) else (cond.operand,)
    for operand in operands:
        _check_value_against_decl(operand, decl, "condition", out, rulebase, rule, cond.span)


def _check_declarations(
    decls: Iterable[VariableDecl],
    seen: dict[str, str],
    scope_label: str,
    rulebase: str | None,
    out: list[Diagnostic],
) -> None:
    for d in decls:
        if d.name in seen:
            out.append(
                _diag(
                    Severity.ERROR,
                    "duplicate-variable",
                    f"variable '{d.name}' already declared in {seen[d.name]}",
                    rulebase,
                    span=d.span,
                )
            )
        else:
            seen[d.name] = scope_label
        if d.kind is ValueKind.SYMBOL:
            if not d.symbol_set:
                out.append(
                    _diag(
                        Severity.ERROR,
                        "missing-symbol-set",
                        f"symbol variable '{d.name}' needs a non-empty symbol set",
                        rulebase,
                        span=d.span,
                    )
                )
            elif len(set(d.symbol_set)) != len(d.symbol_set):
                out.append(
                    _diag(
                        Severity.ERROR,
                        "duplicate-symbol",
                        f"symbol set of '{d.name}' has repeated members",
                        rulebase,
                        span=d.span,
                    )
                )
        elif d.symbol_set is not None:
            out.append(
                _diag(
                    Severity.ERROR,
                    "unexpected-symbol-set",
                    f"variable '{d.name}' is {d.kind.value} and cannot carry a symbol set",
                    rulebase,
                    span=d.span,
                )
            )
        if d.askable and not d.prompt:
            out.append(
                _diag(
                    Severity.ERROR,
                    "askable-without-prompt",
                    f"askable variable '{d.name}' needs a question prompt",
                    rulebase,
                    span=d.span,
                )
            )


def dependency_graph(rb: RuleBase) -> dict[str, tuple[str, ...]]:
    """Directed graph over rule ids: edge A -> B iff A assigns a variable B tests."""
    produced: dict[str, set[str]] = {r.id: {a.variable for a in r.consequents} for r in rb.rules}
    consumed: dict[str, set[str]] = {r.id: {c.variable for c in r.antecedents} for r in rb.rules}
    graph: dict[str, tuple[str, ...]] = {}
    for a in rb.rules:
        targets = [b.id for b in rb.rules if produced[a.id] & consumed[b.id]]
        graph[a.id] = tuple(targets)
    return graph


def _strongly_connected_components(graph: Mapping[str, tuple[str, ...]]) -> list[list[str]]:
    """Tarjan's algorithm, iterative; components in deterministic order."""
    index: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    components: list[list[str]] = []
    counter = 0

    for root in graph:
        if root in index:
            continue
        work: list[tuple[str, int]] = [(root, 0)]
        while work:
            node, child_i = work[-1]
            if child_i == 0:
                index[node] = lowlink[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            advanced = False
            children = graph[node]
            while child_i < len(children):
                child = children[child_i]
                child_i += 1
                if child not in index:
                    work[-1] = (node, child_i)
                    work.append((child, 0))
                    advanced = True
                    break
                if child in on_stack:
                    lowlink[node] = min(lowlink[node], index[child])
            if advanced:
                continue
            work.pop()
            if lowlink[node] == index[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                components.append(component)
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
    return components


def validate_kb(kb: KnowledgeBase) -> list[Diagnostic]:
    """Statically check a structurally well-formed knowledge base.

    Returns every diagnostic in deterministic traversal order; an empty list
    means the knowledge base is clean. Error severity blocks inference,
    warnings do not.
    """
    out: list[Diagnostic] = []

    if not kb.rulebases:
        out.append(_diag(Severity.ERROR, "no-rulebases", "knowledge base has no rule bases"))

    global_decls: dict[str, str] = {}
    _check_declarations(kb.global_declarations, global_decls, "the global scope", None, out)
    global_decl_map = {d.name: d for d in kb.global_declarations}

    rulebase_ids: set[str] = set()
    for rb in kb.rulebases:
        if rb.id in rulebase_ids:
            out.append(
                _diag(
                    Severity.ERROR,
                    "duplicate-rulebase",
                    f"rule base id '{rb.id}' is not unique",
                    rb.id,
                    span=rb.span,
                )
            )
        rulebase_ids.add(rb.id)

    for meta in kb.meta_rules:
        if meta.target_rulebase not in rulebase_ids:
            out.append(
                _diag(
                    Severity.ERROR,
                    "unknown-rulebase",
                    f"meta-rule targets unknown rule base '{meta.target_rulebase}'",
                    span=meta.span,
                )
            )
        for cond in meta.antecedents:
            _check_condition(cond, global_decl_map, out, None, None)

    for rb in kb.rulebases:
        seen = dict(global_decls)
        _check_declarations(rb.declarations, seen, f"rule base '{rb.id}'", rb.id, out)
        decls = {d.name: d for d in kb.global_declarations}
        decls.update({d.name: d for d in rb.declarations})
        local_names = {d.name for d in rb.declarations}
        global_names = set(global_decl_map) - local_names

        rule_ids: set[str] = set()
        consequent_vars: set[str] = set()
        for r in rb.rules:
            consequent_vars.update(a.variable for a in r.consequents)

        for position, r in enumerate(rb.rules):
            if r.id in rule_ids:
                out.append(
                    _diag(
                        Severity.ERROR,
                        "duplicate-rule",
                        f"rule id '{r.id}' is not unique in rule base '{rb.id}'",
                        rb.id,
                        r.id,
                        r.span,
                    )
                )
            rule_ids.add(r.id)
            if r.order_index != position:
                out.append(
                    _diag(
                        Severity.ERROR,
                        "bad-order-index",
                        f"rule '{r.id}' has order_index {r.order_index}, expected {position}",
                        rb.id,
                        r.id,
                        r.span,
                    )
                )
            if not r.antecedents:
                out.append(
                    _diag(
                        Severity.ERROR,
                        "empty-antecedents",
                        f"rule '{r.id}' has no antecedents",
                        rb.id,
                        r.id,
                        r.span,
                    )
                )
            if not r.consequents:
                out.append(
                    _diag(
                        Severity.ERROR,
                        "empty-consequents",
                        f"rule '{r.id}' has no consequents",
                        rb.id,
                        r.id,
                        r.span,
                    )
                )
            for cond in r.antecedents:
                _check_condition(cond, decls, out, rb.id, r.id)
            assigned: set[str] = set()
            for a in r.consequents:
                if a.variable in assigned:
                    out.append(
                        _diag(
                            Severity.ERROR,
                            "duplicate-consequent",
                            f"rule '{r.id}' assigns '{a.variable}' more than once",
                            rb.id,
                            r.id,
                            a.span,
                        )
                    )
                assigned.add(a.variable)
                decl = decls.get(a.variable)
                if decl is None:
                    out.append(
                        _diag(
                            Severity.ERROR,
                            "undeclared-variable",
                            f"assignment targets undeclared variable '{a.variable}'",
                            rb.id,
                            r.id,
                            a.span,
                        )
                    )
                    continue
                _check_value_against_decl(a.value, decl, "assignment", out, rb.id, r.id, a.span)

        # Unprovable antecedents: not askable, not derivable here, not global.
        for r in rb.rules:
            warned: set[str] = set()
            for cond in r.antecedents:
                v = cond.variable
                decl = decls.get(v)
                if decl is None or v in warned:
                    continue
                if decl.askable or v in consequent_vars or v in global_names:
                    continue
                warned.add(v)
                out.append(
                    _diag(
                        Severity.WARNING,
                        "unprovable-antecedent",
                        f"rule '{r.id}' tests '{v}', which is neither askable, "
                        f"derived by any rule, nor global",
                        rb.id,
                        r.id,
                        cond.span,
                    )
                )

        # Dependency cycles (including self-loops).
        if rb.rules:
            graph = dependency_graph(rb)
            order = {r.id: r.order_index for r in rb.rules}
            for component in _strongly_connected_components(graph):
                is_cycle = len(component) > 1 or component[0] in graph[component[0]]
                if not is_cycle:
                    continue
                members = sorted(component, key=lambda rid: order[rid])
                out.append(
                    _diag(
                        Severity.WARNING,
                        "dependency-cycle",
                        "rules form a dependency cycle: " + ", ".join(members),
                        rb.id,
                        members[0],
                    )
                )

        # Shadowing: identical antecedent lists, earlier rule wins every match.
        for i, earlier in enumerate(rb.rules):
            for later in rb.rules[i + 1 :]:
                if earlier.antecedents == later.antecedents:
                    out.append(
                        _diag(
                            Severity.WARNING,
                            "shadowed-rule",
                            f"rule '{later.id}' repeats the antecedents of earlier rule "
                            f"'{earlier.id}'",
                            rb.id,
                            later.id,
                            later.span,
                        )
                    )

    return out


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diagnostics)


def format_number(x: float) -> str:
    """Shortest round-trip decimal text for a finite 64-bit float."""
    if not math.isfinite(x):
        raise ValueError("non-finite numbers have no canonical text form")
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def value_text(value: Value) -> str:
    """Canonical DSL literal for a value (texts quoted, symbols bare)."""
    if value.kind is ValueKind.BOOLEAN:
        return "true" if value.payload else "false"
    if value.kind is ValueKind.NUMBER:
        assert isinstance(value.payload, float)
        return format_number(value.payload)
    if value.kind is ValueKind.TEXT:
        assert isinstance(value.payload, str)
        return quote_text(value.payload)
    assert isinstance(value.payload, str)
    return value.payload


_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t", "\r": "\\r"}


def quote_text(s: str) -> str:
    parts = ['"']
    for ch in s:
        if ch in _ESCAPES:
            parts.append(_ESCAPES[ch])
        elif ord(ch) < 0x20:
            parts.append(f"\\u{ord(ch):04x}")
        else:
            parts.append(ch)
    parts.append('"')
    return "".join(parts)


def condition_text(cond: Condition) -> str:
    if cond.operator is Operator.IN:
        members = cond.operand
        assert isinstance(members, tuple)
        inner = ", ".join(value_text(v) for v in members)
        return f"{cond.variable} in {{{inner}}}"
    assert isinstance(cond.operand, Value)
    return f"{cond.variable} {OPERATOR_SYMBOLS[cond.operator]} {value_text(cond.operand)}"
