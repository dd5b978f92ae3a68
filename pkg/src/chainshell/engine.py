"""Inference engine: forward, backward, and hybrid chaining as a step machine.

Sessions are immutable values. Every public operation takes a session and
returns a new one; callers may keep old states and resume them again (what-if
replay). The engine performs no I/O: when it needs user input it suspends
with status NEEDS_ANSWER and a question, and continues via :func:`resume`.

Semantics in brief:

* Working memory is write-once. A firing that assigns an already-set
  variable skips that assignment and records a ConflictSkipped event.
* Refraction: a rule fires at most once per session.
* Ties are broken by source order (order_index), everywhere.
* Forward chaining never asks questions; backward and hybrid ask only after
  every candidate rule for a goal has failed.
* An "unknown" answer is a refusal: the variable stays unset and is never
  asked again, though later rule firings may still derive it.

Backward search keeps a goal stack (occurrence-checked, which bounds cycles)
and a rule stack. Failed goal searches are memoized together with the set of
goal-stack variables whose occurrence check the failure depended on; a later
search of the same variable under a superset of those ancestors fails
immediately. Failure is monotone in the ancestor set and entries are dropped
whenever memory, refusals, or the fired set change, so the cache is sound.
With it, every session finishes within the envelope

    micro_steps <= (R + Q + 2) * ((R + 1) * (A + 2) + 2 * (V + 1))

where R is the rule count of the active rule base, A the largest antecedent
count, V the number of variables in scope, and Q the number of askable
variables (see :func:`step_bound`). The suite asserts this bound on every
run it performs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union

from .kb import (
    Condition,
    Diagnostic,
    EvaluationError,
    KnowledgeBase,
    Rule,
    Truth,
    Value,
    ValueKind,
    VariableDecl,
    condition_truth,
    has_errors,
    select_rulebase,
    validate_kb,
)

#: Hard safety ceiling on machine iterations per advance; never reached for
#: knowledge bases within the stated bound, guards non-termination bugs.
_SAFETY_CEILING = 10_000_000


class EngineError(Exception):
    """Base class for engine-level errors."""


class InvalidKnowledgeBase(EngineError):
    """The knowledge base has error-severity diagnostics and cannot run."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__(
            "knowledge base failed validation: "
            + "; ".join(d.message for d in diagnostics if d.severity.value == "error")
        )


class InvalidFacts(EngineError):
    """Initial facts are malformed (duplicate, undeclared, or wrong kind)."""


class InvalidGoal(EngineError):
    """The requested goal variable is missing or not declared."""


class InvalidAnswer(EngineError):
    """An answer has the wrong kind or an undeclared symbol; state unchanged."""


class InvalidState(EngineError):
    """The operation does not apply to the session's current status."""


class EngineFault(EngineError):
    """Internal invariant violation (for example a runtime kind mismatch)."""


class _UnknownAnswer:
    """Marker for a refusal: the user declines to provide a value."""

    _instance: "_UnknownAnswer | None" = None

    def __new__(cls) -> "_UnknownAnswer":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNKNOWN"


#: Pass as the answer to record a refusal.
UNKNOWN = _UnknownAnswer()

Answer = Union[Value, _UnknownAnswer]


class Mode(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    HYBRID = "hybrid"


class ProvenanceKind(Enum):
    GIVEN = "given"
    ANSWERED = "answered"
    DERIVED = "derived"


@dataclass(frozen=True)
class Provenance:
    kind: ProvenanceKind
    rule_id: str | None = None

    def __post_init__(self) -> None:
        if (self.kind is ProvenanceKind.DERIVED) != (self.rule_id is not None):
            raise ValueError("rule_id is carried exactly by derived provenance")


GIVEN = Provenance(ProvenanceKind.GIVEN)
ANSWERED = Provenance(ProvenanceKind.ANSWERED)


def derived(rule_id: str) -> Provenance:
    return Provenance(ProvenanceKind.DERIVED, rule_id)


@dataclass(frozen=True)
class Fact:
    variable: str
    value: Value
    provenance: Provenance


class ScopeKind(Enum):
    GLOBAL = "global"
    RULEBASE = "rulebase"


@dataclass(frozen=True)
class Scope:
    kind: ScopeKind
    rulebase_id: str | None = None


@dataclass(frozen=True)
class WorkingMemory:
    """The context: variable -> fact, write-once."""

    facts: Mapping[str, Fact]
    scope: Scope

    def get(self, variable: str) -> Fact | None:
        return self.facts.get(variable)

    def value(self, variable: str) -> Value | None:
        fact = self.facts.get(variable)
        return fact.value if fact is not None else None

    def values(self) -> dict[str, Value]:
        return {v: f.value for v, f in self.facts.items()}

    def with_fact(self, fact: Fact) -> "WorkingMemory":
        if fact.variable in self.facts:
            raise EngineFault(f"variable '{fact.variable}' is already set (write-once)")
        updated = dict(self.facts)
        updated[fact.variable] = fact
        return WorkingMemory(updated, self.scope)


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


class MatchStatus(Enum):
    SATISFIED = "satisfied"
    FAILED = "failed"
    INCOMPLETE = "incomplete"


@dataclass(frozen=True)
class MatchResult:
    status: MatchStatus
    failed_index: int | None = None
    unknown_variable: str | None = None


def eval_condition(condition: Condition, memory: WorkingMemory) -> Truth:
    """Three-valued evaluation of one condition against working memory."""
    try:
        return condition_truth(condition, memory.values())
    except EvaluationError as exc:
        raise EngineFault(str(exc)) from exc


def _match(rule: Rule, values: Mapping[str, Value]) -> MatchResult:
    for i, cond in enumerate(rule.antecedents):
        t = condition_truth(cond, values)
        if t is Truth.FALSE:
            return MatchResult(MatchStatus.FAILED, failed_index=i)
        if t is Truth.UNKNOWN:
            return MatchResult(MatchStatus.INCOMPLETE, unknown_variable=cond.variable)
    return MatchResult(MatchStatus.SATISFIED)


def match_rule(rule: Rule, memory: WorkingMemory) -> MatchResult:
    """Left-to-right match: the first non-true condition decides the result.

    A false condition at index i masks unknowns at higher indices.
    """
    try:
        return _match(rule, memory.values())
    except EvaluationError as exc:
        raise EngineFault(str(exc)) from exc


# ---------------------------------------------------------------------------
# Trace events
# ---------------------------------------------------------------------------


class FailReason(Enum):
    FALSE_CONDITION = "false_condition"
    UNPROVABLE = "unprovable"
    CYCLE = "cycle"


@dataclass(frozen=True)
class TraceEvent:
    seq: int


@dataclass(frozen=True)
class RuleFired(TraceEvent):
    rule_id: str
    bindings: tuple[tuple[str, Value], ...]


@dataclass(frozen=True)
class RuleFailed(TraceEvent):
    rule_id: str
    antecedent_index: int
    reason: FailReason


@dataclass(frozen=True)
class QuestionAsked(TraceEvent):
    variable: str


@dataclass(frozen=True)
class AnswerReceived(TraceEvent):
    variable: str
    value: Value | None  # None records a refusal


@dataclass(frozen=True)
class ConflictSkipped(TraceEvent):
    rule_id: str
    variable: str


@dataclass(frozen=True)
class SubgoalPushed(TraceEvent):
    variable: str
    requested_by: str | None


class SubgoalOutcome(Enum):
    RESOLVED = "resolved"
    FAILED = "failed"


@dataclass(frozen=True)
class SubgoalResolved(TraceEvent):
    variable: str
    outcome: SubgoalOutcome


# ---------------------------------------------------------------------------
# Session state
# ---------------------------------------------------------------------------


class StatusKind(Enum):
    RUNNING = "running"
    NEEDS_ANSWER = "needs_answer"
    DONE = "done"


@dataclass(frozen=True)
class Question:
    variable: str
    prompt: str
    allowed_values: tuple[Value, ...] | None


@dataclass(frozen=True)
class Outcome:
    """Final result: memory plus recommendations; proven/value for backward."""

    memory: WorkingMemory
    recommendations: tuple[str, ...]
    proven: bool | None = None
    value: Value | None = None


@dataclass(frozen=True)
class GoalFrame:
    variable: str
    requested_by: str | None
    candidates: tuple[str, ...]
    next_candidate: int
    cut_vars: frozenset[str] = frozenset()
    push_epoch: int = -1


@dataclass(frozen=True)
class RuleFrame:
    rule_id: str
    antecedent_index: int
    goal_variable: str | None  # None marks a hybrid outer attempt


@dataclass(frozen=True)
class InferenceSession:
    """Resumable state of one consultation; a value, never mutated."""

    mode: Mode
    goal: str | None
    kb: KnowledgeBase
    active_rulebase: str
    memory: WorkingMemory
    goal_frames: tuple[GoalFrame, ...]
    rule_frames: tuple[RuleFrame, ...]
    fired: tuple[str, ...]
    refused: frozenset[str]
    trace: tuple[TraceEvent, ...]
    status: StatusKind
    question: Question | None = None
    outcome: Outcome | None = None
    hybrid_failed: frozenset[str] = frozenset()
    micro_steps: int = 0

    @property
    def kb_version(self) -> int:
        return self.kb.version

    @property
    def goal_stack(self) -> tuple[tuple[str, str | None], ...]:
        """(variable, requesting rule id or None for the root goal), bottom first."""
        return tuple((g.variable, g.requested_by) for g in self.goal_frames)

    @property
    def rule_stack(self) -> tuple[tuple[str, int], ...]:
        """(rule id, antecedent index under pursuit), bottom first."""
        return tuple((r.rule_id, r.antecedent_index) for r in self.rule_frames)


def step_bound(kb: KnowledgeBase, rulebase_id: str) -> int:
    """Guaranteed ceiling on session micro-steps for this rule base."""
    rb = kb.rulebase(rulebase_id)
    scope = kb.scope_declarations(rulebase_id)
    r = len(rb.rules)
    a = max((len(rule.antecedents) for rule in rb.rules), default=0)
    v = len(scope)
    q = sum(1 for d in scope.values() if d.askable)
    return (r + q + 2) * ((r + 1) * (a + 2) + 2 * (v + 1))


# ---------------------------------------------------------------------------
# The machine
# ---------------------------------------------------------------------------


@dataclass
class _MutGoal:
    variable: str
    requested_by: str | None
    candidates: tuple[str, ...]
    next_candidate: int
    cut_vars: set[str]
    push_epoch: int


@dataclass
class _MutRule:
    rule_id: str
    antecedent_index: int
    goal_variable: str | None


class _Run:
    """Mutable working copy of a session while it advances."""

    def __init__(self, session: InferenceSession):
        self.session = session
        self.kb = session.kb
        self.rb = session.kb.rulebase(session.active_rulebase)
        self.decls = session.kb.scope_declarations(session.active_rulebase)
        self.rules: Sequence[Rule] = self.rb.rules
        self.rules_by_id = {r.id: r for r in self.rules}
        concluders: dict[str, list[str]] = {}
        for r in self.rules:
            for a in r.consequents:
                concluders.setdefault(a.variable, []).append(r.id)
        self.concluders = {v: tuple(ids) for v, ids in concluders.items()}
        self.facts: dict[str, Fact] = dict(session.memory.facts)
        self.values: dict[str, Value] = {v: f.value for v, f in self.facts.items()}
        self.goal_frames: list[_MutGoal] = [
            _MutGoal(g.variable, g.requested_by, g.candidates, g.next_candidate,
                     set(g.cut_vars), -1)
            for g in session.goal_frames
        ]
        self.rule_frames: list[_MutRule] = [
            _MutRule(r.rule_id, r.antecedent_index, r.goal_variable)
            for r in session.rule_frames
        ]
        self.fired: list[str] = list(session.fired)
        self.fired_set = set(self.fired)
        self.refused = set(session.refused)
        self.trace: list[TraceEvent] = list(session.trace)
        self.hybrid_failed = set(session.hybrid_failed)
        self.micro = session.micro_steps
        self.bound = step_bound(session.kb, session.active_rulebase)
        # failure cache: variable -> list of (ancestor taint, epoch)
        self.epoch = 0
        self.fail_cache: dict[str, list[tuple[frozenset[str], int]]] = {}

    # -- bookkeeping --------------------------------------------------------

    def tick(self) -> None:
        self.micro += 1
        if self.micro > _SAFETY_CEILING:
            raise EngineFault("engine exceeded its safety ceiling; please report this")

    def emit(self, ctor, **kwargs) -> None:
        self.trace.append(ctor(seq=len(self.trace), **kwargs))

    def truth(self, cond: Condition) -> Truth:
        try:
            return condition_truth(cond, self.values)
        except EvaluationError as exc:
            raise EngineFault(str(exc)) from exc

    def add_fact(self, fact: Fact) -> None:
        if fact.variable in self.facts:
            raise EngineFault(f"write-once violation on '{fact.variable}'")
        self.facts[fact.variable] = fact
        self.values[fact.variable] = fact.value
        self.epoch += 1

    def fire(self, rule: Rule) -> None:
        bindings = tuple((c.variable, self.values[c.variable]) for c in rule.antecedents)
        self.emit(RuleFired, rule_id=rule.id, bindings=bindings)
        self.fired.append(rule.id)
        self.fired_set.add(rule.id)
        for a in rule.consequents:
            if a.variable in self.facts:
                self.emit(ConflictSkipped, rule_id=rule.id, variable=a.variable)
            else:
                self.add_fact(Fact(a.variable, a.value, derived(rule.id)))
        self.epoch += 1

    def decl(self, variable: str) -> VariableDecl:
        try:
            return self.decls[variable]
        except KeyError:
            raise EngineFault(f"variable '{variable}' has no declaration in scope") from None

    # -- goal machinery ------------------------------------------------------

    def goal_vars(self) -> set[str]:
        return {g.variable for g in self.goal_frames}

    def push_goal(self, variable: str, requested_by: str | None) -> None:
        self.emit(SubgoalPushed, variable=variable, requested_by=requested_by)
        self.goal_frames.append(
            _MutGoal(
                variable,
                requested_by,
                self.concluders.get(variable, ()),
                0,
                set(),
                self.epoch,
            )
        )

    def cache_lookup(self, variable: str, ancestors: set[str]) -> frozenset[str] | None:
        for taint, epoch in self.fail_cache.get(variable, ()):
            if epoch == self.epoch and taint <= ancestors:
                return taint
        return None

    def pop_goal_resolved(self, g: _MutGoal) -> None:
        self.goal_frames.pop()
        self.emit(SubgoalResolved, variable=g.variable, outcome=SubgoalOutcome.RESOLVED)

    def pop_goal_failed(self, g: _MutGoal) -> None:
        self.goal_frames.pop()
        self.emit(SubgoalResolved, variable=g.variable, outcome=SubgoalOutcome.FAILED)
        ancestors = self.goal_vars()
        taint = frozenset(g.cut_vars & ancestors)
        if g.push_epoch == self.epoch:
            self.fail_cache.setdefault(g.variable, []).append((taint, self.epoch))
        # the rule that wanted this sub-goal fails with it
        if self.rule_frames:
            rf = self.rule_frames[-1]
            self.emit(
                RuleFailed,
                rule_id=rf.rule_id,
                antecedent_index=rf.antecedent_index,
                reason=FailReason.UNPROVABLE,
            )
            self.rule_frames.pop()
            if rf.goal_variable is None:
                self.hybrid_failed.add(rf.rule_id)
            else:
                parent = self.goal_frames[-1]
                if parent.variable != rf.goal_variable:  # pragma: no cover - invariant
                    raise EngineFault("rule frame detached from its goal frame")
                parent.cut_vars.update(g.cut_vars)

    def run_goals(self) -> str | None:
        """Drive the goal stack; returns a variable to ask, or None when empty."""
        while self.goal_frames:
            self.tick()
            g = self.goal_frames[-1]
            if g.variable in self.facts:
                # resolved (possibly by a side effect); abandon any stale attempt
                while self.rule_frames and self.rule_frames[-1].goal_variable == g.variable:
                    self.rule_frames.pop()
                self.pop_goal_resolved(g)
                continue
            rf = self.rule_frames[-1] if self.rule_frames else None
            if rf is not None and rf.goal_variable == g.variable:
                self.work_rule(rf)
                continue
            # no active attempt for this goal
            cached = self.cache_lookup(g.variable, {f.variable for f in self.goal_frames[:-1]})
            if cached is not None:
                g.cut_vars.update(cached)
                self.pop_goal_failed(g)
                continue
            if g.next_candidate < len(g.candidates):
                rule_id = g.candidates[g.next_candidate]
                g.next_candidate += 1
                if rule_id in self.fired_set:
                    continue  # already fired; could not conclude this unset variable again
                self.rule_frames.append(_MutRule(rule_id, 0, g.variable))
                continue
            decl = self.decl(g.variable)
            if decl.askable and g.variable not in self.refused:
                self.emit(QuestionAsked, variable=g.variable)
                return g.variable
            self.pop_goal_failed(g)
        return None

    def work_rule(self, rf: _MutRule) -> None:
        rule = self.rules_by_id[rf.rule_id]
        if rf.antecedent_index >= len(rule.antecedents):
            self.rule_frames.pop()
            self.fire(rule)
            return
        cond = rule.antecedents[rf.antecedent_index]
        t = self.truth(cond)
        if t is Truth.TRUE:
            rf.antecedent_index += 1
            return
        if t is Truth.FALSE:
            self.emit(
                RuleFailed,
                rule_id=rf.rule_id,
                antecedent_index=rf.antecedent_index,
                reason=FailReason.FALSE_CONDITION,
            )
            self.rule_frames.pop()
            return
        variable = cond.variable
        if variable in self.goal_vars():
            # occurrence check: pursuing this variable again would loop
            owner = self.goal_frames[-1]
            owner.cut_vars.add(variable)
            self.emit(
                RuleFailed,
                rule_id=rf.rule_id,
                antecedent_index=rf.antecedent_index,
                reason=FailReason.CYCLE,
            )
            self.rule_frames.pop()
            return
        self.push_goal(variable, rf.rule_id)

    # -- mode drivers --------------------------------------------------------

    def forward_one_step(self) -> bool:
        """Fire the topmost satisfied unfired rule; False when none can fire."""
        self.tick()
        for rule in self.rules:
            if rule.id in self.fired_set:
                continue
            result = _match_guarded(rule, self.values)
            if result.status is MatchStatus.SATISFIED:
                self.fire(rule)
                return True
        return False

    def advance_backward(self) -> str | None:
        return self.run_goals()

    def advance_hybrid(self) -> str | None:
        while True:
            self.tick()
            if self.goal_frames:
                ask = self.run_goals()
                if ask is not None:
                    return ask
                continue
            if self.rule_frames:
                rf = self.rule_frames[-1]
                if rf.goal_variable is not None:  # pragma: no cover - invariant
                    raise EngineFault("inner rule frame survived its goal")
                self.work_rule_hybrid(rf)
                continue
            nxt = self.next_hybrid_attempt()
            if nxt is None:
                return None
            self.rule_frames.append(_MutRule(nxt, 0, None))

    def work_rule_hybrid(self, rf: _MutRule) -> None:
        rule = self.rules_by_id[rf.rule_id]
        if rf.antecedent_index >= len(rule.antecedents):
            self.rule_frames.pop()
            self.fire(rule)
            self.hybrid_failed.clear()  # a firing starts a fresh pass
            return
        cond = rule.antecedents[rf.antecedent_index]
        t = self.truth(cond)
        if t is Truth.TRUE:
            rf.antecedent_index += 1
            return
        if t is Truth.FALSE:
            self.emit(
                RuleFailed,
                rule_id=rf.rule_id,
                antecedent_index=rf.antecedent_index,
                reason=FailReason.FALSE_CONDITION,
            )
            self.rule_frames.pop()
            self.hybrid_failed.add(rf.rule_id)
            return
        self.push_goal(cond.variable, rf.rule_id)

    def next_hybrid_attempt(self) -> str | None:
        for rule in self.rules:
            if rule.id not in self.fired_set and rule.id not in self.hybrid_failed:
                return rule.id
        return None

    # -- freezing ------------------------------------------------------------

    def snapshot_memory(self) -> WorkingMemory:
        return WorkingMemory(dict(self.facts), Scope(ScopeKind.RULEBASE, self.rb.id))

    def build_outcome(self) -> Outcome:
        memory = self.snapshot_memory()
        recommendations = tuple(
            self.rules_by_id[rid].recommendation
            for rid in self.fired
            if self.rules_by_id[rid].recommendation is not None
        )
        if self.session.mode is Mode.BACKWARD:
            goal = self.session.goal
            assert goal is not None
            fact = self.facts.get(goal)
            if fact is not None:
                return Outcome(memory, recommendations, proven=True, value=fact.value)
            return Outcome(memory, recommendations, proven=False, value=None)
        return Outcome(memory, recommendations)

    def freeze(self, status: StatusKind, question: Question | None, outcome: Outcome | None) -> InferenceSession:
        return replace(
            self.session,
            memory=self.snapshot_memory(),
            goal_frames=tuple(
                GoalFrame(g.variable, g.requested_by, tuple(g.candidates), g.next_candidate,
                          frozenset(g.cut_vars), -1)
                for g in self.goal_frames
            ),
            rule_frames=tuple(
                RuleFrame(r.rule_id, r.antecedent_index, r.goal_variable)
                for r in self.rule_frames
            ),
            fired=tuple(self.fired),
            refused=frozenset(self.refused),
            trace=tuple(self.trace),
            status=status,
            question=question,
            outcome=outcome,
            hybrid_failed=frozenset(self.hybrid_failed),
            micro_steps=self.micro,
        )


def _match_guarded(rule: Rule, values: Mapping[str, Value]) -> MatchResult:
    try:
        return _match(rule, values)
    except EvaluationError as exc:
        raise EngineFault(str(exc)) from exc


def _question_for(run: _Run, variable: str) -> Question:
    decl = run.decl(variable)
    allowed: tuple[Value, ...] | None
    if decl.kind is ValueKind.BOOLEAN:
        allowed = (Value.boolean(True), Value.boolean(False))
    elif decl.kind is ValueKind.SYMBOL:
        allowed = tuple(Value.symbol(s) for s in decl.symbol_set or ())
    else:
        allowed = None
    return Question(variable, decl.prompt or f"Value for {variable}?", allowed)


def _advance(run: _Run, forward_single_step: bool = False) -> InferenceSession:
    mode = run.session.mode
    if mode is Mode.FORWARD:
        if forward_single_step:
            if run.forward_one_step():
                return run.freeze(StatusKind.RUNNING, None, None)
            return run.freeze(StatusKind.DONE, None, run.build_outcome())
        while run.forward_one_step():
            pass
        return run.freeze(StatusKind.DONE, None, run.build_outcome())
    if mode is Mode.BACKWARD:
        ask = run.advance_backward()
    else:
        ask = run.advance_hybrid()
    if ask is not None:
        return run.freeze(StatusKind.NEEDS_ANSWER, _question_for(run, ask), None)
    return run.freeze(StatusKind.DONE, None, run.build_outcome())


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def _normalize_initial(initial: Union[Mapping[str, Value], Iterable[tuple[str, Value]], None]) -> list[tuple[str, Value]]:
    if initial is None:
        return []
    if isinstance(initial, Mapping):
        return list(initial.items())
    return list(initial)


def _validate_answer_value(decl: VariableDecl, value: Value) -> None:
    if value.kind is not decl.kind:
        raise InvalidAnswer(
            f"'{decl.name}' expects a {decl.kind.value} value, got {value.kind.value}"
        )
    if decl.kind is ValueKind.SYMBOL and decl.symbol_set:
        assert isinstance(value.payload, str)
        if value.payload not in decl.symbol_set:
            raise InvalidAnswer(
                f"'{value.payload}' is not one of the declared symbols for '{decl.name}'"
            )


def new_session(
    kb: KnowledgeBase,
    mode: Mode,
    initial_facts: Union[Mapping[str, Value], Iterable[tuple[str, Value]], None] = None,
    goal: str | None = None,
) -> InferenceSession:
    """Build a session in RUNNING state without advancing it.

    Most callers want :func:`start_session`; this constructor exists so the
    stepwise operations can be observed from the very first step.
    """
    diagnostics = validate_kb(kb)
    if has_errors(diagnostics):
        raise InvalidKnowledgeBase(diagnostics)
    if mode is Mode.BACKWARD:
        if goal is None:
            raise InvalidGoal("backward chaining requires a goal variable")
    elif goal is not None:
        raise InvalidGoal(f"{mode.value} chaining does not take a goal variable")

    pairs = _normalize_initial(initial_facts)
    seen: set[str] = set()
    for name, _ in pairs:
        if name in seen:
            raise InvalidFacts(f"duplicate initial fact for variable '{name}'")
        seen.add(name)

    global_names = {d.name for d in kb.global_declarations}
    global_context = {name: value for name, value in pairs if name in global_names}
    active = select_rulebase(kb, global_context)
    decls = kb.scope_declarations(active)

    facts: dict[str, Fact] = {}
    for name, value in pairs:
        decl = decls.get(name)
        if decl is None:
            raise InvalidFacts(
                f"initial fact for '{name}', which is not declared in rule base "
                f"'{active}' or globally"
            )
        try:
            _validate_answer_value(decl, value)
        except InvalidAnswer as exc:
            raise InvalidFacts(str(exc)) from None
        facts[name] = Fact(name, value, GIVEN)

    if goal is not None and goal not in decls:
        raise InvalidGoal(f"goal variable '{goal}' is not declared in rule base '{active}'")

    session = InferenceSession(
        mode=mode,
        goal=goal,
        kb=kb,
        active_rulebase=active,
        memory=WorkingMemory(facts, Scope(ScopeKind.RULEBASE, active)),
        goal_frames=(),
        rule_frames=(),
        fired=(),
        refused=frozenset(),
        trace=(),
        status=StatusKind.RUNNING,
    )
    if mode is Mode.BACKWARD:
        run = _Run(session)
        run.push_goal(goal, None)  # type: ignore[arg-type]
        session = run.freeze(StatusKind.RUNNING, None, None)
    return session


def start_session(
    kb: KnowledgeBase,
    mode: Mode,
    initial_facts: Union[Mapping[str, Value], Iterable[tuple[str, Value]], None] = None,
    goal: str | None = None,
) -> InferenceSession:
    """Create a session and advance it until DONE or NEEDS_ANSWER."""
    session = new_session(kb, mode, initial_facts, goal)
    return _advance(_Run(session))


def resume(session: InferenceSession, answer: Answer) -> InferenceSession:
    """Apply an answer (or UNKNOWN refusal) and advance to the next stop."""
    if session.status is not StatusKind.NEEDS_ANSWER:
        raise InvalidState("resume applies only to sessions waiting for an answer")
    question = session.question
    assert question is not None
    run = _Run(session)
    if isinstance(answer, _UnknownAnswer):
        run.refused.add(question.variable)
        run.emit(AnswerReceived, variable=question.variable, value=None)
        run.epoch += 1
    else:
        decl = run.decl(question.variable)
        _validate_answer_value(decl, answer)
        run.emit(AnswerReceived, variable=question.variable, value=answer)
        run.add_fact(Fact(question.variable, answer, ANSWERED))
    return _advance(run)


def forward_step(session: InferenceSession) -> InferenceSession:
    """One forward step: fire the topmost satisfied unfired rule, or finish."""
    if session.mode is not Mode.FORWARD:
        raise InvalidState("forward_step applies to forward sessions")
    if session.status is not StatusKind.RUNNING:
        raise InvalidState("forward_step applies to running sessions")
    return _advance(_Run(session), forward_single_step=True)


def backward_step(session: InferenceSession, answer: Answer | None = None) -> InferenceSession:
    """Advance a backward session to its next question or completion."""
    if session.mode is not Mode.BACKWARD:
        raise InvalidState("backward_step applies to backward sessions")
    if session.status is StatusKind.NEEDS_ANSWER:
        if answer is None:
            raise InvalidState("this session is waiting for an answer")
        return resume(session, answer)
    if session.status is StatusKind.RUNNING:
        if answer is not None:
            raise InvalidState("no question is pending; answer not expected")
        return _advance(_Run(session))
    raise InvalidState("session is already done")


def hybrid_chain_step(session: InferenceSession, answer: Answer | None = None) -> InferenceSession:
    """Advance a hybrid session to its next question or completion."""
    if session.mode is not Mode.HYBRID:
        raise InvalidState("hybrid_chain_step applies to hybrid sessions")
    if session.status is StatusKind.NEEDS_ANSWER:
        if answer is None:
            raise InvalidState("this session is waiting for an answer")
        return resume(session, answer)
    if session.status is StatusKind.RUNNING:
        if answer is not None:
            raise InvalidState("no question is pending; answer not expected")
        return _advance(_Run(session))
    raise InvalidState("session is already done")


def forward_chain(
    kb: KnowledgeBase,
    initial_facts: Union[Mapping[str, Value], Iterable[tuple[str, Value]], None] = None,
) -> Outcome:
    """Run data-driven inference to completion; a pure function of its inputs."""
    session = start_session(kb, Mode.FORWARD, initial_facts)
    outcome = session.outcome
    assert outcome is not None
    return outcome
