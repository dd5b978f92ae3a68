"""Forward chaining: matching, stepping, refraction, write-once, fixpoint."""

from __future__ import annotations

import random

import pytest

import chainshell as cs
from chainshell.engine import (
    ConflictSkipped,
    InvalidFacts,
    InvalidKnowledgeBase,
    MatchStatus,
    Mode,
    RuleFired,
    Scope,
    ScopeKind,
    StatusKind,
    WorkingMemory,
    eval_condition,
    forward_chain,
    forward_step,
    match_rule,
    new_session,
    start_session,
    step_bound,
)
from chainshell.kb import Truth, Value
from kbgen import oracle_forward, random_kb

B = Value.boolean
S = Value.symbol


def mem(**facts: Value) -> WorkingMemory:
    return WorkingMemory(
        {k: cs.Fact(k, v, cs.engine.GIVEN) for k, v in facts.items()},
        Scope(ScopeKind.RULEBASE, "chest"),
    )


DEMO_FACTS = {"fever": B(True), "cough": B(True), "sputum": S("purulent")}


class TestEvalCondition:
    def test_identity(self, demo_kb):
        r1 = demo_kb.rulebases[0].rules[0]
        assert eval_condition(r1.antecedents[0], mem(fever=B(True))) is Truth.TRUE

    def test_membership_false(self):
        cond = cs.Condition("sputum", cs.Operator.IN, (S("clear"), S("purulent")))
        assert eval_condition(cond, mem(sputum=S("none"))) is Truth.FALSE

    def test_empty_memory_unknown(self, demo_kb):
        r2 = demo_kb.rulebases[0].rules[1]
        assert eval_condition(r2.antecedents[1], mem()) is Truth.UNKNOWN


class TestMatchRule:
    def test_satisfied(self, demo_kb):
        r1 = demo_kb.rulebases[0].rules[0]
        result = match_rule(r1, mem(fever=B(True), cough=B(True)))
        assert result.status is MatchStatus.SATISFIED

    def test_failed_reports_lowest_false(self, demo_kb):
        r1 = demo_kb.rulebases[0].rules[0]
        result = match_rule(r1, mem(fever=B(False)))
        assert result.status is MatchStatus.FAILED and result.failed_index == 0

    def test_incomplete_reports_first_unknown(self, demo_kb):
        r2 = demo_kb.rulebases[0].rules[1]
        result = match_rule(r2, mem(suspicion=S("respiratory_infection")))
        assert result.status is MatchStatus.INCOMPLETE
        assert result.unknown_variable == "wheezing"

    def test_false_masks_later_unknowns(self, demo_kb):
        r1 = demo_kb.rulebases[0].rules[0]
        result = match_rule(r1, mem(fever=B(False)))  # cough unknown, fever false
        assert result.status is MatchStatus.FAILED and result.failed_index == 0

    def test_unknown_before_false_reports_incomplete(self, demo_kb):
        r1 = demo_kb.rulebases[0].rules[0]
        result = match_rule(r1, mem(cough=B(False)))  # fever unknown at index 0
        assert result.status is MatchStatus.INCOMPLETE
        assert result.unknown_variable == "fever"


class TestForwardStep:
    def test_step_sequence_on_demo(self, demo_kb):
        s = new_session(demo_kb, Mode.FORWARD, DEMO_FACTS)
        s1 = forward_step(s)
        assert s1.fired == ("R1",) and s1.status is StatusKind.RUNNING
        assert s1.memory.value("suspicion") == S("respiratory_infection")
        s2 = forward_step(s1)
        assert s2.fired == ("R1", "R3") and s2.status is StatusKind.RUNNING
        s3 = forward_step(s2)
        assert s3.status is StatusKind.DONE
        assert s3.fired == ("R1", "R3")
        assert s3.outcome.memory.value("diagnosis") == S("bronchitis")
        assert s3.outcome.recommendations == ("Consider antibiotic therapy",)

    def test_sessions_are_values(self, demo_kb):
        s = new_session(demo_kb, Mode.FORWARD, DEMO_FACTS)
        s1 = forward_step(s)
        # stepping the same old state twice gives equal results
        assert forward_step(s) == s1
        assert s.fired == ()  # the original is untouched


class TestForwardChain:
    def test_empty_initial_facts_derive_nothing(self, demo_kb):
        out = forward_chain(demo_kb, {})
        assert out.memory.facts == {}
        assert out.recommendations == ()

    def test_demo_golden(self, demo_kb):
        out = forward_chain(demo_kb, DEMO_FACTS)
        assert out.memory.value("diagnosis") == S("bronchitis")
        assert out.memory.value("suspicion") == S("respiratory_infection")
        assert out.recommendations == ("Consider antibiotic therapy",)

    def test_topmost_wins_write_once(self, demo_kb):
        facts = dict(DEMO_FACTS, wheezing=B(True))
        session = start_session(demo_kb, Mode.FORWARD, facts)
        # R2 and R3 are both satisfiable; topmost R2 assigns first
        assert session.outcome.memory.value("diagnosis") == S("asthma_flare")
        assert session.fired == ("R1", "R2", "R3")
        skips = [e for e in session.trace if isinstance(e, ConflictSkipped)]
        assert [(e.rule_id, e.variable) for e in skips] == [("R3", "diagnosis")]

    def test_duplicate_initial_variables_rejected(self, demo_kb):
        with pytest.raises(InvalidFacts):
            start_session(demo_kb, Mode.FORWARD, [("fever", B(True)), ("fever", B(False))])

    def test_undeclared_initial_fact_rejected(self, demo_kb):
        with pytest.raises(InvalidFacts):
            forward_chain(demo_kb, {"nonexistent": B(True)})

    def test_wrong_kind_initial_fact_rejected(self, demo_kb):
        with pytest.raises(InvalidFacts):
            forward_chain(demo_kb, {"fever": S("purulent")})

    def test_invalid_kb_refused(self):
        kb = cs.parse_kb(
            "rulebase t {\n  var b: bool\n  rule R1: if ghost = true then b := true\n}\n"
        )
        with pytest.raises(InvalidKnowledgeBase):
            forward_chain(kb, {})

    def test_forward_never_asks(self, demo_kb):
        session = start_session(demo_kb, Mode.FORWARD, {"fever": B(True)})
        assert session.status is StatusKind.DONE
        assert not any(isinstance(e, cs.engine.QuestionAsked) for e in session.trace)

    def test_deterministic(self, demo_kb):
        a = start_session(demo_kb, Mode.FORWARD, DEMO_FACTS)
        b = start_session(demo_kb, Mode.FORWARD, DEMO_FACTS)
        assert a.trace == b.trace and a.fired == b.fired

    def test_meta_rules_route_the_session(self):
        kb = cs.parse_kb(
            "rulebase rb_chest {\n  var c: bool ask \"c?\"\n  var cr: bool\n"
            "  rule R1: if c = true then cr := true\n}\n"
            "rulebase rb_cardiac {\n  var d: bool ask \"d?\"\n  var dr: bool\n"
            "  rule S1: if d = true then dr := true\n}\n"
            "meta {\n  when area = cardiac use rb_cardiac\n}\n"
            "global {\n  var area: symbol {chest, cardiac}\n}\n"
        )
        session = start_session(
            kb, Mode.FORWARD, {"area": S("cardiac"), "d": B(True)}
        )
        assert session.active_rulebase == "rb_cardiac"
        assert session.outcome.memory.value("dr") == B(True)


class TestFixpointProperty:
    def test_matches_oracle_on_general_random_kbs(self):
        rng = random.Random(1234)
        for _ in range(150):
            kb = random_kb(rng)
            rb = kb.rulebases[0]
            initial = {
                d.name: kbgen_value(rng, d)
                for d in rb.declarations
                if rng.random() < 0.5
            }
            out = forward_chain(kb, initial)
            expected_env, expected_fired = oracle_forward(kb, initial)
            assert out.memory.values() == expected_env
            session = start_session(kb, Mode.FORWARD, initial)
            assert list(session.fired) == expected_fired
            assert session.micro_steps <= step_bound(kb, rb.id)

    def test_refraction_on_random_kbs(self):
        rng = random.Random(77)
        for _ in range(60):
            kb = random_kb(rng)
            initial = {
                d.name: kbgen_value(rng, d)
                for d in kb.rulebases[0].declarations
                if rng.random() < 0.6
            }
            session = start_session(kb, Mode.FORWARD, initial)
            fired_events = [e.rule_id for e in session.trace if isinstance(e, RuleFired)]
            assert len(fired_events) == len(set(fired_events))


def kbgen_value(rng: random.Random, decl) -> Value:
    from kbgen import _random_value

    return _random_value(rng, decl)
