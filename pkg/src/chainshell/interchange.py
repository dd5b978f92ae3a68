"""Interchange format: knowledge bases as plain object/array/scalar trees.

This is the wire shape used by the HTTP service and any remote client; it is
lossless (order_index and version included) where the DSL text is not.
Decoding is strict: unknown fields, unknown enum members, missing required
fields and non-finite numbers are rejected with a path to the offending node
(for example ``rulebases[0].rules[2].consequents[0].value``).
"""

from __future__ import annotations

import math
from typing import Any

from .kb import (
    Assignment,
    Condition,
    KnowledgeBase,
    MetaRule,
    Operator,
    Rule,
    RuleBase,
    Value,
    ValueKind,
    VariableDecl,
)


class DecodeError(Exception):
    """A structural problem in an interchange document, located by path."""

    def __init__(self, message: str, path: str):
        self.message = message
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


# -- encoding ---------------------------------------------------------------


def encode_value(v: Value) -> dict[str, Any]:
    return {"kind": v.kind.value, "payload": v.payload}


def _encode_condition(c: Condition) -> dict[str, Any]:
    if c.operator is Operator.IN:
        assert isinstance(c.operand, tuple)
        operand: Any = [encode_value(v) for v in c.operand]
    else:
        assert isinstance(c.operand, Value)
        operand = encode_value(c.operand)
    return {"variable": c.variable, "operator": c.operator.value, "operand": operand}


def _encode_decl(d: VariableDecl) -> dict[str, Any]:
    return {
        "name": d.name,
        "kind": d.kind.value,
        "symbol_set": list(d.symbol_set) if d.symbol_set is not None else None,
        "askable": d.askable,
        "prompt": d.prompt,
    }


def _encode_rule(r: Rule) -> dict[str, Any]:
    return {
        "id": r.id,
        "order_index": r.order_index,
        "antecedents": [_encode_condition(c) for c in r.antecedents],
        "consequents": [
            {"variable": a.variable, "value": encode_value(a.value)} for a in r.consequents
        ],
        "recommendation": r.recommendation,
    }


def encode_interchange(kb: KnowledgeBase) -> dict[str, Any]:
    return {
        "id": kb.id,
        "version": kb.version,
        "global_declarations": [_encode_decl(d) for d in kb.global_declarations],
        "meta_rules": [
            {
                "antecedents": [_encode_condition(c) for c in m.antecedents],
                "target_rulebase": m.target_rulebase,
            }
            for m in kb.meta_rules
        ],
        "rulebases": [
            {
                "id": rb.id,
                "declarations": [_encode_decl(d) for d in rb.declarations],
                "rules": [_encode_rule(r) for r in rb.rules],
            }
            for rb in kb.rulebases
        ],
    }


# -- decoding ---------------------------------------------------------------


def _need_object(doc: Any, path: str, fields: set[str]) -> dict[str, Any]:
    if not isinstance(doc, dict):
        raise DecodeError(f"expected an object, got {type(doc).__name__}", path)
    for key in doc:
        if key not in fields:
            raise DecodeError(f"unknown field '{key}'", path)
    return doc


def _need(doc: dict[str, Any], field: str, path: str) -> Any:
    if field not in doc:
        raise DecodeError(f"missing required field '{field}'", path)
    return doc[field]


def _need_str(x: Any, path: str) -> str:
    if not isinstance(x, str):
        raise DecodeError(f"expected a string, got {type(x).__name__}", path)
    return x

def _need_list(x: Any, path: str) -> list[Any]:
    if not isinstance(x, list):
        raise DecodeError(f"expected an array, got {type(x).__name__}", path)
    return x


def decode_value(doc: Any, path: str) -> Value:
    obj = _need_object(doc, path, {"kind", "payload"})
    kind_name = _need_str(_need(obj, "kind", path), f"{path}.kind")
    try:
        kind = ValueKind(kind_name)
    except ValueError:
        raise DecodeError(f"unknown value kind '{kind_name}'", f"{path}.kind") from None
    payload = _need(obj, "payload", path)
    ppath = f"{path}.payload"
    if kind is ValueKind.BOOLEAN:
        if not isinstance(payload, bool):
            raise DecodeError("boolean payload must be true or false", ppath)
        return Value.boolean(payload)
    if kind is ValueKind.NUMBER:
        if isinstance(payload, bool) or not isinstance(payload, (int, float)):
            raise DecodeError("number payload must be numeric", ppath)
        if not math.isfinite(payload):
            raise DecodeError("number payload must be finite", ppath)
        return Value.number(float(payload))
    if not isinstance(payload, str):
        raise DecodeError(f"{kind.value} payload must be a string", ppath)
    return Value(kind, payload)


def _decode_condition(doc: Any, path: str) -> Condition:
    obj = _need_object(doc, path, {"variable", "operator", "operand"})
    variable = _need_str(_need(obj, "variable", path), f"{path}.variable")
    op_name = _need_str(_need(obj, "operator", path), f"{path}.operator")
    try:
        op = Operator(op_name)
    except ValueError:
        raise DecodeError(f"unknown operator '{op_name}'", f"{path}.operator") from None
    operand_doc = _need(obj, "operand", path)
    if op is Operator.IN:
        members = _need_list(operand_doc, f"{path}.operand")
        if not members:
            raise DecodeError("membership operand must not be empty", f"{path}.operand")
        operand: Any = tuple(
            decode_value(m, f"{path}.operand[{i}]") for i, m in enumerate(members)
        )
    else:
        operand = decode_value(operand_doc, f"{path}.operand")
    return Condition(variable, op, operand)


def _decode_decl(doc: Any, path: str) -> VariableDecl:
    obj = _need_object(doc, path, {"name", "kind", "symbol_set", "askable", "prompt"})
    name = _need_str(_need(obj, "name", path), f"{path}.name")
    kind_name = _need_str(_need(obj, "kind", path), f"{path}.kind")
    try:
        kind = ValueKind(kind_name)
    except ValueError:
        raise DecodeError(f"unknown value kind '{kind_name}'", f"{path}.kind") from None
    symbol_set_doc = obj.get("symbol_set")
    symbol_set: tuple[str, ...] | None = None
    if symbol_set_doc is not None:
        members = _need_list(symbol_set_doc, f"{path}.symbol_set")
        symbol_set = tuple(
            _need_str(m, f"{path}.symbol_set[{i}]") for i, m in enumerate(members)
        )
    askable = obj.get("askable", False)
    if not isinstance(askable, bool):
        raise DecodeError("askable must be a boolean", f"{path}.askable")
    prompt = obj.get("prompt")
    if prompt is not None and not isinstance(prompt, str):
        raise DecodeError("prompt must be a string or null", f"{path}.prompt")
    return VariableDecl(name=name, kind=kind, symbol_set=symbol_set, askable=askable, prompt=prompt)


def _decode_rule(doc: Any, path: str) -> Rule:
    obj = _need_object(
        doc, path, {"id", "order_index", "antecedents", "consequents", "recommendation"}
    )
    rule_id = _need_str(_need(obj, "id", path), f"{path}.id")
    order_index = _need(obj, "order_index", path)
    if isinstance(order_index, bool) or not isinstance(order_index, int) or order_index < 0:
        raise DecodeError("order_index must be a non-negative integer", f"{path}.order_index")
    ants = _need_list(_need(obj, "antecedents", path), f"{path}.antecedents")
    if not ants:
        raise DecodeError("antecedents must not be empty", f"{path}.antecedents")
    antecedents = tuple(
        _decode_condition(c, f"{path}.antecedents[{i}]") for i, c in enumerate(ants)
    )
    cons = _need_list(_need(obj, "consequents", path), f"{path}.consequents")
    if not cons:
        raise DecodeError("consequents must not be empty", f"{path}.consequents")
    consequents = []
    for i, c in enumerate(cons):
        cpath = f"{path}.consequents[{i}]"
        cobj = _need_object(c, cpath, {"variable", "value"})
        variable = _need_str(_need(cobj, "variable", cpath), f"{cpath}.variable")
        value = decode_value(_need(cobj, "value", cpath), f"{cpath}.value")
        consequents.append(Assignment(variable, value))
    recommendation = obj.get("recommendation")
    if recommendation is not None and not isinstance(recommendation, str):
        raise DecodeError("recommendation must be a string or null", f"{path}.recommendation")
    return Rule(
        id=rule_id,
        order_index=order_index,
        antecedents=antecedents,
        consequents=tuple(consequents),
        recommendation=recommendation,
    )


def decode_interchange(doc: Any) -> KnowledgeBase:
    """Decode an interchange document, raising :class:`DecodeError` on any defect."""
    obj = _need_object(
        doc, "", {"id", "version", "global_declarations", "meta_rules", "rulebases"}
    )
    kb_id = _need_str(_need(obj, "id", ""), "id")
    version = _need(obj, "version", "")
    if isinstance(version, bool) or not isinstance(version, int) or version < 0:
        raise DecodeError("version must be a non-negative integer", "version")
    gdecls = _need_list(_need(obj, "global_declarations", ""), "global_declarations")
    global_declarations = tuple(
        _decode_decl(d, f"global_declarations[{i}]") for i, d in enumerate(gdecls)
    )
    metas = _need_list(_need(obj, "meta_rules", ""), "meta_rules")
    meta_rules = []
    for i, m in enumerate(metas):
        mpath = f"meta_rules[{i}]"
        mobj = _need_object(m, mpath, {"antecedents", "target_rulebase"})
        ants = _need_list(_need(mobj, "antecedents", mpath), f"{mpath}.antecedents")
        antecedents = tuple(
            _decode_condition(c, f"{mpath}.antecedents[{j}]") for j, c in enumerate(ants)
        )
        target = _need_str(_need(mobj, "target_rulebase", mpath), f"{mpath}.target_rulebase")
        meta_rules.append(MetaRule(antecedents, target))
    rbs = _need_list(_need(obj, "rulebases", ""), "rulebases")
    rulebases = []
    for i, rb in enumerate(rbs):
        rpath = f"rulebases[{i}]"
        robj = _need_object(rb, rpath, {"id", "declarations", "rules"})
        rb_id = _need_str(_need(robj, "id", rpath), f"{rpath}.id")
        decls = _need_list(_need(robj, "declarations", rpath), f"{rpath}.declarations")
        declarations = tuple(
            _decode_decl(d, f"{rpath}.declarations[{j}]") for j, d in enumerate(decls)
        )
        rules_doc = _need_list(_need(robj, "rules", rpath), f"{rpath}.rules")
        rules = tuple(_decode_rule(r, f"{rpath}.rules[{j}]") for j, r in enumerate(rules_doc))
        rulebases.append(RuleBase(id=rb_id, declarations=declarations, rules=rules))
    return KnowledgeBase(
        id=kb_id,
        version=version,
        global_declarations=global_declarations,
        meta_rules=tuple(meta_rules),
        rulebases=tuple(rulebases),
    )
