"""Textual rule language: lexer, recursive-descent parser, canonical serializer.

The language is line-friendly but whitespace-insensitive at the token level;
`#` starts a comment running to end of line. Parsing is purely syntactic:
semantic checks (declarations, kinds, symbol sets) belong to
:func:`chainshell.kb.validate_kb`.

The parser never raises on malformed input mid-stream: it records an error,
resynchronises at the next declaration/rule/block boundary, and keeps going,
so one pass reports multiple errors. ``parse_kb`` raises :class:`ParseFailure`
carrying the full error list when anything went wrong.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

from .kb import (
    Assignment,
    Condition,
    KnowledgeBase,
    MetaRule,
    Operator,
    Rule,
    RuleBase,
    SourceSpan,
    Value,
    ValueKind,
    VariableDecl,
    condition_text,
    quote_text,
    value_text,
)

DEFAULT_KB_ID = "kb"
DEFAULT_KB_VERSION = 1


@dataclass(frozen=True)
class ParseError:
    message: str
    span: SourceSpan
    expected: tuple[str, ...] | None = None


class ParseFailure(Exception):
    """Raised by parse_kb when the input is not a well-formed knowledge base."""

    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        first = errors[0]
        super().__init__(f"{first.span.line}:{first.span.column} {first.message}")


class _T(Enum):
    IDENT = "identifier"
    STRING = "string"
    NUMBER = "number"
    LBRACE = "'{'"
    RBRACE = "'}'"
    COLON = "':'"
    COMMA = "','"
    ASSIGN = "':='"
    EQ = "'='"
    NE = "'!='"
    LT = "'<'"
    LE = "'<='"
    GT = "'>'"
    GE = "'>='"
    EOF = "end of input"
    # keywords
    RULEBASE = "'rulebase'"
    VAR = "'var'"
    RULE = "'rule'"
    IF = "'if'"
    AND = "'and'"
    THEN = "'then'"
    RECOMMEND = "'recommend'"
    META = "'meta'"
    WHEN = "'when'"
    USE = "'use'"
    GLOBAL = "'global'"
    ASK = "'ask'"
    IN = "'in'"
    BOOL = "'bool'"
    NUMBER_KW = "'number'"
    TEXT = "'text'"
    SYMBOL = "'symbol'"
    TRUE = "'true'"
    FALSE = "'false'"


_KEYWORDS = {
    "rulebase": _T.RULEBASE,
    "var": _T.VAR,
    "rule": _T.RULE,
    "if": _T.IF,
    "and": _T.AND,
    "then": _T.THEN,
    "recommend": _T.RECOMMEND,
    "meta": _T.META,
    "when": _T.WHEN,
    "use": _T.USE,
    "global": _T.GLOBAL,
    "ask": _T.ASK,
    "in": _T.IN,
    "bool": _T.BOOL,
    "number": _T.NUMBER_KW,
    "text": _T.TEXT,
    "symbol": _T.SYMBOL,
    "true": _T.TRUE,
    "false": _T.FALSE,
}

_KIND_TOKENS = {
    _T.BOOL: ValueKind.BOOLEAN,
    _T.NUMBER_KW: ValueKind.NUMBER,
    _T.TEXT: ValueKind.TEXT,
    _T.SYMBOL: ValueKind.SYMBOL,
}

_KIND_KEYWORDS = {
    ValueKind.BOOLEAN: "bool",
    ValueKind.NUMBER: "number",
    ValueKind.TEXT: "text",
    ValueKind.SYMBOL: "symbol",
}

_COMPARISONS = {
    _T.EQ: Operator.EQ,
    _T.NE: Operator.NE,
    _T.LT: Operator.LT,
    _T.LE: Operator.LE,
    _T.GT: Operator.GT,
    _T.GE: Operator.GE,
}


@dataclass(frozen=True)
class _Token:
    type: _T
    text: str
    line: int
    column: int
    value: Union[str, float, None] = None

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.line, self.column, max(1, len(self.text)))


def _is_ident_start(ch: str) -> bool:
    return ch.isascii() and ch.isalpha()


def _is_ident_char(ch: str) -> bool:
    return ch == "_" or (ch.isascii() and (ch.isalpha() or ch.isdigit()))


class _Lexer:
    def __init__(self, source: str):
        self.src = source
        self.pos = 0
        self.line = 1
        self.col = 1
        self.tokens: list[_Token] = []
        self.errors: list[ParseError] = []

    def _error(self, message: str, line: int, col: int, length: int = 1) -> None:
        self.errors.append(ParseError(message, SourceSpan(line, col, length)))

    def _advance(self, n: int = 1) -> None:
        for _ in range(n):
            if self.pos < len(self.src) and self.src[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def run(self) -> None:
        src = self.src
        while self.pos < len(src):
            ch = src[self.pos]
            if ch in " \t\r\n":
                self._advance()
                continue
            if ch == "#":
                while self.pos < len(src) and src[self.pos] != "\n":
                    self._advance()
                continue
            line, col = self.line, self.col
            if _is_ident_start(ch):
                start = self.pos
                while self.pos < len(src) and _is_ident_char(src[self.pos]):
                    self._advance()
                word = src[start : self.pos]
                ttype = _KEYWORDS.get(word, _T.IDENT)
                self.tokens.append(_Token(ttype, word, line, col, word))
                continue
            if ch.isdigit() or (ch == "-" and self.pos + 1 < len(src) and src[self.pos + 1].isdigit()):
                self._lex_number(line, col)
                continue
            if ch == '"':
                self._lex_string(line, col)
                continue
            two = src[self.pos : self.pos + 2]
            if two == ":=":
                self._advance(2)
                self.tokens.append(_Token(_T.ASSIGN, ":=", line, col))
                continue
            if two == "!=":
                self._advance(2)
                self.tokens.append(_Token(_T.NE, "!=", line, col))
                continue
            if two == "<=":
                self._advance(2)
                self.tokens.append(_Token(_T.LE, "<=", line, col))
                continue
            if two == ">=":
                self._advance(2)
                self.tokens.append(_Token(_T.GE, ">=", line, col))
                continue
            single = {
                "{": _T.LBRACE,
                "}": _T.RBRACE,
                ":": _T.COLON,
                ",": _T.COMMA,
                "=": _T.EQ,
                "<": _T.LT,
                ">": _T.GT,
            }.get(ch)
            if single is not None:
                self._advance()
                self.tokens.append(_Token(single, ch, line, col))
                continue
            self._error(f"unexpected character {ch!r}", line, col)
            self._advance()
        self.tokens.append(_Token(_T.EOF, "", self.line, self.col))

    def _lex_number(self, line: int, col: int) -> None:
        src = self.src
        start = self.pos
        if src[self.pos] == "-":
            self._advance()
        while self.pos < len(src) and src[self.pos].isdigit():
            self._advance()
        if self.pos < len(src) and src[self.pos] == "." and self.pos + 1 < len(src) and src[self.pos + 1].isdigit():
            self._advance()
            while self.pos < len(src) and src[self.pos].isdigit():
                self._advance()
        if self.pos < len(src) and src[self.pos] in "eE":
            self._advance()
            if self.pos < len(src) and src[self.pos] in "+-":
                self._advance()
            if self.pos < len(src) and src[self.pos].isdigit():
                while self.pos < len(src) and src[self.pos].isdigit():
                    self._advance()
            else:
                text = src[start : self.pos]
                self._error(f"malformed number {text!r}", line, col, max(1, self.pos - start))
                self.tokens.append(_Token(_T.NUMBER, text, line, col, 0.0))
                return
        text = src[start : self.pos]
        try:
            number = float(text)
        except ValueError:  # pragma: no cover - grammar prevents this
            self._error(f"malformed number {text!r}", line, col, len(text))
            number = 0.0
        self.tokens.append(_Token(_T.NUMBER, text, line, col, number))

    def _lex_string(self, line: int, col: int) -> None:
        src = self.src
        self._advance()  # opening quote
        parts: list[str] = []
        while True:
            if self.pos >= len(src) or src[self.pos] == "\n":
                self._error("unterminated string", line, col)
                break
            ch = src[self.pos]
            if ch == '"':
                self._advance()
                break
            if ch == "\\":
                esc_line, esc_col = self.line, self.col
                self._advance()
                if self.pos >= len(src):
                    self._error("unterminated string", line, col)
                    break
                esc = src[self.pos]
                if esc == "u":
                    hexdigits = src[self.pos + 1 : self.pos + 5]
                    if len(hexdigits) == 4 and all(c in "0123456789abcdefABCDEF" for c in hexdigits):
                        parts.append(chr(int(hexdigits, 16)))
                        self._advance(5)
                    else:
                        self._error("bad \\u escape", esc_line, esc_col, 2)
                        self._advance()
                    continue
                mapped = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}.get(esc)
                if mapped is None:
                    self._error(f"unknown escape \\{esc}", esc_line, esc_col, 2)
                    self._advance()
                    continue
                parts.append(mapped)
                self._advance()
                continue
            parts.append(ch)
            self._advance()
        raw = "".join(parts)
        self.tokens.append(_Token(_T.STRING, '"' + raw + '"', line, col, raw))


class _Parser:
    """Single-pass parser with boundary resynchronisation."""

    _DECL_SYNC = {_T.VAR, _T.RULE, _T.RBRACE, _T.RULEBASE, _T.META, _T.GLOBAL, _T.EOF}
    _TOP_SYNC = {_T.RULEBASE, _T.META, _T.GLOBAL, _T.EOF}

    def __init__(self, tokens: list[_Token], errors: list[ParseError]):
        self.tokens = tokens
        self.i = 0
        self.errors = errors

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def _next(self) -> _Token:
        tok = self.cur
        if tok.type is not _T.EOF:
            self.i += 1
        return tok

    def _error(self, message: str, tok: _Token, expected: tuple[str, ...] | None = None) -> None:
        self.errors.append(ParseError(message, tok.span, expected))

    def _expect(self, ttype: _T, what: str | None = None) -> _Token | None:
        if self.cur.type is ttype:
            return self._next()
        label = what or ttype.value
        self._error(f"expected {label}, found {self._describe(self.cur)}", self.cur, (label,))
        return None

    @staticmethod
    def _describe(tok: _Token) -> str:
        if tok.type is _T.EOF:
            return "end of input"
        return repr(tok.text)

    def _sync(self, stop: set[_T]) -> None:
        while self.cur.type not in stop:
            self._next()

    # -- grammar -----------------------------------------------------------

    def parse(self) -> KnowledgeBase:
        rulebases: list[RuleBase] = []
        meta_rules: list[MetaRule] = []
        global_decls: list[VariableDecl] = []
        seen_meta = seen_global = False
        while self.cur.type is not _T.EOF:
            tok = self.cur
            if tok.type is _T.RULEBASE:
                rb = self._parse_rulebase()
                if rb is not None:
                    rulebases.append(rb)
            elif tok.type is _T.META:
                if seen_meta:
                    self._error("duplicate meta block", tok)
                seen_meta = True
                meta_rules.extend(self._parse_meta_block())
            elif tok.type is _T.GLOBAL:
                if seen_global:
                    self._error("duplicate global block", tok)
                seen_global = True
                global_decls.extend(self._parse_global_block())
            else:
                self._error(
                    f"expected 'rulebase', 'meta' or 'global', found {self._describe(tok)}",
                    tok,
                    ("'rulebase'", "'meta'", "'global'"),
                )
                self._next()
                self._sync(self._TOP_SYNC)
        return KnowledgeBase(
            id=DEFAULT_KB_ID,
            version=DEFAULT_KB_VERSION,
            global_declarations=tuple(global_decls),
            meta_rules=tuple(meta_rules),
            rulebases=tuple(rulebases),
        )

    def _parse_rulebase(self) -> RuleBase | None:
        start = self._next()  # 'rulebase'
        name = self._expect(_T.IDENT, "rule base name")
        if name is None:
            self._sync(self._TOP_SYNC)
            return None
        if self._expect(_T.LBRACE) is None:
            self._sync(self._TOP_SYNC)
            return None
        decls: list[VariableDecl] = []
        rules: list[Rule] = []
        while True:
            tok = self.cur
            if tok.type is _T.RBRACE:
                self._next()
                break
            if tok.type is _T.EOF:
                self._error("unclosed rule base: expected '}'", tok, ("'}'",))
                break
            if tok.type is _T.VAR:
                d = self._parse_decl()
                if d is not None:
                    decls.append(d)
            elif tok.type is _T.RULE:
                r = self._parse_rule(len(rules))
                if r is not None:
                    rules.append(r)
            else:
                self._error(
                    f"expected 'var', 'rule' or '}}', found {self._describe(tok)}",
                    tok,
                    ("'var'", "'rule'", "'}'"),
                )
                self._next()
                self._sync(self._DECL_SYNC)
                if self.cur.type in (_T.RULEBASE, _T.META, _T.GLOBAL):
                    # missing closing brace; treat the rule base as ended
                    break
        assert isinstance(name.value, str)
        return RuleBase(id=name.value, declarations=tuple(decls), rules=tuple(rules), span=start.span)

    def _parse_decl(self) -> VariableDecl | None:
        start = self._next()  # 'var'
        name = self._expect(_T.IDENT, "variable name")
        if name is None or self._expect(_T.COLON) is None:
            self._sync(self._DECL_SYNC)
            return None
        kind_tok = self.cur
        kind = _KIND_TOKENS.get(kind_tok.type)
        if kind is None:
            self._error(
                f"expected a kind (bool, number, text, symbol), found {self._describe(kind_tok)}",
                kind_tok,
                ("'bool'", "'number'", "'text'", "'symbol'"),
            )
            self._sync(self._DECL_SYNC)
            return None
        self._next()
        symbol_set: tuple[str, ...] | None = None
        if self.cur.type is _T.LBRACE:
            self._next()
            members: list[str] = []
            first = self._expect(_T.IDENT, "symbol name")
            if first is None:
                self._sync(self._DECL_SYNC)
                return None
            assert isinstance(first.value, str)
            members.append(first.value)
            while self.cur.type is _T.COMMA:
                self._next()
                m = self._expect(_T.IDENT, "symbol name")
                if m is None:
                    self._sync(self._DECL_SYNC)
                    return None
                assert isinstance(m.value, str)
                members.append(m.value)
            if self._expect(_T.RBRACE) is None:
                self._sync(self._DECL_SYNC)
                return None
            symbol_set = tuple(members)
        askable = False
        prompt: str | None = None
        if self.cur.type is _T.ASK:
            self._next()
            p = self._expect(_T.STRING, "question text")
            if p is None:
                self._sync(self._DECL_SYNC)
                return None
            askable = True
            assert isinstance(p.value, str)
            prompt = p.value
        assert isinstance(name.value, str)
        return VariableDecl(
            name=name.value,
            kind=kind,
            symbol_set=symbol_set,
            askable=askable,
            prompt=prompt,
            span=start.span,
        )

    def _parse_rule(self, order_index: int) -> Rule | None:
        start = self._next()  # 'rule'
        name = self._expect(_T.IDENT, "rule name")
        if name is None or self._expect(_T.COLON) is None or self._expect(_T.IF) is None:
            self._sync(self._DECL_SYNC)
            return None
        conds: list[Condition] = []
        first = self._parse_condition()
        if first is None:
            self._sync(self._DECL_SYNC)
            return None
        conds.append(first)
        while self.cur.type is _T.AND:
            self._next()
            c = self._parse_condition()
            if c is None:
                self._sync(self._DECL_SYNC)
                return None
            conds.append(c)
        if self._expect(_T.THEN) is None:
            self._sync(self._DECL_SYNC)
            return None
        assigns: list[Assignment] = []
        a = self._parse_assignment()
        if a is None:
            self._sync(self._DECL_SYNC)
            return None
        assigns.append(a)
        while self.cur.type is _T.AND:
            self._next()
            a = self._parse_assignment()
            if a is None:
                self._sync(self._DECL_SYNC)
                return None
            assigns.append(a)
        recommendation: str | None = None
        if self.cur.type is _T.RECOMMEND:
            self._next()
            rec = self._expect(_T.STRING, "recommendation text")
            if rec is None:
                self._sync(self._DECL_SYNC)
                return None
            assert isinstance(rec.value, str)
            recommendation = rec.value
        assert isinstance(name.value, str)
        return Rule(
            id=name.value,
            order_index=order_index,
            antecedents=tuple(conds),
            consequents=tuple(assigns),
            recommendation=recommendation,
            span=start.span,
        )

    def _parse_condition(self) -> Condition | None:
        var = self._expect(_T.IDENT, "variable name")
        if var is None:
            return None
        tok = self.cur
        if tok.type is _T.IN:
            self._next()
            if self._expect(_T.LBRACE) is None:
                return None
            values: list[Value] = []
            v = self._parse_value()
            if v is None:
                return None
            values.append(v)
            while self.cur.type is _T.COMMA:
                self._next()
                v = self._parse_value()
                if v is None:
                    return None
                values.append(v)
            if self._expect(_T.RBRACE) is None:
                return None
            assert isinstance(var.value, str)
            return Condition(var.value, Operator.IN, tuple(values), span=var.span)
        op = _COMPARISONS.get(tok.type)
        if op is None:
            self._error(
                f"expected a comparison operator, found {self._describe(tok)}",
                tok,
                ("'='", "'!='", "'<'", "'<='", "'>'", "'>='", "'in'"),
            )
            return None
        self._next()
        v = self._parse_value()
        if v is None:
            return None
        assert isinstance(var.value, str)
        return Condition(var.value, op, v, span=var.span)

    def _parse_assignment(self) -> Assignment | None:
        var = self._expect(_T.IDENT, "variable name")
        if var is None:
            return None
        if self._expect(_T.ASSIGN) is None:
            return None
        v = self._parse_value()
        if v is None:
            return None
        assert isinstance(var.value, str)
        return Assignment(var.value, v, span=var.span)

    def _parse_value(self) -> Value | None:
        tok = self.cur
        if tok.type is _T.TRUE:
            self._next()
            return Value.boolean(True)
        if tok.type is _T.FALSE:
            self._next()
            return Value.boolean(False)
        if tok.type is _T.NUMBER:
            self._next()
            assert isinstance(tok.value, float)
            return Value.number(tok.value)
        if tok.type is _T.STRING:
            self._next()
            assert isinstance(tok.value, str)
            return Value.text(tok.value)
        if tok.type is _T.IDENT:
            self._next()
            assert isinstance(tok.value, str)
            return Value.symbol(tok.value)
        self._error(f"expected value, found {self._describe(tok)}", tok, ("value",))
        return None

    def _parse_meta_block(self) -> list[MetaRule]:
        self._next()  # 'meta'
        out: list[MetaRule] = []
        if self._expect(_T.LBRACE) is None:
            self._sync(self._TOP_SYNC)
            return out
        while True:
            tok = self.cur
            if tok.type is _T.RBRACE:
                self._next()
                return out
            if tok.type is _T.EOF:
                self._error("unclosed meta block: expected '}'", tok, ("'}'",))
                return out
            if tok.type is not _T.WHEN:
                self._error(
                    f"expected 'when' or '}}', found {self._describe(tok)}", tok, ("'when'", "'}'")
                )
                self._next()
                self._sync({_T.WHEN, _T.RBRACE, _T.EOF})
                continue
            start = self._next()
            conds: list[Condition] = []
            c = self._parse_condition()
            if c is None:
                self._sync({_T.WHEN, _T.RBRACE, _T.EOF})
                continue
            conds.append(c)
            ok = True
            while self.cur.type is _T.AND:
                self._next()
                c = self._parse_condition()
                if c is None:
                    ok = False
                    break
                conds.append(c)
            if not ok:
                self._sync({_T.WHEN, _T.RBRACE, _T.EOF})
                continue
            if self._expect(_T.USE) is None:
                self._sync({_T.WHEN, _T.RBRACE, _T.EOF})
                continue
            target = self._expect(_T.IDENT, "rule base name")
            if target is None:
                self._sync({_T.WHEN, _T.RBRACE, _T.EOF})
                continue
            assert isinstance(target.value, str)
            out.append(MetaRule(tuple(conds), target.value, span=start.span))

    def _parse_global_block(self) -> list[VariableDecl]:
        self._next()  # 'global'
        out: list[VariableDecl] = []
        if self._expect(_T.LBRACE) is None:
            self._sync(self._TOP_SYNC)
            return out
        while True:
            tok = self.cur
            if tok.type is _T.RBRACE:
                self._next()
                return out
            if tok.type is _T.EOF:
                self._error("unclosed global block: expected '}'", tok, ("'}'",))
                return out
            if tok.type is not _T.VAR:
                self._error(
                    f"expected 'var' or '}}', found {self._describe(tok)}", tok, ("'var'", "'}'")
                )
                self._next()
                self._sync({_T.VAR, _T.RBRACE, _T.EOF})
                continue
            d = self._parse_decl()
            if d is not None:
                out.append(d)


def parse_value_text(text: str) -> Value:
    """Parse one value literal (true, 3.5, "quoted text", symbol_name)."""
    lexer = _Lexer(text)
    lexer.run()
    if lexer.errors:
        raise ValueError(lexer.errors[0].message)
    parser = _Parser(lexer.tokens, [])
    value = parser._parse_value()
    if value is None or parser.errors or parser.cur.type is not _T.EOF:
        raise ValueError(f"not a value literal: {text.strip()!r}")
    return value


def _decode_source(source: Union[str, bytes]) -> tuple[str, ParseError | None]:
    if isinstance(source, str):
        return source, None
    try:
        return source.decode("utf-8"), None
    except UnicodeDecodeError as exc:
        prefix = source[: exc.start].decode("utf-8", errors="replace")
        line = prefix.count("\n") + 1
        column = len(prefix) - (prefix.rfind("\n") + 1) + 1
        return "", ParseError(
            f"input is not valid UTF-8 at byte {exc.start}", SourceSpan(line, column, 1)
        )


def parse_kb(source: Union[str, bytes]) -> KnowledgeBase:
    """Parse rule-language text into a knowledge base.

    Raises :class:`ParseFailure` with one or more positioned errors on any
    syntactic problem; semantic validation is a separate step.
    """
    text, encoding_error = _decode_source(source)
    if encoding_error is not None:
        raise ParseFailure([encoding_error])
    lexer = _Lexer(text)
    lexer.run()
    parser = _Parser(lexer.tokens, list(lexer.errors))
    kb = parser.parse()
    if parser.errors:
        errors = sorted(parser.errors, key=lambda e: (e.span.line, e.span.column))
        raise ParseFailure(errors)
    return kb


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------


def _decl_line(d: VariableDecl) -> str:
    parts = [f"var {d.name}: {_KIND_KEYWORDS[d.kind]}"]
    if d.symbol_set is not None:
        parts.append(" {" + ", ".join(d.symbol_set) + "}")
    if d.askable:
        parts.append(f" ask {quote_text(d.prompt or '')}")
    return "".join(parts)


def _rule_line(r: Rule) -> str:
    conds = " and ".join(condition_text(c) for c in r.antecedents)
    assigns = " and ".join(f"{a.variable} := {value_text(a.value)}" for a in r.consequents)
    line = f"rule {r.id}: if {conds} then {assigns}"
    if r.recommendation is not None:
        line += f" recommend {quote_text(r.recommendation)}"
    return line


def serialize_kb(kb: KnowledgeBase) -> str:
    """Canonical text form: fixed spacing, two-space indents, source order.

    ``parse_kb(serialize_kb(kb))`` reproduces the knowledge content, and the
    output is a fixed point: serializing a parse of it is byte-identical.
    An entirely empty knowledge base serializes to the empty string.
    """
    lines: list[str] = []
    for rb in kb.rulebases:
        lines.append(f"rulebase {rb.id} {{")
        for d in rb.declarations:
            lines.append("  " + _decl_line(d))
        for r in sorted(rb.rules, key=lambda r: r.order_index):
            lines.append("  " + _rule_line(r))
        lines.append("}")
    if kb.meta_rules:
        lines.append("meta {")
        for m in kb.meta_rules:
            conds = " and ".join(condition_text(c) for c in m.antecedents)
            lines.append(f"  when {conds} use {m.target_rulebase}")
        lines.append("}")
    if kb.global_declarations:
        lines.append("global {")
        for d in kb.global_declarations:
            lines.append("  " + _decl_line(d))
        lines.append("}")
    if not lines:
        return ""
    return "\n".join(lines) + "\n"
