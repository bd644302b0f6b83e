"""Lexer, recursive-descent parser, validator and pretty-printer for ``.frost`` text.

Grammar (``;`` terminates definitions, ``//`` starts a line comment)::

    document    := { "policy" NAME "=" policy ";" }
    policy      := ruleblock | case | NAME | decision | "(" policy ")"
    ruleblock   := rule { ";" rule }
    rule        := ("grant" | "deny") "if" cond
    case        := "case" "{" arm { arm } "}"
    arm         := "[" guard ":" policy "]"
    guard       := "true" | policy "eval" decision { "&&" policy "eval" decision }
    decision    := "grant" | "deny" | "conflict" | "undef"
    cond        := disj ;  disj := conj { "||" conj } ;  conj := neg { "&&" neg }
    neg         := "!" neg | "(" cond ")" | operand relop operand

Bare decision literals desugar to rule blocks over the reserved constants
``TAUT``/``CONTRA`` (see :func:`frost.core.constant_policy`).
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional, Union

from .core import (
    ORDERABLE,
    And,
    Atom,
    AttrPath,
    Case,
    CaseArm,
    Condition,
    Const,
    Decision,
    Definition,
    GuardConj,
    GuardTest,
    GuardTrue,
    Not,
    Op,
    Or,
    Policy,
    PolicyDocument,
    Ref,
    Rule,
    RuleBlock,
    Span,
    Value,
    as_constant,
    constant_policy,
    iter_atoms,
)

KEYWORDS = frozenset(
    {"grant", "deny", "conflict", "undef", "if", "case", "eval", "true", "false", "policy"}
)
RESERVED_NAMES = frozenset({"TAUT", "CONTRA"})
DECISION_WORDS = {d.value: d for d in Decision}


class TokenKind(enum.Enum):
    KEYWORD = "keyword"
    IDENT = "identifier"
    INTEGER = "integer-literal"
    DECIMAL = "decimal-literal"
    STRING = "string-literal"
    TIME = "time-literal"
    OPERATOR = "operator"
    PUNCT = "punctuation"
    EOF = "end of input"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    lexeme: str
    span: Span

    def is_(self, lexeme: str) -> bool:
        return self.kind in (TokenKind.KEYWORD, TokenKind.OPERATOR, TokenKind.PUNCT) and self.lexeme == lexeme


class ParseError(Exception):
    def __init__(self, span: Span, message: str, expected: frozenset[str] = frozenset()):
        self.span = span
        self.message = message
        self.expected = expected
        detail = f" (expected {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{span.line}:{span.column}: {message}{detail}")


@dataclass(frozen=True)
class SemanticError:
    span: Optional[Span]
    message: str

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span is not None else ""
        return f"{where}{self.message}"


# ---------------------------------------------------------------------------
# lexer

_LEX = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<number>-?[0-9]+(?:\.[0-9]+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<op>==|!=|<=|>=|&&|\|\||<|>|!)
  | (?P<punct>[{}\[\]():=;.])
    """,
    re.VERBOSE,
)
_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


def tokenize(source: str) -> list[Token]:
    """Split ``source`` into tokens, longest match first. Whitespace and comments are dropped."""
    tokens: list[Token] = []
    pos, line, col = 0, 1, 1
    n = len(source)
    while pos < n:
        m = _LEX.match(source, pos)
        span = Span(line, col, 1, pos)
        if m is None:
            if source[pos] == '"':
                raise ParseError(span, "unterminated string literal")
            raise ParseError(span, f"illegal character {source[pos]!r}")
        kind = m.lastgroup
        text = m.group()
        span = Span(line, col, len(text), pos)
        if kind == "number":
            tokens.append(_number(text, span))
        elif kind == "ident":
            tokens.append(Token(TokenKind.KEYWORD if text in KEYWORDS else TokenKind.IDENT, text, span))
        elif kind == "string":
            _unescape(text, span)
            tokens.append(Token(TokenKind.STRING, text, span))
        elif kind == "op":
            tokens.append(Token(TokenKind.OPERATOR, text, span))
        elif kind == "punct":
            tokens.append(Token(TokenKind.PUNCT, text, span))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    return tokens


def _number(text: str, span: Span) -> Token:
    if "." in text:
        return Token(TokenKind.DECIMAL, text, span)
    if len(text) == 4 and text.isdigit():
        if int(text[:2]) >= 24 or int(text[2:]) >= 60:
            raise ParseError(span, f"malformed time literal {text!r}: expected HHMM with HH<24 and MM<60")
        return Token(TokenKind.TIME, text, span)
    if not -(2**63) <= int(text) < 2**63:
        raise ParseError(span, f"integer literal {text} does not fit in 64 bits")
    return Token(TokenKind.INTEGER, text, span)


def _unescape(text: str, span: Span) -> str:
    out = []
    i = 1
    while i < len(text) - 1:
        ch = text[i]
        if ch == "\\":
            esc = text[i + 1]
            if esc not in _ESCAPES:
                raise ParseError(span, f"unknown escape sequence \\{esc}")
            out.append(_ESCAPES[esc])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def literal_value(tok: Token) -> Value:
    if tok.kind is TokenKind.INTEGER:
        return Value.integer(int(tok.lexeme))
    if tok.kind is TokenKind.DECIMAL:
        return Value.decimal(Decimal(tok.lexeme))
    if tok.kind is TokenKind.STRING:
        return Value.string(_unescape(tok.lexeme, tok.span))
    if tok.kind is TokenKind.TIME:
        return Value.time(int(tok.lexeme[:2]), int(tok.lexeme[2:]))
    if tok.lexeme in ("true", "false"):
        return Value.boolean(tok.lexeme == "true")
    raise ValueError(f"{tok.lexeme!r} is not a literal")


# ---------------------------------------------------------------------------
# parser

_OPS = {op.value: op for op in Op}
_LITERAL_KINDS = (TokenKind.INTEGER, TokenKind.DECIMAL, TokenKind.STRING, TokenKind.TIME)


class _Parser:
    def __init__(self, tokens: list[Token], source_end: Optional[Span] = None):
        self.tokens = tokens
        self.pos = 0
        if source_end is None:
            if tokens:
                last = tokens[-1].span
                source_end = Span(last.line, last.column + last.length, 0, last.offset + last.length)
            else:
                source_end = Span(1, 1, 0, 0)
        self.eof = Token(TokenKind.EOF, "", source_end)

    def peek(self, k: int = 0) -> Token:
        i = self.pos + k
        return self.tokens[i] if i < len(self.tokens) else self.eof

    def advance(self) -> Token:
        tok = self.peek()
        if tok.kind is not TokenKind.EOF:
            self.pos += 1
        return tok

    def fail(self, message: str, *expected: str) -> ParseError:
        tok = self.peek()
        found = "end of input" if tok.kind is TokenKind.EOF else repr(tok.lexeme)
        return ParseError(tok.span, f"{message}, found {found}", frozenset(expected))

    def expect(self, lexeme: str) -> Token:
        if not self.peek().is_(lexeme):
            raise self.fail(f"expected '{lexeme}'", f"'{lexeme}'")
        return self.advance()

    def name(self) -> Token:
        tok = self.peek()
        if tok.kind is not TokenKind.IDENT:
            raise self.fail("expected a policy name", "identifier")
        if tok.lexeme in RESERVED_NAMES:
            raise ParseError(tok.span, f"{tok.lexeme} is reserved")
        return self.advance()

    # -- document level

    def document(self) -> PolicyDocument:
        defs = []
        while self.peek().kind is not TokenKind.EOF:
            if not self.peek().is_("policy"):
                raise self.fail("expected a policy definition", "'policy'", "end of input")
            self.advance()
            name = self.name()
            self.expect("=")
            body = self.policy()
            self.expect(";")
            defs.append(Definition(name.lexeme, body, name.span))
        return PolicyDocument(tuple(defs))

    def policy(self) -> Policy:
        tok = self.peek()
        if tok.is_("("):
            self.advance()
            inner = self.policy()
            self.expect(")")
            return inner
        if tok.is_("case"):
            return self.case()
        if tok.is_("grant") or tok.is_("deny"):
            if self.peek(1).is_("if"):
                return self.ruleblock()
            self.advance()
            return constant_policy(DECISION_WORDS[tok.lexeme])
        if tok.is_("conflict") or tok.is_("undef"):
            self.advance()
            return constant_policy(DECISION_WORDS[tok.lexeme])
        if tok.kind is TokenKind.IDENT:
            name = self.name()
            if self.peek().is_("."):
                raise self.fail("policy names are single identifiers")
            return Ref(name.lexeme, name.span)
        raise self.fail(
            "expected a policy", "'grant'", "'deny'", "'conflict'", "'undef'", "'case'", "'('", "identifier"
        )

    def ruleblock(self) -> RuleBlock:
        rules = [self.rule()]
        while (
            self.peek().is_(";")
            and (self.peek(1).is_("grant") or self.peek(1).is_("deny"))
            and self.peek(2).is_("if")
        ):
            self.advance()
            rules.append(self.rule())
        return RuleBlock(tuple(rules))

    def rule(self) -> Rule:
        effect = DECISION_WORDS[self.advance().lexeme]
        self.expect("if")
        return Rule(effect, self.condition())

    def case(self) -> Case:
        self.expect("case")
        self.expect("{")
        arms = []
        while self.peek().is_("["):
            self.advance()
            guard = self.guard()
            self.expect(":")
            body = self.policy()
            self.expect("]")
            arms.append(CaseArm(guard, body))
        if not arms:
            raise self.fail("case statement needs at least one arm", "'['")
        self.expect("}")
        return Case(tuple(arms))

    def guard(self):
        if self.peek().is_("true"):
            self.advance()
            return GuardTrue()
        tests = [self.guard_test()]
        while self.peek().is_("&&"):
            self.advance()
            tests.append(self.guard_test())
        return GuardConj(tuple(tests))

    def guard_test(self) -> GuardTest:
        policy = self.policy()
        self.expect("eval")
        return GuardTest(policy, self.decision())

    def decision(self) -> Decision:
        tok = self.peek()
        if tok.kind is TokenKind.KEYWORD and tok.lexeme in DECISION_WORDS:
            self.advance()
            return DECISION_WORDS[tok.lexeme]
        raise self.fail("expected a decision", "'grant'", "'deny'", "'conflict'", "'undef'")

    # -- conditions

    def condition(self) -> Condition:
        left = self.conjunction()
        while self.peek().is_("||"):
            self.advance()
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Condition:
        left = self.negation()
        while self.peek().is_("&&"):
            self.advance()
            left = And(left, self.negation())
        return left

    def negation(self) -> Condition:
        if self.peek().is_("!"):
            self.advance()
            return Not(self.negation())
        if self.peek().is_("("):
            self.advance()
            inner = self.condition()
            self.expect(")")
            return inner
        return self.atom()

    def atom(self) -> Atom:
        start = self.peek().span
        lhs = self.operand()
        tok = self.peek()
        if not (tok.kind is TokenKind.OPERATOR and tok.lexeme in _OPS):
            raise self.fail("expected a comparison operator", *(f"'{o}'" for o in _OPS))
        self.advance()
        op = _OPS[tok.lexeme]
        rhs = self.operand()
        end = self.tokens[self.pos - 1].span
        span = Span(start.line, start.column, end.offset + end.length - start.offset, start.offset)
        if isinstance(lhs, Value):
            if isinstance(rhs, Value):
                raise ParseError(span, "comparison needs at least one attribute path")
            lhs, op, rhs = rhs, op.mirrored, lhs
        return Atom(lhs, op, rhs, span)

    def operand(self) -> Union[AttrPath, Value]:
        tok = self.peek()
        if tok.kind in _LITERAL_KINDS or tok.is_("true") or tok.is_("false"):
            self.advance()
            return literal_value(tok)
        if tok.kind is TokenKind.IDENT:
            segs = [self.advance().lexeme]
            while self.peek().is_("."):
                self.advance()
                seg = self.peek()
                if seg.kind is not TokenKind.IDENT:
                    raise self.fail("expected a path segment", "identifier")
                segs.append(self.advance().lexeme)
            if len(segs) == 1 and segs[0] in RESERVED_NAMES:
                raise ParseError(tok.span, f"{segs[0]} is reserved")
            return AttrPath(tuple(segs))
        raise self.fail("expected an attribute path or literal", "identifier", "literal")

    def finish(self) -> None:
        if self.peek().kind is not TokenKind.EOF:
            raise self.fail("unexpected trailing input", "end of input")


def parse_document(tokens: list[Token]) -> PolicyDocument:
    p = _Parser(tokens)
    return p.document()


def parse(source: str) -> PolicyDocument:
    """Tokenize and parse a whole document (no semantic validation)."""
    return parse_document(tokenize(source))


def parse_policy(source: str) -> Policy:
    """Parse a single policy expression such as ``case { [L eval undef : R] [true : L] }``."""
    p = _Parser(tokenize(source))
    out = p.policy()
    p.finish()
    return out


def parse_atom(source: str) -> Atom:
    p = _Parser(tokenize(source))
    out = p.atom()
    p.finish()
    return out


def load(source: str) -> PolicyDocument:
    """Parse and validate; raises :class:`ValidationError` listing every semantic problem."""
    doc = parse(source)
    errors = validate_document(doc)
    if errors:
        raise ValidationError(errors)
    return doc


class ValidationError(Exception):
    def __init__(self, errors: list[SemanticError]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors))


# ---------------------------------------------------------------------------
# validation


def _refs(policy: Policy, out: list[Ref]) -> list[Ref]:
    if isinstance(policy, Ref):
        out.append(policy)
    elif isinstance(policy, Case):
        for arm in policy.arms:
            if isinstance(arm.guard, GuardConj):
                for t in arm.guard.tests:
                    _refs(t.policy, out)
            _refs(arm.body, out)
    return out


def _atoms(policy: Policy):
    if isinstance(policy, RuleBlock):
        for rule in policy.rules:
            yield from iter_atoms(rule.condition)
    elif isinstance(policy, Case):
        for arm in policy.arms:
            if isinstance(arm.guard, GuardConj):
                for t in arm.guard.tests:
                    yield from _atoms(t.policy)
            yield from _atoms(arm.body)


def referenced_names(policy: Policy) -> list[str]:
    return [r.name for r in _refs(policy, [])]


def validate_document(doc: PolicyDocument) -> list[SemanticError]:
    """All semantic violations, in document order. An empty list means the document is valid."""
    errors: list[SemanticError] = []
    seen: dict[str, Definition] = {}
    for d in doc.definitions:
        if d.name in seen:
            errors.append(SemanticError(d.span, f"duplicate policy name {d.name!r}"))
        else:
            seen[d.name] = d
    graph: dict[str, list[str]] = {name: [] for name in seen}
    for d in doc.definitions:
        for ref in _refs(d.policy, []):
            if ref.name not in seen:
                errors.append(SemanticError(ref.span, f"unresolved reference {ref.name!r} in policy {d.name!r}"))
            elif seen[d.name] is d:
                graph[d.name].append(ref.name)
        for atom in _atoms(d.policy):
            if atom.op.is_ordering and isinstance(atom.rhs, Value) and atom.rhs.kind not in ORDERABLE:
                errors.append(
                    SemanticError(
                        atom.span,
                        f"operator {atom.op.value} needs an orderable operand, got {atom.rhs.kind.value} literal",
                    )
                )
    errors.extend(_cycles(graph, seen))
    return errors


def _cycles(graph: dict[str, list[str]], defs: dict[str, Definition]) -> list[SemanticError]:
    white, grey, black = 0, 1, 2
    color = {n: white for n in graph}
    errors = []

    def visit(node: str, stack: list[str]) -> None:
        color[node] = grey
        stack.append(node)
        for nxt in graph[node]:
            if color[nxt] == grey:
                cycle = stack[stack.index(nxt):] + [nxt]
                errors.append(SemanticError(defs[nxt].span, "reference cycle: " + " -> ".join(cycle)))
            elif color[nxt] == white:
                visit(nxt, stack)
        stack.pop()
        color[node] = black

    for n in graph:
        if color[n] == white:
            visit(n, [])
    return errors


# ---------------------------------------------------------------------------
# pretty-printer


def format_condition(cond: Condition, context: int = 0) -> str:
    """Render with minimal parentheses; ``context`` is the binding strength of the parent."""
    if isinstance(cond, Atom):
        return cond.render()
    if isinstance(cond, Or):
        text = format_condition(cond.left, 1) + " || " + format_condition(cond.right, 2)
        return f"({text})" if context > 1 else text
    if isinstance(cond, And):
        text = format_condition(cond.left, 2) + " && " + format_condition(cond.right, 3)
        return f"({text})" if context > 2 else text
    if isinstance(cond, Not):
        if isinstance(cond.operand, Not):
            return "!" + format_condition(cond.operand, 3)
        return "!(" + format_condition(cond.operand, 0) + ")"
    if isinstance(cond, Const):
        raise ValueError(f"{cond} only appears inside decision literals")
    raise TypeError(f"not a condition: {cond!r}")


def format_policy(policy: Policy, indent: int = 0, in_guard: bool = False) -> str:
    const = as_constant(policy)
    if const is not None:
        return const.value
    if isinstance(policy, Ref):
        return policy.name
    if isinstance(policy, RuleBlock):
        text = "; ".join(f"{r.effect.value} if {format_condition(r.condition)}" for r in policy.rules)
        # a rule's condition would swallow the guard's "&&"
        return f"({text})" if in_guard else text
    if isinstance(policy, Case):
        pad = "  " * (indent + 1)
        lines = ["case {"]
        for arm in policy.arms:
            if isinstance(arm.guard, GuardTrue):
                guard = "true"
            else:
                guard = " && ".join(
                    f"{format_policy(t.policy, indent + 1, in_guard=True)} eval {t.expected.value}"
                    for t in arm.guard.tests
                )
            lines.append(f"{pad}[{guard} : {format_policy(arm.body, indent + 1)}]")
        lines.append("  " * indent + "}")
        return "\n".join(lines)
    raise TypeError(f"not a policy: {policy!r}")


def pretty_print(doc: PolicyDocument) -> str:
    return "".join(f"policy {d.name} = {format_policy(d.policy)};\n" for d in doc.definitions)
