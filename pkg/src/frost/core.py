"""Policy syntax tree, the four-valued decision space and the reference interpreter."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from decimal import Decimal
from functools import cached_property
from typing import Callable, Iterator, Mapping, Optional, Union


class Decision(enum.Enum):
    """Belnap decision, encoded as a (grant-bit, deny-bit) pair."""

    GRANT = "grant"
    DENY = "deny"
    CONFLICT = "conflict"
    UNDEF = "undef"

    @property
    def bits(self) -> tuple[int, int]:
        return _DECISION_BITS[self]

    @property
    def g(self) -> int:
        return _DECISION_BITS[self][0]

    @property
    def d(self) -> int:
        return _DECISION_BITS[self][1]

    @classmethod
    def from_bits(cls, g: int, d: int) -> "Decision":
        return _BITS_DECISION[(int(bool(g)), int(bool(d)))]

    def __str__(self) -> str:
        return self.value


_DECISION_BITS = {
    Decision.GRANT: (1, 0),
    Decision.DENY: (0, 1),
    Decision.CONFLICT: (1, 1),
    Decision.UNDEF: (0, 0),
}
_BITS_DECISION = {bits: dec for dec, bits in _DECISION_BITS.items()}


def knowledge_join(a: Decision, b: Decision) -> Decision:
    """Least upper bound in the information order (bitwise OR of the pairs)."""
    ag, ad = a.bits
    bg, bd = b.bits
    return _BITS_DECISION[(ag | bg, ad | bd)]


class Kleene(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    def __invert__(self) -> "Kleene":
        if self is Kleene.TRUE:
            return Kleene.FALSE
        if self is Kleene.FALSE:
            return Kleene.TRUE
        return Kleene.UNKNOWN

    def __and__(self, other: "Kleene") -> "Kleene":
        if self is Kleene.FALSE or other is Kleene.FALSE:
            return Kleene.FALSE
        if self is Kleene.TRUE and other is Kleene.TRUE:
            return Kleene.TRUE
        return Kleene.UNKNOWN

    def __or__(self, other: "Kleene") -> "Kleene":
        if self is Kleene.TRUE or other is Kleene.TRUE:
            return Kleene.TRUE
        if self is Kleene.FALSE and other is Kleene.FALSE:
            return Kleene.FALSE
        return Kleene.UNKNOWN

    @classmethod
    def of(cls, flag: bool) -> "Kleene":
        return cls.TRUE if flag else cls.FALSE


# ---------------------------------------------------------------------------
# attribute paths and values

_SEGMENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Span:
    line: int
    column: int
    length: int
    offset: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class AttrPath:
    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("attribute path must have at least one segment")
        for seg in self.segments:
            if not _SEGMENT.match(seg):
                raise ValueError(f"invalid path segment {seg!r}")

    @classmethod
    def parse(cls, text: str) -> "AttrPath":
        return cls(tuple(text.split(".")))

    @property
    def root(self) -> str:
        return self.segments[0]

    def __str__(self) -> str:
        return ".".join(self.segments)


class ValueKind(enum.Enum):
    INTEGER = "integer"
    DECIMAL = "decimal"
    STRING = "string"
    BOOLEAN = "boolean"
    TIME = "time"


ORDERABLE = frozenset({ValueKind.INTEGER, ValueKind.DECIMAL, ValueKind.TIME})

_INT64_MIN, _INT64_MAX = -(2**63), 2**63 - 1


@dataclass(frozen=True)
class Value:
    """A tagged literal. The tag takes part in equality, so ``true`` never equals ``1``."""

    kind: ValueKind
    raw: Union[int, Decimal, str, bool]

    def __post_init__(self) -> None:
        k, raw = self.kind, self.raw
        if k is ValueKind.BOOLEAN:
            ok = isinstance(raw, bool)
        elif k is ValueKind.INTEGER:
            ok = isinstance(raw, int) and not isinstance(raw, bool) and _INT64_MIN <= raw <= _INT64_MAX
        elif k is ValueKind.DECIMAL:
            ok = isinstance(raw, Decimal) and raw.is_finite()
        elif k is ValueKind.STRING:
            ok = isinstance(raw, str)
        else:
            ok = isinstance(raw, int) and not isinstance(raw, bool) and 0 <= raw <= 1439
        if not ok:
            raise ValueError(f"invalid {k.value} value {raw!r}")

    @classmethod
    def integer(cls, n: int) -> "Value":
        return cls(ValueKind.INTEGER, n)

    @classmethod
    def decimal(cls, d: Union[str, Decimal]) -> "Value":
        return cls(ValueKind.DECIMAL, Decimal(d))

    @classmethod
    def string(cls, s: str) -> "Value":
        return cls(ValueKind.STRING, s)

    @classmethod
    def boolean(cls, b: bool) -> "Value":
        return cls(ValueKind.BOOLEAN, b)

    @classmethod
    def time(cls, hours: int, minutes: int = 0) -> "Value":
        if not (0 <= hours < 24 and 0 <= minutes < 60):
            raise ValueError(f"invalid time of day {hours:02d}{minutes:02d}")
        return cls(ValueKind.TIME, hours * 60 + minutes)

    @classmethod
    def of(cls, obj: object) -> "Value":
        """Coerce a plain Python scalar; ``Value`` instances pass through."""
        if isinstance(obj, Value):
            return obj
        if isinstance(obj, bool):
            return cls.boolean(obj)
        if isinstance(obj, int):
            return cls.integer(obj)
        if isinstance(obj, Decimal):
            return cls(ValueKind.DECIMAL, obj)
        if isinstance(obj, float):
            return cls.decimal(repr(obj))
        if isinstance(obj, str):
            return cls.string(obj)
        raise TypeError(f"cannot convert {type(obj).__name__} to a policy value")

    def render(self) -> str:
        """Literal text in the surface syntax."""
        k, raw = self.kind, self.raw
        if k is ValueKind.BOOLEAN:
            return "true" if raw else "false"
        if k is ValueKind.INTEGER:
            text = str(abs(raw))
            # a bare four-digit run lexes as a time of day
            if len(text) == 4:
                text = "0" + text
            return ("-" if raw < 0 else "") + text
        if k is ValueKind.DECIMAL:
            text = format(raw, "f")
            if "." not in text:
                text += ".0"
            return text
        if k is ValueKind.STRING:
            return '"' + raw.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'
        h, m = divmod(raw, 60)
        return f"{h:02d}{m:02d}"

    def __str__(self) -> str:
        return self.render()


class Op(enum.Enum):
    EQ = "=="
    NE = "!="
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="

    @property
    def is_ordering(self) -> bool:
        return self not in (Op.EQ, Op.NE)

    @property
    def mirrored(self) -> "Op":
        """Operator with swapped operands: ``a < b`` iff ``b > a``."""
        return _MIRROR[self]


_MIRROR = {Op.EQ: Op.EQ, Op.NE: Op.NE, Op.LT: Op.GT, Op.GT: Op.LT, Op.LE: Op.GE, Op.GE: Op.LE}


def compare(lhs: Optional[Value], op: Op, rhs: Optional[Value]) -> Kleene:
    """Relational test; missing operands and cross-kind or unordered comparisons yield unknown."""
    if lhs is None or rhs is None or lhs.kind is not rhs.kind:
        return Kleene.UNKNOWN
    if op is Op.EQ:
        return Kleene.of(lhs.raw == rhs.raw)
    if op is Op.NE:
        return Kleene.of(lhs.raw != rhs.raw)
    if lhs.kind not in ORDERABLE:
        return Kleene.UNKNOWN
    a, b = lhs.raw, rhs.raw
    if op is Op.LT:
        return Kleene.of(a < b)
    if op is Op.LE:
        return Kleene.of(a <= b)
    if op is Op.GT:
        return Kleene.of(a > b)
    return Kleene.of(a >= b)


# ---------------------------------------------------------------------------
# conditions


@dataclass(frozen=True)
class Atom:
    lhs: AttrPath
    op: Op
    rhs: Union[AttrPath, Value]
    span: Optional[Span] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        # atoms key every valuation lookup; hash the nested fields once
        object.__setattr__(self, "_hash", hash((self.lhs, self.op, self.rhs)))

    def __hash__(self) -> int:
        return self._hash

    def render(self) -> str:
        rhs = str(self.rhs) if isinstance(self.rhs, AttrPath) else self.rhs.render()
        return f"{self.lhs} {self.op.value} {rhs}"

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class Const:
    """Reserved built-in atom: ``TAUT`` when true, ``CONTRA`` when false."""

    value: bool

    def __str__(self) -> str:
        return "TAUT" if self.value else "CONTRA"


TAUT = Const(True)
CONTRA = Const(False)


@dataclass(frozen=True)
class And:
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Or:
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Not:
    operand: "Condition"


Condition = Union[Atom, Const, And, Or, Not]


def conjoin(*conds: Condition) -> Condition:
    """Left-nested conjunction, the shape the parser builds for ``a && b && c``."""
    out = conds[0]
    for c in conds[1:]:
        out = And(out, c)
    return out


def iter_atoms(cond: Condition) -> Iterator[Atom]:
    """Atoms of a condition, left to right."""
    stack = [cond]
    while stack:
        c = stack.pop()
        if isinstance(c, Atom):
            yield c
        elif isinstance(c, (And, Or)):
            stack.append(c.right)
            stack.append(c.left)
        elif isinstance(c, Not):
            stack.append(c.operand)


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class Rule:
    effect: Decision
    condition: Condition

    def __post_init__(self) -> None:
        if self.effect not in (Decision.GRANT, Decision.DENY):
            raise ValueError(f"rule effect must be grant or deny, not {self.effect.value}")


@dataclass(frozen=True)
class RuleBlock:
    rules: tuple[Rule, ...]

    def __post_init__(self) -> None:
        if not self.rules:
            raise ValueError("rule block needs at least one rule")


@dataclass(frozen=True)
class GuardTrue:
    pass


@dataclass(frozen=True)
class GuardTest:
    policy: "Policy"
    expected: Decision


@dataclass(frozen=True)
class GuardConj:
    tests: tuple[GuardTest, ...]

    def __post_init__(self) -> None:
        if not self.tests:
            raise ValueError("guard conjunction needs at least one test")


Guard = Union[GuardTrue, GuardConj]


@dataclass(frozen=True)
class CaseArm:
    guard: Guard
    body: "Policy"


@dataclass(frozen=True)
class Case:
    arms: tuple[CaseArm, ...]

    def __post_init__(self) -> None:
        if not self.arms:
            raise ValueError("case statement needs at least one arm")


@dataclass(frozen=True)
class Ref:
    name: str
    span: Optional[Span] = field(default=None, compare=False, repr=False)


Policy = Union[RuleBlock, Case, Ref]


def constant_policy(decision: Decision) -> RuleBlock:
    """Canonical desugaring of a bare decision literal."""
    if decision is Decision.GRANT:
        return RuleBlock((Rule(Decision.GRANT, TAUT),))
    if decision is Decision.DENY:
        return RuleBlock((Rule(Decision.DENY, TAUT),))
    if decision is Decision.UNDEF:
        return RuleBlock((Rule(Decision.GRANT, CONTRA),))
    return RuleBlock((Rule(Decision.GRANT, TAUT), Rule(Decision.DENY, TAUT)))


def as_constant(policy: Policy) -> Optional[Decision]:
    """Inverse of :func:`constant_policy`; None for anything else."""
    for dec in Decision:
        if policy == constant_policy(dec):
            return dec
    return None


def priority(left: Policy, right: Policy) -> Case:
    """``left >> right``: deny on a left conflict, defer to right on left undef, else left."""
    return Case(
        (
            CaseArm(GuardConj((GuardTest(left, Decision.CONFLICT),)), constant_policy(Decision.DENY)),
            CaseArm(GuardConj((GuardTest(left, Decision.UNDEF),)), right),
            CaseArm(GuardTrue(), left),
        )
    )


@dataclass(frozen=True)
class Definition:
    name: str
    policy: Policy
    span: Optional[Span] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PolicyDocument:
    """Ordered named policies. Duplicate names are kept so validation can report them."""

    definitions: tuple[Definition, ...] = ()

    @classmethod
    def of(cls, policies: Mapping[str, Policy]) -> "PolicyDocument":
        return cls(tuple(Definition(n, p) for n, p in policies.items()))

    @cached_property
    def _index(self) -> dict[str, Policy]:
        out: dict[str, Policy] = {}
        for d in self.definitions:
            out.setdefault(d.name, d.policy)
        return out

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> Policy:
        try:
            return self._index[name]
        except KeyError:
            raise UnresolvedReference(name) from None

    def names(self) -> list[str]:
        return [d.name for d in self.definitions]

    def merged(self, other: "PolicyDocument") -> "PolicyDocument":
        return PolicyDocument(self.definitions + other.definitions)


class UnresolvedReference(LookupError):
    def __init__(self, name: str):
        super().__init__(f"unresolved policy reference {name!r}")
        self.name = name


# ---------------------------------------------------------------------------
# interpreter

AtomValuation = Callable[[Atom], Kleene]
AttributeAssignment = Mapping[str, object]


def eval_condition(cond: Condition, atom_value: AtomValuation) -> Kleene:
    """Strong Kleene value of ``cond``; short-circuits on a decisive left operand."""
    kind = type(cond)
    if kind is Atom:
        return atom_value(cond)
    if kind is And:
        left = eval_condition(cond.left, atom_value)
        if left is _F:
            return _F
        right = eval_condition(cond.right, atom_value)
        if right is _F:
            return _F
        return _T if left is _T and right is _T else _U
    if kind is Or:
        left = eval_condition(cond.left, atom_value)
        if left is _T:
            return _T
        right = eval_condition(cond.right, atom_value)
        if right is _T:
            return _T
        return _F if left is _F and right is _F else _U
    if kind is Not:
        return ~eval_condition(cond.operand, atom_value)
    if kind is Const:
        return _T if cond.value else _F
    raise TypeError(f"not a condition: {cond!r}")


_T, _F, _U = Kleene.TRUE, Kleene.FALSE, Kleene.UNKNOWN


def attribute_valuation(attrs: AttributeAssignment) -> AtomValuation:
    """Atom valuation backed by a map from dotted path text to values; absent or None is unknown."""

    def lookup(path: AttrPath) -> Optional[Value]:
        raw = attrs.get(str(path))
        return None if raw is None else Value.of(raw)

    def atom_value(atom: Atom) -> Kleene:
        rhs = lookup(atom.rhs) if isinstance(atom.rhs, AttrPath) else atom.rhs
        return compare(lookup(atom.lhs), atom.op, rhs)

    return atom_value


def evaluate(policy: Policy, doc: PolicyDocument, atom_value: AtomValuation) -> Decision:
    """Decision of ``policy`` when every atom is valued by ``atom_value``."""
    return _evaluate(policy, doc, atom_value, {})


def select_arm(case: Case, doc: PolicyDocument, atom_value: AtomValuation) -> Optional[int]:
    """Index of the first arm whose guard holds, or None."""
    return _select_arm(case, doc, atom_value, {})


# One valuation per call, so each referenced definition is decided once.
_Memo = dict


def _evaluate(policy: Policy, doc: PolicyDocument, atom_value: AtomValuation, memo: _Memo) -> Decision:
    if isinstance(policy, RuleBlock):
        g = d = 0
        for rule in policy.rules:
            if eval_condition(rule.condition, atom_value) is Kleene.TRUE:
                if rule.effect is Decision.GRANT:
                    g = 1
                else:
                    d = 1
        return _BITS_DECISION[(g, d)]
    if isinstance(policy, Case):
        arm = _select_arm(policy, doc, atom_value, memo)
        if arm is None:
            return Decision.UNDEF
        return _evaluate(policy.arms[arm].body, doc, atom_value, memo)
    if isinstance(policy, Ref):
        if policy.name not in memo:
            memo[policy.name] = _evaluate(doc[policy.name], doc, atom_value, memo)
        return memo[policy.name]
    raise TypeError(f"not a policy: {policy!r}")


def _select_arm(case: Case, doc: PolicyDocument, atom_value: AtomValuation, memo: _Memo) -> Optional[int]:
    for i, arm in enumerate(case.arms):
        if isinstance(arm.guard, GuardTrue):
            return i
        if all(_evaluate(t.policy, doc, atom_value, memo) is t.expected for t in arm.guard.tests):
            return i
    return None


def eval_policy(policy: Policy, doc: PolicyDocument, attrs: AttributeAssignment) -> Decision:
    return evaluate(policy, doc, attribute_valuation(attrs))


def resolve(policy: Policy, doc: PolicyDocument) -> Policy:
    """Follow references until reaching a rule block or case."""
    seen = set()
    while isinstance(policy, Ref):
        if policy.name in seen:
            raise ValueError(f"reference cycle through {policy.name!r}")
        seen.add(policy.name)
        policy = doc[policy.name]
    return policy
