"""Compilation of policies to a pair of Boolean circuits (grant rail, deny rail).

Each atom enters the circuit on two input wires ``(t, f)``: ``(1, 0)`` true,
``(0, 1)`` false, ``(0, 0)`` unknown.  Conditions are strong-Kleene on those
rails, so the circuits stay strictly Boolean while still handling missing
attributes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from .core import (
    And,
    Atom,
    Case,
    Condition,
    Const,
    Decision,
    GuardTrue,
    Kleene,
    Not,
    Or,
    Policy,
    PolicyDocument,
    Ref,
    RuleBlock,
)

IN_T = "in_t"
IN_F = "in_f"
CONST0 = "const0"
CONST1 = "const1"
AND = "and"
OR = "or"
NOT = "not"

_ARITY = {IN_T: 1, IN_F: 1, CONST0: 0, CONST1: 0, AND: 2, OR: 2, NOT: 1}

Rails = tuple[int, int]


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class AtomTable:
    atoms: tuple[Atom, ...] = ()

    def __post_init__(self) -> None:
        if len(set(self.atoms)) != len(self.atoms):
            raise CircuitError("atom table contains duplicates")

    def index(self, atom: Atom) -> int:
        return self._positions[atom]

    @property
    def _positions(self) -> dict[Atom, int]:
        cached = self.__dict__.get("_pos")
        if cached is None:
            cached = {a: i for i, a in enumerate(self.atoms)}
            object.__setattr__(self, "_pos", cached)
        return cached

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def __contains__(self, atom: object) -> bool:
        return atom in self._positions


@dataclass(frozen=True)
class Gate:
    kind: str
    operands: tuple[int, ...] = ()

    def __str__(self) -> str:
        return " ".join([self.kind, *map(str, self.operands)])


@dataclass(frozen=True)
class DualCircuit:
    table: AtomTable
    gates: tuple[Gate, ...]
    grant_out: int
    deny_out: int
    _outputs_fn: Optional[Callable] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        check_gates(self.gates, len(self.table))
        for out in (self.grant_out, self.deny_out):
            if not 0 <= out < len(self.gates):
                raise CircuitError(f"output index {out} out of range")

    def outputs_fn(self) -> Callable[[RailAssignment], tuple[int, int]]:
        """Straight-line function from rails to the (grant, deny) output bits, generated once per circuit."""
        if self._outputs_fn is None:
            object.__setattr__(self, "_outputs_fn", _straight_line(self))
        return self._outputs_fn


def _straight_line(circuit: "DualCircuit") -> Callable:
    body = []
    for i, gate in enumerate(circuit.gates):
        kind, ops = gate.kind, gate.operands
        if kind == AND:
            expr = f"w{ops[0]} & w{ops[1]}"
        elif kind == OR:
            expr = f"w{ops[0]} | w{ops[1]}"
        elif kind == NOT:
            expr = f"1 - w{ops[0]}"
        elif kind in (IN_T, IN_F):
            expr = f"r[{ops[0]}][{0 if kind == IN_T else 1}]"
        else:
            expr = "1" if kind == CONST1 else "0"
        body.append(f"    w{i} = {expr}")
    body.append(f"    return w{circuit.grant_out}, w{circuit.deny_out}")
    namespace: dict = {}
    exec("def outputs(r):\n" + "\n".join(body), namespace)  # noqa: S102 - source built from validated gates only
    return namespace["outputs"]


def check_gates(gates: Sequence[Gate], n_atoms: int) -> None:
    if not gates:
        raise CircuitError("circuit has no gates")
    for i, gate in enumerate(gates):
        if gate.kind not in _ARITY:
            raise CircuitError(f"gate {i}: unknown kind {gate.kind!r}")
        if len(gate.operands) != _ARITY[gate.kind]:
            raise CircuitError(f"gate {i}: {gate.kind} takes {_ARITY[gate.kind]} operands")
        if gate.kind in (IN_T, IN_F):
            if not 0 <= gate.operands[0] < n_atoms:
                raise CircuitError(f"gate {i}: atom index {gate.operands[0]} out of range")
        else:
            for op in gate.operands:
                if not 0 <= op < i:
                    raise CircuitError(f"gate {i}: operand {op} is not an earlier gate")


# ---------------------------------------------------------------------------
# atom collection


def _walk_atoms(policy: Policy, doc: PolicyDocument, out: dict[Atom, None]) -> None:
    if isinstance(policy, RuleBlock):
        for rule in policy.rules:
            _walk_condition(rule.condition, out)
    elif isinstance(policy, Case):
        for arm in policy.arms:
            if not isinstance(arm.guard, GuardTrue):
                for test in arm.guard.tests:
                    _walk_atoms(test.policy, doc, out)
            _walk_atoms(arm.body, doc, out)
    elif isinstance(policy, Ref):
        _walk_atoms(doc[policy.name], doc, out)
    else:
        raise TypeError(f"not a policy: {policy!r}")


def _walk_condition(cond: Condition, out: dict[Atom, None]) -> None:
    if isinstance(cond, Atom):
        out.setdefault(cond, None)
    elif isinstance(cond, (And, Or)):
        _walk_condition(cond.left, out)
        _walk_condition(cond.right, out)
    elif isinstance(cond, Not):
        _walk_condition(cond.operand, out)


def collect_atoms(policy: Policy, doc: PolicyDocument, *more: Policy) -> AtomTable:
    """Distinct atoms reachable from the given policies, in first-occurrence order."""
    seen: dict[Atom, None] = {}
    for p in (policy, *more):
        _walk_atoms(p, doc, seen)
    return AtomTable(tuple(seen))


# ---------------------------------------------------------------------------
# compiler


class CircuitBuilder:
    """Appends gates in topological order. Several policies may share one builder."""

    def __init__(self, table: AtomTable, doc: PolicyDocument):
        self.table = table
        self.doc = doc
        self.gates: list[Gate] = []
        self._shared: dict[tuple[str, tuple[int, ...]], int] = {}
        self._refs: dict[str, Rails] = {}

    def _emit(self, kind: str, *operands: int) -> int:
        # structural hashing: an identical gate is emitted once
        key = (kind, operands)
        wire = self._shared.get(key)
        if wire is None:
            self.gates.append(Gate(kind, operands))
            wire = self._shared[key] = len(self.gates) - 1
        return wire

    def _constant(self, wire: int) -> Optional[int]:
        kind = self.gates[wire].kind
        return 1 if kind == CONST1 else 0 if kind == CONST0 else None

    def const(self, bit: int) -> int:
        return self._emit(CONST1 if bit else CONST0)

    def input(self, kind: str, atom_index: int) -> int:
        return self._emit(kind, atom_index)

    def and_(self, a: int, b: int) -> int:
        ca, cb = self._constant(a), self._constant(b)
        if ca == 0 or cb == 0:
            return self.const(0)
        if ca == 1 or a == b:
            return b
        if cb == 1:
            return a
        return self._emit(AND, *sorted((a, b)))

    def or_(self, a: int, b: int) -> int:
        ca, cb = self._constant(a), self._constant(b)
        if ca == 1 or cb == 1:
            return self.const(1)
        if ca == 0 or a == b:
            return b
        if cb == 0:
            return a
        return self._emit(OR, *sorted((a, b)))

    def not_(self, a: int) -> int:
        c = self._constant(a)
        if c is not None:
            return self.const(1 - c)
        gate = self.gates[a]
        if gate.kind == NOT:
            return gate.operands[0]
        return self._emit(NOT, a)

    def or_all(self, wires: Iterable[int]) -> int:
        out = None
        for w in wires:
            out = w if out is None else self.or_(out, w)
        return self.const(0) if out is None else out

    def and_all(self, wires: Iterable[int]) -> int:
        out = None
        for w in wires:
            out = w if out is None else self.and_(out, w)
        return self.const(1) if out is None else out

    def condition(self, cond: Condition) -> Rails:
        if isinstance(cond, Atom):
            i = self.table.index(cond)
            return self.input(IN_T, i), self.input(IN_F, i)
        if isinstance(cond, Const):
            return (self.const(1), self.const(0)) if cond.value else (self.const(0), self.const(1))
        if isinstance(cond, And):
            lt, lf = self.condition(cond.left)
            rt, rf = self.condition(cond.right)
            return self.and_(lt, rt), self.or_(lf, rf)
        if isinstance(cond, Or):
            lt, lf = self.condition(cond.left)
            rt, rf = self.condition(cond.right)
            return self.or_(lt, rt), self.and_(lf, rf)
        if isinstance(cond, Not):
            t, f = self.condition(cond.operand)
            return f, t
        raise TypeError(f"not a condition: {cond!r}")

    def is_decision(self, gd: Rails, decision: Decision) -> int:
        g, d = gd
        g_lit = g if decision.g else self.not_(g)
        d_lit = d if decision.d else self.not_(d)
        return self.and_(g_lit, d_lit)

    def policy(self, policy: Policy) -> Rails:
        """Compile to (grant wire, deny wire)."""
        if isinstance(policy, RuleBlock):
            grants, denies = [], []
            for rule in policy.rules:
                fires, _ = self.condition(rule.condition)
                (grants if rule.effect is Decision.GRANT else denies).append(fires)
            return self.or_all(grants), self.or_all(denies)
        if isinstance(policy, Ref):
            # one gate pair per definition, however often it is referenced
            if policy.name not in self._refs:
                self._refs[policy.name] = self.policy(self.doc[policy.name])
            return self._refs[policy.name]
        if isinstance(policy, Case):
            return self.case(policy)
        raise TypeError(f"not a policy: {policy!r}")

    def case(self, case: Case) -> Rails:
        return self.case_arms(case)[0]

    def case_arms(self, case: Case) -> tuple[Rails, list[int]]:
        """Compile a case; also return, per arm, the wire that is 1 iff that arm is selected."""
        selected = []
        earlier: Optional[int] = None
        g_terms, d_terms = [], []
        for arm in case.arms:
            if isinstance(arm.guard, GuardTrue):
                holds = self.const(1)
            else:
                holds = self.and_all(self.is_decision(self.policy(t.policy), t.expected) for t in arm.guard.tests)
            sel = holds if earlier is None else self.and_(holds, self.not_(earlier))
            earlier = holds if earlier is None else self.or_(earlier, holds)
            selected.append(sel)
            bg, bd = self.policy(arm.body)
            g_terms.append(self.and_(sel, bg))
            d_terms.append(self.and_(sel, bd))
        return (self.or_all(g_terms), self.or_all(d_terms)), selected

    def circuit(self, outputs: Rails) -> DualCircuit:
        return DualCircuit(self.table, tuple(self.gates), outputs[0], outputs[1])


def compile_policy(policy: Policy, doc: PolicyDocument) -> DualCircuit:
    builder = CircuitBuilder(collect_atoms(policy, doc), doc)
    return builder.circuit(builder.policy(policy))


def compile_named(doc: PolicyDocument, name: str) -> DualCircuit:
    return compile_policy(doc[name], doc)


# ---------------------------------------------------------------------------
# evaluation

RailAssignment = Sequence[tuple[int, int]]

KLEENE_RAILS = {Kleene.TRUE: (1, 0), Kleene.FALSE: (0, 1), Kleene.UNKNOWN: (0, 0)}
RAILS_KLEENE = {v: k for k, v in KLEENE_RAILS.items()}


def rails_from_kleene(values: Iterable[Kleene]) -> tuple[tuple[int, int], ...]:
    return tuple(KLEENE_RAILS[v] for v in values)


def check_rails(circuit: DualCircuit, rails: RailAssignment) -> None:
    if len(rails) != len(circuit.table):
        raise CircuitError(f"assignment covers {len(rails)} atoms, circuit has {len(circuit.table)}")
    for i, (t, f) in enumerate(rails):
        if t not in (0, 1) or f not in (0, 1):
            raise CircuitError(f"atom {i}: rails must be bits")
        if t and f:
            raise CircuitError(f"atom {i} ({circuit.table.atoms[i]}): both rails set")


def eval_wires(circuit: DualCircuit, rails: RailAssignment, buffer: Optional[list[int]] = None) -> list[int]:
    """Value of every gate, computed in one topological pass into ``buffer``."""
    check_rails(circuit, rails)
    gates = circuit.gates
    wires = buffer if buffer is not None and len(buffer) == len(gates) else [0] * len(gates)
    for i, gate in enumerate(gates):
        kind, ops = gate.kind, gate.operands
        if kind == AND:
            wires[i] = wires[ops[0]] & wires[ops[1]]
        elif kind == OR:
            wires[i] = wires[ops[0]] | wires[ops[1]]
        elif kind == NOT:
            wires[i] = 1 - wires[ops[0]]
        elif kind == IN_T:
            wires[i] = rails[ops[0]][0]
        elif kind == IN_F:
            wires[i] = rails[ops[0]][1]
        else:
            wires[i] = 1 if kind == CONST1 else 0
    return wires


def eval_circuit(circuit: DualCircuit, rails: RailAssignment, buffer: Optional[list[int]] = None) -> Decision:
    """Decision at the outputs. ``buffer`` is accepted for :func:`eval_wires` compatibility and unused."""
    check_rails(circuit, rails)
    return Decision.from_bits(*circuit.outputs_fn()(rails))


def rails_by_atom(circuit: DualCircuit, values: Mapping[Atom, Union[Kleene, tuple[int, int]]]) -> tuple:
    """Rail assignment from a per-atom map; every table atom must be present."""
    out = []
    for atom in circuit.table:
        if atom not in values:
            raise CircuitError(f"assignment is missing atom {atom}")
        v = values[atom]
        out.append(KLEENE_RAILS[v] if isinstance(v, Kleene) else tuple(v))
    return tuple(out)


# ---------------------------------------------------------------------------
# text format

HEADER = "frostc 1"


def serialize_circuit(circuit: DualCircuit) -> str:
    lines = [HEADER, f"atoms {len(circuit.table)}"]
    lines.extend(a.render() for a in circuit.table)
    lines.append(f"gates {len(circuit.gates)}")
    lines.extend(f"{i} {g}" for i, g in enumerate(circuit.gates))
    lines.append(f"out {circuit.grant_out} {circuit.deny_out}")
    return "\n".join(lines) + "\n"


def deserialize_circuit(text: str) -> DualCircuit:
    from .parser import ParseError, parse_atom

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    cursor = iter(enumerate(lines, 1))

    def next_line(what: str) -> tuple[int, str]:
        try:
            return next(cursor)
        except StopIteration:
            raise CircuitError(f"unexpected end of circuit file, expected {what}") from None

    def count(line_no: int, line: str, keyword: str) -> int:
        parts = line.split(" ")
        if len(parts) != 2 or parts[0] != keyword or not parts[1].isdigit():
            raise CircuitError(f"line {line_no}: expected '{keyword} <count>'")
        return int(parts[1])

    no, line = next_line("header")
    if line != HEADER:
        raise CircuitError(f"line {no}: expected header {HEADER!r}")
    n_atoms = count(*next_line("atom count"), "atoms")
    atoms = []
    for _ in range(n_atoms):
        no, line = next_line("atom")
        try:
            atoms.append(parse_atom(line))
        except ParseError as exc:
            raise CircuitError(f"line {no}: bad atom: {exc}") from None
    table = AtomTable(tuple(atoms))
    n_gates = count(*next_line("gate count"), "gates")
    gates = []
    for i in range(n_gates):
        no, line = next_line("gate")
        parts = line.split(" ")
        if len(parts) < 2 or parts[0] != str(i):
            raise CircuitError(f"line {no}: expected gate {i}")
        kind, ops = parts[1], parts[2:]
        if not all(op.isdigit() for op in ops):
            raise CircuitError(f"line {no}: malformed operands")
        gates.append(Gate(kind, tuple(int(op) for op in ops)))
    no, line = next_line("output line")
    parts = line.split(" ")
    if len(parts) != 3 or parts[0] != "out" or not (parts[1].isdigit() and parts[2].isdigit()):
        raise CircuitError(f"line {no}: expected 'out <grant> <deny>'")
    extra = next(cursor, None)
    if extra is not None:
        raise CircuitError(f"line {extra[0]}: trailing content")
    circuit = DualCircuit(table, tuple(gates), int(parts[1]), int(parts[2]))
    if serialize_circuit(circuit) != text:
        raise CircuitError("circuit text is not in canonical form")
    return circuit
