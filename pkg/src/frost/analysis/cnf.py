"""CNF formulas and the Tseitin encoding of dual circuits."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from ..circuits import AND, CONST0, CONST1, IN_F, IN_T, NOT, OR, DualCircuit


class KnowledgeMode(enum.Enum):
    """Whether a witness may leave atoms unknown (partial) or must fix every atom (total)."""

    TOTAL = "total"
    PARTIAL = "partial"


class EmptyClause(ValueError):
    pass


@dataclass
class CnfFormula:
    variable_count: int
    clauses: list[tuple[int, ...]] = field(default_factory=list)

    def add(self, *literals: int) -> None:
        if not literals:
            raise EmptyClause("empty clause")
        for lit in literals:
            if lit == 0 or abs(lit) > self.variable_count:
                raise ValueError(f"literal {lit} outside 1..{self.variable_count}")
        self.clauses.append(tuple(literals))

    def extend(self, clauses: Iterable[Iterable[int]]) -> None:
        for c in clauses:
            self.add(*c)

    def new_var(self) -> int:
        self.variable_count += 1
        return self.variable_count

    def copy(self) -> "CnfFormula":
        return CnfFormula(self.variable_count, list(self.clauses))

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.variable_count} {len(self.clauses)}"]
        lines.extend(" ".join(map(str, c)) + " 0" for c in self.clauses)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class VarMap:
    """Variable numbering: atom i has rails ``2i+1`` (true) and ``2i+2`` (false); gate k is ``2n+1+k``."""

    n_atoms: int
    n_gates: int

    def rails(self, atom: int) -> tuple[int, int]:
        return 2 * atom + 1, 2 * atom + 2

    def gate(self, index: int) -> int:
        return 2 * self.n_atoms + 1 + index

    @property
    def size(self) -> int:
        return 2 * self.n_atoms + self.n_gates


def tseitin(circuit: DualCircuit, mode: KnowledgeMode = KnowledgeMode.PARTIAL) -> tuple[CnfFormula, VarMap]:
    vm = VarMap(len(circuit.table), len(circuit.gates))
    cnf = CnfFormula(vm.size)
    for i in range(vm.n_atoms):
        t, f = vm.rails(i)
        cnf.add(-t, -f)
        if mode is KnowledgeMode.TOTAL:
            cnf.add(t, f)
    for k, gate in enumerate(circuit.gates):
        g = vm.gate(k)
        kind, ops = gate.kind, gate.operands
        if kind in (IN_T, IN_F):
            rail = vm.rails(ops[0])[0 if kind == IN_T else 1]
            cnf.add(-g, rail)
            cnf.add(g, -rail)
        elif kind == CONST1:
            cnf.add(g)
        elif kind == CONST0:
            cnf.add(-g)
        elif kind == AND:
            a, b = vm.gate(ops[0]), vm.gate(ops[1])
            cnf.add(-g, a)
            cnf.add(-g, b)
            cnf.add(g, -a, -b)
        elif kind == OR:
            a, b = vm.gate(ops[0]), vm.gate(ops[1])
            cnf.add(g, -a)
            cnf.add(g, -b)
            cnf.add(-g, a, b)
        elif kind == NOT:
            a = vm.gate(ops[0])
            cnf.add(-g, -a)
            cnf.add(g, a)
        else:
            raise ValueError(f"unknown gate kind {kind!r}")
    return cnf, vm
