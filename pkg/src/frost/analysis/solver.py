"""A DPLL decision procedure with two-watched-literal unit propagation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .cnf import CnfFormula

DEFAULT_BUDGET = 10**6


@dataclass(frozen=True)
class Sat:
    model: tuple[bool, ...]  # model[v] for v in 1..n; index 0 unused

    def __getitem__(self, var: int) -> bool:
        return self.model[var]


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class BudgetExceeded:
    decisions: int


SatResult = Union[Sat, Unsat, BudgetExceeded]


def satisfies(clauses, model) -> bool:
    return all(any(model[abs(lit)] == (lit > 0) for lit in c) for c in clauses)


def solve(formula: CnfFormula, budget: int = DEFAULT_BUDGET) -> SatResult:
    """Decide ``formula``. Returns :class:`Sat`, :class:`Unsat` or :class:`BudgetExceeded`.

    Branches on the lowest unassigned variable, false first, and backtracks
    chronologically. ``budget`` caps the number of branching decisions.
    """
    n = formula.variable_count
    clauses: list[list[int]] = []
    for c in formula.clauses:
        lits = list(dict.fromkeys(c))
        if not lits:
            return Unsat()
        if any(-lit in lits for lit in lits):
            continue
        clauses.append(lits)

    value = [0] * (n + 1)
    watches: dict[int, list[int]] = {}
    trail: list[int] = []
    units = []
    for ci, c in enumerate(clauses):
        if len(c) == 1:
            units.append(c[0])
        else:
            watches.setdefault(c[0], []).append(ci)
            watches.setdefault(c[1], []).append(ci)

    def lit_value(lit: int) -> int:
        v = value[lit if lit > 0 else -lit]
        return v if lit > 0 else -v

    def assign(lit: int) -> None:
        value[abs(lit)] = 1 if lit > 0 else -1
        trail.append(lit)

    for u in units:
        v = lit_value(u)
        if v == -1:
            return Unsat()
        if v == 0:
            assign(u)

    qhead = 0

    def propagate() -> bool:
        nonlocal qhead
        while qhead < len(trail):
            false_lit = -trail[qhead]
            qhead += 1
            watching = watches.get(false_lit)
            if not watching:
                continue
            kept: list[int] = []
            j = 0
            while j < len(watching):
                ci = watching[j]
                j += 1
                c = clauses[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                if lit_value(c[0]) == 1:
                    kept.append(ci)
                    continue
                for k in range(2, len(c)):
                    if lit_value(c[k]) != -1:
                        c[1], c[k] = c[k], c[1]
                        watches.setdefault(c[1], []).append(ci)
                        break
                else:
                    kept.append(ci)
                    if lit_value(c[0]) == -1:
                        kept.extend(watching[j:])
                        watches[false_lit] = kept
                        return False
                    assign(c[0])
            watches[false_lit] = kept
        return True

    def undo(to: int) -> None:
        nonlocal qhead
        for lit in trail[to:]:
            value[abs(lit)] = 0
        del trail[to:]
        qhead = to

    # decision stack entries: [trail position, literal, already flipped]
    levels: list[list] = []
    decisions = 0
    if not propagate():
        return Unsat()
    while True:
        var = next((v for v in range(1, n + 1) if value[v] == 0), 0)
        if var == 0:
            model = tuple([False] + [value[v] == 1 for v in range(1, n + 1)])
            if not satisfies(formula.clauses, model):
                raise AssertionError("solver produced a model that violates the formula")
            return Sat(model)
        decisions += 1
        if decisions > budget:
            return BudgetExceeded(decisions - 1)
        levels.append([len(trail), -var, False])
        assign(-var)
        while not propagate():
            while levels and levels[-1][2]:
                levels.pop()
            if not levels:
                return Unsat()
            start, lit, _ = levels[-1]
            undo(start)
            levels[-1] = [start, -lit, True]
            assign(-lit)
