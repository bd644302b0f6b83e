"""Policy analyses posed as satisfiability queries over compiled circuits.

Atoms are treated as independent propositions: the solver does not know that
``t <= 0800`` and ``t >= 2100`` cannot both hold.  Reachability witnesses may
therefore be spurious for real attribute domains, and dead-arm findings are
conservative (an arm dead here is dead for every attribute domain, but arms
reported live may still be unreachable in practice).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..circuits import (
    RAILS_KLEENE,
    AtomTable,
    CircuitBuilder,
    DualCircuit,
    collect_atoms,
    eval_circuit,
    eval_wires,
)
from ..core import Case, Decision, Kleene, Policy, PolicyDocument, evaluate, resolve, select_arm
from .cnf import CnfFormula, KnowledgeMode, VarMap, tseitin
from .solver import DEFAULT_BUDGET, BudgetExceeded, Sat, solve


class SolverBudgetExceeded(RuntimeError):
    def __init__(self, decisions: int):
        super().__init__(f"solver budget exceeded after {decisions} decisions")
        self.decisions = decisions


@dataclass(frozen=True)
class Witness:
    table: AtomTable
    rails: tuple[tuple[int, int], ...]

    def kleene(self) -> tuple[Kleene, ...]:
        return tuple(RAILS_KLEENE[r] for r in self.rails)

    def valuation(self):
        values = dict(zip(self.table.atoms, self.kleene()))
        return values.__getitem__

    def describe(self) -> str:
        if not self.rails:
            return "(no atoms)"
        return ", ".join(f"[{a}]={k.value}" for a, k in zip(self.table.atoms, self.kleene()))


@dataclass(frozen=True)
class Counterexample:
    witness: Witness
    left: Decision
    right: Decision


@dataclass(frozen=True)
class ArmStatus:
    arm: int  # 1-based, as written
    dead: bool
    witness: Optional[Witness] = None
    budget_exceeded: bool = False

    @property
    def label(self) -> str:
        if self.budget_exceeded:
            return "unknown (budget exceeded)"
        return "dead" if self.dead else "live"


def _model_rails(model: Sat, vm: VarMap) -> tuple[tuple[int, int], ...]:
    out = []
    for i in range(vm.n_atoms):
        t, f = vm.rails(i)
        out.append((int(model[t]), int(model[f])))
    return tuple(out)


def _decision_clauses(cnf: CnfFormula, g: int, d: int, decision: Decision) -> None:
    cnf.add(g if decision.g else -g)
    cnf.add(d if decision.d else -d)


def _run(cnf: CnfFormula, budget: int):
    result = solve(cnf, budget)
    if isinstance(result, BudgetExceeded):
        raise SolverBudgetExceeded(result.decisions)
    return result if isinstance(result, Sat) else None


def reachable(
    circuit: DualCircuit,
    decision: Decision,
    mode: KnowledgeMode = KnowledgeMode.PARTIAL,
    budget: int = DEFAULT_BUDGET,
) -> Optional[Witness]:
    """A rail assignment under which ``circuit`` yields ``decision``, or None if none exists."""
    cnf, vm = tseitin(circuit, mode)
    _decision_clauses(cnf, vm.gate(circuit.grant_out), vm.gate(circuit.deny_out), decision)
    model = _run(cnf, budget)
    if model is None:
        return None
    witness = Witness(circuit.table, _model_rails(model, vm))
    got = eval_circuit(circuit, witness.rails)
    if got is not decision:
        raise AssertionError(f"witness evaluates to {got.value}, expected {decision.value}")
    return witness


def conflict_free(circuit: DualCircuit, budget: int = DEFAULT_BUDGET) -> bool:
    return reachable(circuit, Decision.CONFLICT, KnowledgeMode.PARTIAL, budget) is None


def dead_arms(
    policy: Policy,
    doc: PolicyDocument,
    mode: KnowledgeMode = KnowledgeMode.PARTIAL,
    budget: int = DEFAULT_BUDGET,
) -> list[ArmStatus]:
    """Per arm of a case statement: dead if no admissible assignment selects it."""
    case = resolve(policy, doc)
    if not isinstance(case, Case):
        raise TypeError("dead-arm analysis needs a case statement")
    builder = CircuitBuilder(collect_atoms(case, doc), doc)
    outputs, selected = builder.case_arms(case)
    circuit = builder.circuit(outputs)
    base, vm = tseitin(circuit, mode)
    report = []
    for k, wire in enumerate(selected):
        cnf = base.copy()
        cnf.add(vm.gate(wire))
        result = solve(cnf, budget)
        if isinstance(result, BudgetExceeded):
            report.append(ArmStatus(k + 1, dead=False, budget_exceeded=True))
            continue
        if not isinstance(result, Sat):
            report.append(ArmStatus(k + 1, dead=True))
            continue
        witness = Witness(circuit.table, _model_rails(result, vm))
        if not eval_wires(circuit, witness.rails)[wire] or select_arm(case, doc, witness.valuation()) != k:
            raise AssertionError(f"witness for arm {k + 1} does not select it")
        report.append(ArmStatus(k + 1, dead=False, witness=witness))
    return report


def equivalent(
    p: Policy,
    q: Policy,
    doc: PolicyDocument,
    mode: KnowledgeMode = KnowledgeMode.PARTIAL,
    budget: int = DEFAULT_BUDGET,
) -> Optional[Counterexample]:
    """None when ``p`` and ``q`` decide alike on every admissible assignment, else a counterexample."""
    builder = CircuitBuilder(collect_atoms(p, doc, q), doc)
    out_p = builder.policy(p)
    out_q = builder.policy(q)
    cp, cq = builder.circuit(out_p), builder.circuit(out_q)
    cnf, vm = tseitin(cp, mode)
    differs = []
    for a, b in zip(out_p, out_q):
        a, b = vm.gate(a), vm.gate(b)
        x = cnf.new_var()
        cnf.add(-x, a, b)
        cnf.add(-x, -a, -b)
        cnf.add(x, -a, b)
        cnf.add(x, a, -b)
        differs.append(x)
    cnf.add(*differs)
    model = _run(cnf, budget)
    if model is None:
        return None
    witness = Witness(cp.table, _model_rails(model, vm))
    dp, dq = eval_circuit(cp, witness.rails), eval_circuit(cq, witness.rails)
    val = witness.valuation()
    if dp is dq or evaluate(p, doc, val) is not dp or evaluate(q, doc, val) is not dq:
        raise AssertionError("counterexample does not separate the policies")
    return Counterexample(witness, dp, dq)
