import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frost.analysis import (
    BudgetExceeded,
    CnfFormula,
    EmptyClause,
    KnowledgeMode,
    Sat,
    SolverBudgetExceeded,
    Unsat,
    dead_arms,
    equivalent,
    reachable,
    solve,
    tseitin,
)
from frost.analysis.solver import satisfies
from frost.circuits import collect_atoms, compile_named, compile_policy, eval_circuit, rails_from_kleene
from frost.core import Decision, PolicyDocument, constant_policy, evaluate, select_arm
from frost.parser import load, parse_policy

from policygen import PolicyGen, assignments

TOTAL, PARTIAL = KnowledgeMode.TOTAL, KnowledgeMode.PARTIAL
DAUGHTER_DRIVE = """
policy daughter_drive =
  grant if (object == "vehicle") && (subject == vehicle.owner.daughter) &&
           (action == "driveVehicle") && (owner.daughter.driversLicense == "valid") &&
           (0900 <= localTime) && (localTime <= 2000);
"""


def test_tseitin_constant_gate_is_a_unit_clause():
    circuit = compile_policy(constant_policy(Decision.GRANT), PolicyDocument())
    cnf, vm = tseitin(circuit)
    const1 = [k for k, g in enumerate(circuit.gates) if g.kind == "const1"]
    assert const1 and all((vm.gate(k),) in cnf.clauses for k in const1)


def test_tseitin_and_gate_clauses():
    doc = load("policy X = grant if a == 1 && b == 1;")
    circuit = compile_named(doc, "X")
    cnf, vm = tseitin(circuit)
    k = next(k for k, g in enumerate(circuit.gates) if g.kind == "and")
    a, b = (vm.gate(i) for i in circuit.gates[k].operands)
    g = vm.gate(k)
    for clause in [(-g, a), (-g, b), (g, -a, -b)]:
        assert clause in cnf.clauses


def test_tseitin_rail_variables_and_modes():
    circuit = compile_named(load(DAUGHTER_DRIVE), "daughter_drive")
    partial, vm = tseitin(circuit, PARTIAL)
    total, _ = tseitin(circuit, TOTAL)
    assert vm.n_atoms == 6 and vm.rails(5) == (11, 12)
    assert vm.gate(0) == 13
    for i in range(6):
        t, f = vm.rails(i)
        assert (-t, -f) in partial.clauses
        assert (t, f) not in partial.clauses and (t, f) in total.clauses
    assert partial.to_dimacs().startswith(f"p cnf {vm.size} {len(partial.clauses)}\n")


def test_empty_clause_rejected():
    with pytest.raises(EmptyClause):
        CnfFormula(2).add()
    with pytest.raises(ValueError):
        CnfFormula(2).add(3)


def test_solve_examples():
    f = CnfFormula(2, [(1, 2), (-1,)])
    res = solve(f)
    assert isinstance(res, Sat) and res[2] and not res[1]
    assert isinstance(solve(CnfFormula(1, [(1,), (-1,)])), Unsat)
    assert isinstance(solve(CnfFormula(0)), Sat)


def _pigeonhole(n):
    """n+1 pigeons into n holes: unsatisfiable and hard for plain DPLL."""
    var = lambda p, h: p * n + h + 1  # noqa: E731
    f = CnfFormula((n + 1) * n)
    for p in range(n + 1):
        f.add(*[var(p, h) for h in range(n)])
    for h in range(n):
        for p, q in itertools.combinations(range(n + 1), 2):
            f.add(-var(p, h), -var(q, h))
    return f


def test_budget_exceeded_is_reported():
    res = solve(_pigeonhole(6), budget=50)
    assert isinstance(res, BudgetExceeded) and res.decisions >= 50
    assert isinstance(solve(_pigeonhole(4)), Unsat)


def _brute_sat(f):
    for bits in itertools.product([False, True], repeat=f.variable_count):
        if satisfies(f.clauses, (None,) + bits):
            return True
    return False


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 9).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.lists(st.integers(1, n).flatmap(lambda v: st.sampled_from([v, -v])), min_size=1, max_size=4),
             max_size=30))))
def test_solver_agrees_with_brute_force(case):
    n, clauses = case
    f = CnfFormula(n, [tuple(c) for c in clauses])
    res = solve(f)
    assert isinstance(res, (Sat, Unsat))
    if isinstance(res, Sat):
        assert satisfies(f.clauses, res.model)
    assert isinstance(res, Sat) == _brute_sat(f)


def test_drive_reachability():
    circuit = compile_named(load(DAUGHTER_DRIVE), "daughter_drive")
    w = reachable(circuit, Decision.GRANT)
    assert w is not None and all(r == (1, 0) for r in w.rails)
    assert reachable(circuit, Decision.CONFLICT) is None
    assert reachable(circuit, Decision.DENY) is None
    assert reachable(circuit, Decision.UNDEF) is not None


def test_dead_arm_example():
    doc = load("policy P = grant if a == 1;"
               "policy X = case { [P eval grant : grant] [P eval grant : deny] [true : undef] };")
    report = dead_arms(doc["X"], doc)
    assert [s.label for s in report] == ["live", "dead", "live"]
    assert [s.arm for s in report] == [1, 2, 3]
    assert select_arm(doc["X"], doc, report[0].witness.valuation()) == 0


def test_dead_arms_requires_case():
    doc = load("policy X = grant;")
    with pytest.raises(TypeError):
        dead_arms(doc["X"], doc)


def test_equivalence_examples():
    doc = PolicyDocument()
    p = parse_policy("grant if a == 1 && b == 1")
    q = parse_policy("grant if b == 1 && a == 1")
    assert equivalent(p, q, doc) is None
    excluded_middle = parse_policy("grant if a == 1 || !(a == 1)")
    cex = equivalent(excluded_middle, constant_policy(Decision.GRANT), doc, PARTIAL)
    assert cex is not None and (cex.left, cex.right) == (Decision.UNDEF, Decision.GRANT)
    assert equivalent(excluded_middle, constant_policy(Decision.GRANT), doc, TOTAL) is None


def test_solver_budget_surfaces_as_exception():
    doc = load("policy X = grant if a == 1 && b == 1 && c == 1 && d == 1;")
    circuit = compile_named(doc, "X")
    with pytest.raises(SolverBudgetExceeded):
        reachable(circuit, Decision.UNDEF, budget=0)


def _brute_reach(circuit, mode):
    seen = set()
    for values, _ in assignments(circuit.table, mode.value):
        seen.add(eval_circuit(circuit, rails_from_kleene(values)))
    return seen


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_reachability_matches_enumeration(seed, n):
    doc = PolicyGen(random.Random(seed), n).document(3)
    circuit = compile_named(doc, "p2")
    for mode in (PARTIAL, TOTAL):
        seen = _brute_reach(circuit, mode)
        for d in Decision:
            assert (reachable(circuit, d, mode) is not None) == (d in seen)
        # partial knowledge can only add reachable decisions
        assert _brute_reach(circuit, TOTAL) <= _brute_reach(circuit, PARTIAL)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_dead_arms_match_enumeration(seed, n):
    gen = PolicyGen(random.Random(seed), n)
    doc = gen.document(2)
    case = gen.case(0, tuple(doc.names()))
    table = collect_atoms(case, doc)
    for mode in (PARTIAL, TOTAL):
        hit = {select_arm(case, doc, val) for _, val in assignments(table, mode.value)}
        for status in dead_arms(case, doc, mode):
            assert status.dead == ((status.arm - 1) not in hit)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_equivalence_matches_enumeration(seed, n):
    gen = PolicyGen(random.Random(seed), n)
    doc = gen.document(2)
    p, q = gen.policy(0, tuple(doc.names())), gen.policy(0, tuple(doc.names()))
    assert equivalent(p, p, doc) is None
    table = collect_atoms(p, doc, q)
    for mode in (PARTIAL, TOTAL):
        same = all(evaluate(p, doc, val) is evaluate(q, doc, val) for _, val in assignments(table, mode.value))
        assert (equivalent(p, q, doc, mode) is None) == same
