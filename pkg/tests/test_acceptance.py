"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or ``python3 tests/test_acceptance.py``.
"""

import itertools
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

from frost.admin import (
    AdminAction,
    Blocktree,
    LifecycleState,
    TransitionRejected,
    append_version,
    digest,
    transition,
    verify_tree,
)
from frost.analysis import KnowledgeMode, dead_arms, equivalent, reachable
from frost.circuits import (
    KLEENE_RAILS,
    collect_atoms,
    compile_named,
    compile_policy,
    deserialize_circuit,
    eval_circuit,
    serialize_circuit,
)
from frost.core import Decision, Kleene, evaluate, select_arm
from frost.delegation import ActorId, CompositionOp, compose_chain, extend_chain, init_chain, sign_link, verify_chain
from frost.parser import load, parse, pretty_print, validate_document

from mutations import mutate_link, tamper_node
from policygen import PolicyGen

ROOT = Path(__file__).resolve().parent.parent
SAMPLES = ROOT / "samples"
KLEENE3 = (Kleene.TRUE, Kleene.FALSE, Kleene.UNKNOWN)
D = Decision


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
    assert ok, detail


def exhaustive(atoms, domain=KLEENE3):
    """(rails, valuation) for every assignment of ``domain`` values to ``atoms``."""
    for values in itertools.product(domain, repeat=len(atoms)):
        lookup = dict(zip(atoms, values))
        yield tuple(KLEENE_RAILS[v] for v in values), lookup.__getitem__


# -- 1 -----------------------------------------------------------------------


def test_criterion_1_daughter_drive_golden(capsys):
    start = time.perf_counter()
    doc = load((SAMPLES / "daughter_drive.frost").read_text())
    policy = doc["daughter_drive"]
    circuit = compile_named(doc, "daughter_drive")
    atoms = circuit.table.atoms
    cases = [((Kleene.TRUE,) * 6, D.GRANT)]
    for i, other in itertools.product(range(6), (Kleene.FALSE, Kleene.UNKNOWN)):
        values = [Kleene.TRUE] * 6
        values[i] = other
        cases.append((tuple(values), D.UNDEF))
    mismatches = 0
    for values, expected in cases:
        lookup = dict(zip(atoms, values))
        via_interp = evaluate(policy, doc, lookup.__getitem__)
        via_circuit = eval_circuit(circuit, tuple(KLEENE_RAILS[v] for v in values))
        mismatches += (via_interp is not expected) + (via_circuit is not expected)
    elapsed = time.perf_counter() - start
    ok = len(atoms) == 6 and len(cases) == 13 and mismatches == 0 and elapsed < 1.0
    report(capsys, 1, ok, f"daughter-drive golden, {len(cases)} cases x 2 evaluators, {mismatches} mismatches, {elapsed:.3f}s (< 1s)")


# -- 2 -----------------------------------------------------------------------


def test_criterion_2_priority_table(capsys):
    start = time.perf_counter()
    wrong = []
    for p, q in itertools.product(D, repeat=2):
        doc = load(
            f"policy P = {p.value}; policy Q = {q.value};\n"
            "policy PQ = case { [P eval conflict : deny] [P eval undef : Q] [true : P] };"
        )
        expected = D.DENY if p is D.CONFLICT else q if p is D.UNDEF else p
        got_i = evaluate(doc["PQ"], doc, lambda a: Kleene.UNKNOWN)
        got_c = eval_circuit(compile_named(doc, "PQ"), ())
        if got_i is not expected or got_c is not expected:
            wrong.append((p.value, q.value))
    elapsed = time.perf_counter() - start
    ok = not wrong and elapsed < 1.0
    report(capsys, 2, ok, f"priority table, 16 combinations, wrong={wrong}, {elapsed:.3f}s (< 1s)")


# -- 3 -----------------------------------------------------------------------


def test_criterion_3_interpreter_circuit_equivalence(capsys):
    rng = random.Random(20240301)
    start = time.perf_counter()
    policies = assignments = mismatches = invalid = max_atoms = 0
    while policies < 1000:
        doc = PolicyGen(rng, rng.randint(1, 8)).document(rng.randint(1, 4))
        invalid += bool(validate_document(doc))
        top = doc[doc.names()[-1]]
        circuit = compile_policy(top, doc)
        n = len(circuit.table)
        if n > 8:
            continue
        max_atoms = max(max_atoms, n)
        policies += 1
        for rails, val in exhaustive(circuit.table.atoms):
            assignments += 1
            if eval_circuit(circuit, rails) is not evaluate(top, doc, val):
                mismatches += 1
    elapsed = time.perf_counter() - start
    ok = policies >= 1000 and mismatches == 0 and invalid == 0 and elapsed < 60.0
    report(
        capsys, 3,
        ok,
        f"{policies} policies (max {max_atoms} atoms), {assignments} assignments, "
        f"{mismatches} mismatches, {invalid} invalid, {elapsed:.1f}s (< 60s)",
    )


# -- 4 -----------------------------------------------------------------------


def _check_analyses(rng):
    """Problems found for one random document, compared against enumeration."""
    problems = []
    gen = PolicyGen(rng, rng.randint(1, 6))
    doc = gen.document(3)
    top = doc["p2"]
    circuit = compile_policy(top, doc)
    case = gen.case(0, tuple(doc.names()))
    other = gen.policy(0, tuple(doc.names()))
    pair_atoms = collect_atoms(top, doc, other).atoms
    case_atoms = collect_atoms(case, doc).atoms
    for mode in KnowledgeMode:
        domain = KLEENE3 if mode is KnowledgeMode.PARTIAL else KLEENE3[:2]
        seen = {evaluate(top, doc, val) for _, val in exhaustive(circuit.table.atoms, domain)}
        for d in D:
            w = reachable(circuit, d, mode)
            if (w is not None) != (d in seen):
                problems.append(f"reach {d.value} {mode.value}")
            elif w is not None and (eval_circuit(circuit, w.rails) is not d
                                    or evaluate(top, doc, w.valuation()) is not d):
                problems.append("reach witness")
        hit = {select_arm(case, doc, val) for _, val in exhaustive(case_atoms, domain)}
        for status in dead_arms(case, doc, mode):
            if status.dead != ((status.arm - 1) not in hit):
                problems.append(f"dead arm {status.arm} {mode.value}")
            elif status.witness is not None and select_arm(case, doc, status.witness.valuation()) != status.arm - 1:
                problems.append("arm witness")
        same = all(evaluate(top, doc, v) is evaluate(other, doc, v) for _, v in exhaustive(pair_atoms, domain))
        cex = equivalent(top, other, doc, mode)
        if (cex is None) != same:
            problems.append(f"equiv {mode.value}")
        elif cex is not None:
            val = cex.witness.valuation()
            if (evaluate(top, doc, val), evaluate(other, doc, val)) != (cex.left, cex.right) or cex.left is cex.right:
                problems.append("equiv witness")
    return problems


def test_criterion_4_analysis_oracle_agreement(capsys):
    rng = random.Random(4242)
    start = time.perf_counter()
    problems = []
    n_policies = 200
    for _ in range(n_policies):
        problems.extend(_check_analyses(rng))
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 120.0
    report(capsys, 4, ok, f"{n_policies} policies, reach/dead-arms/equiv in both modes, "
                          f"{len(problems)} disagreements {problems[:3]}, {elapsed:.1f}s (< 120s)")


# -- 5 -----------------------------------------------------------------------


def test_criterion_5_round_trips(capsys):
    rng = random.Random(55)
    doc_failures = circuit_failures = 0
    for _ in range(1000):
        doc = PolicyGen(rng, rng.randint(1, 8)).document(rng.randint(1, 4))
        if parse(pretty_print(doc)) != doc:
            doc_failures += 1
        circuit = compile_named(doc, doc.names()[-1])
        text = serialize_circuit(circuit)
        again = deserialize_circuit(text)
        if again != circuit or serialize_circuit(again) != text:
            circuit_failures += 1
    ok = doc_failures == 0 and circuit_failures == 0
    report(capsys, 5, ok, f"1000 documents, {doc_failures} print/parse failures, {circuit_failures} circuit byte failures")


# -- 6 -----------------------------------------------------------------------

OEM = ActorId("oem", b"oem-key")
DEALER = ActorId("dealer", b"dealer-key")
LEASE = ActorId("leaseholder", b"leaseholder-key")


def three_link_chain(doc, names=("p0", "p1", "p2")):
    chain = init_chain(OEM, "car-1", CompositionOp("priority"), names[0], doc)
    chain = extend_chain(chain, OEM, DEALER, names[1], sign_link(chain, "oem", "dealer", names[1], OEM.key))
    return extend_chain(chain, DEALER, LEASE, names[2], sign_link(chain, "dealer", "leaseholder", names[2], DEALER.key))


def test_criterion_6_delegation(capsys):
    doc = parse("policy p0 = deny if blacklisted == true; policy p1 = grant if action == \"unlock\";"
                "policy p2 = deny if localTime > 2200;")
    chain = three_link_chain(doc)
    verifies = verify_chain(chain) is None
    rng = random.Random(66)
    detected = sum(verify_chain(mutate_link(chain, rng)) is not None for _ in range(200))

    violations = checked = 0
    for _ in range(100):
        gen = PolicyGen(rng, rng.randint(1, 6))
        pdoc = gen.document(3)
        composed = compose_chain(three_link_chain(pdoc))
        owner = pdoc["p0"]
        atoms = collect_atoms(composed, pdoc).atoms
        assert len(atoms) <= 6
        for _, val in exhaustive(atoms):
            d = evaluate(owner, pdoc, val)
            if d in (D.GRANT, D.DENY):
                checked += 1
                violations += evaluate(composed, pdoc, val) is not d
    ok = verifies and detected == 200 and violations == 0 and checked > 0
    report(capsys, 6, ok, f"3-link chain verifies={verifies}, {detected}/200 mutations detected, "
                          f"owner decision kept in {checked - violations}/{checked} decisive assignments")


# -- 7 -----------------------------------------------------------------------

S, A = LifecycleState, AdminAction
LIFECYCLE = {
    (S.DRAFT, A.ACTIVATE): S.ACTIVE,
    (S.ACTIVE, A.SUSPEND): S.SUSPENDED,
    (S.SUSPENDED, A.RESUME): S.ACTIVE,
    (S.ACTIVE, A.RETIRE): S.RETIRED,
    (S.SUSPENDED, A.RETIRE): S.RETIRED,
    (S.DRAFT, A.RETIRE): S.RETIRED,
}


def test_criterion_7_admin(capsys):
    table_ok = 0
    for state, action in itertools.product(S, A):
        try:
            got = transition(state, action)
        except TransitionRejected:
            got = None
        table_ok += got is LIFECYCLE.get((state, action))
    rng = random.Random(77)
    tree = Blocktree()
    for i in range(12):
        tree, _ = append_version(tree, rng.choice(["daughter_drive", "valet", "fleet"]), digest(bytes([i])), 10 * i)
    consecutive = verify_tree(tree) == [] and all(
        [n.version for n in tree.history(pid)] == list(range(1, len(tree.history(pid)) + 1)) for pid in tree.heads
    )
    detected = 0
    for _ in range(200):
        key, bad = tamper_node(tree, rng)
        detected += key in verify_tree(bad)
    ok = table_ok == 20 and detected == 200 and consecutive
    report(capsys, 7, ok, f"lifecycle {table_ok}/20 pairs, {detected}/200 tampers detected, versions consecutive={consecutive}")


# -- 8 -----------------------------------------------------------------------


def frost(*args):
    return subprocess.run([sys.executable, "-m", "frost", *map(str, args)], capture_output=True, text=True)


def test_criterion_8_cli_end_to_end(capsys, tmp_path):
    src, pip = SAMPLES / "daughter_drive.frost", SAMPLES / "pip.json"
    circuit, tree = tmp_path / "daughter_drive.frostc", tmp_path / "tree.txt"
    steps = [
        frost("compile", src, "--policy", "daughter_drive", "-o", circuit),
        frost("admin", "log", tree, "--policy-id", "daughter_drive", "--circuit", circuit, "--timestamp", 1700000000),
    ]
    day = frost("eval", circuit, "--policy", "daughter_drive", "--request", SAMPLES / "request_1000.json",
                "--pip", pip, "--tree", tree, "--trace")
    night = frost("eval", circuit, "--policy", "daughter_drive", "--request", SAMPLES / "request_2100.json",
                  "--pip", pip, "--tree", tree, "--trace")
    setup_ok = all(s.returncode == 0 for s in steps)
    day_ok = day.returncode == 0 and day.stdout == "grant\n" and "pep: permit" in day.stderr
    night_ok = night.returncode == 0 and night.stdout == "undef\n" and "pep: deny-access" in night.stderr
    ok = setup_ok and day_ok and night_ok
    report(capsys, 8, ok, f"compile+log ok={setup_ok}, 10:00 -> {day.stdout.strip()!r} (exit {day.returncode}), "
                          f"21:00 -> {night.stdout.strip()!r} with {night.stderr.strip().splitlines()[-1:]}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
