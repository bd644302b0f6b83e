"""``frost`` command line: check, compile, eval, analyze, chain and admin workflows.

Exit status is 0 on success, 2 when the tool ran but found problems
(analysis findings, failed verification), and 1 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import admin, delegation
from .analysis import KnowledgeMode, SolverBudgetExceeded, dead_arms, equivalent, reachable, tseitin
from .circuits import HEADER as CIRCUIT_HEADER
from .circuits import CircuitError, compile_policy, deserialize_circuit, serialize_circuit
from .core import Decision, PolicyDocument, UnresolvedReference
from .parser import ParseError, ValidationError, load, parse, pretty_print, validate_document
from .runtime import AccessRequest, PipRegistry, PolicyDecisionPoint, RuntimeRejected, StaticResolver, circuit_hash, enforce

OK, FAILED, FINDINGS = 0, 1, 2


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _load_doc(path: str) -> PolicyDocument:
    return load(_read(path))


def _policy(doc: PolicyDocument, name: str):
    if name not in doc:
        raise UsageError(f"no policy named {name!r}")
    return doc[name]


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    source = _read(args.file)
    try:
        doc = parse(source)
    except ParseError as exc:
        print(f"{args.file}:{exc}", file=sys.stderr)
        return FINDINGS
    errors = validate_document(doc)
    for err in errors:
        print(f"{args.file}:{err}", file=sys.stderr)
    if errors:
        return FINDINGS
    print(f"ok: {len(doc.definitions)} policies")
    return OK


def cmd_compile(args) -> int:
    doc = _load_doc(args.file)
    circuit = compile_policy(_policy(doc, args.policy), doc)
    text = serialize_circuit(circuit)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        _write(args.output, text)
    return OK


def _load_circuit_or_policy(path: str, name: str):
    text = _read(path)
    if text.startswith(CIRCUIT_HEADER + "\n"):
        return deserialize_circuit(text)
    doc = load(text)
    return compile_policy(_policy(doc, name), doc)


def cmd_eval(args) -> int:
    circuit = _load_circuit_or_policy(args.file, args.policy)
    try:
        request = AccessRequest.from_json(_read(args.request))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad request file {args.request}: {exc}") from None
    pip = PipRegistry()
    if args.pip:
        values = json.loads(_read(args.pip))
        resolver = StaticResolver(values)
        for key in values:
            pip = pip.register(key, resolver)
    if args.tree:
        tree = admin.deserialize_tree(_read(args.tree))
    else:
        tree, _ = admin.append_version(admin.Blocktree(), args.policy, circuit_hash(circuit), 0)
    pdp = PolicyDecisionPoint(pip)
    asset = args.asset or args.policy
    pdp.install(asset, circuit, args.policy, tree, admin.parse_state(args.lifecycle))
    trace = pdp.decide(asset, request)
    print(trace.decision.value)
    if args.trace:
        print(trace.format(), file=sys.stderr)
        print(f"pep: {enforce(trace.decision).value}", file=sys.stderr)
    return OK


def cmd_analyze(args) -> int:
    doc = _load_doc(args.file)
    policy = _policy(doc, args.policy)
    mode = KnowledgeMode(args.mode)
    check = args.check
    circuit = compile_policy(policy, doc)
    if args.dimacs:
        _write(args.dimacs, tseitin(circuit, mode)[0].to_dimacs())
    if check == "dead-arms":
        found = False
        for status in dead_arms(policy, doc, mode):
            line = f"arm {status.arm}: {status.label}"
            if status.witness is not None:
                line += f"  witness: {status.witness.describe()}"
            print(line)
            found = found or status.dead
        return FINDINGS if found else OK
    if check == "conflict-free":
        witness = reachable(circuit, Decision.CONFLICT, mode)
        if witness is None:
            print("conflict-free")
            return OK
        print(f"conflict reachable  witness: {witness.describe()}")
        return FINDINGS
    if check.startswith("reach="):
        try:
            decision = Decision(check.split("=", 1)[1])
        except ValueError:
            raise UsageError(f"unknown decision in {check!r}") from None
        witness = reachable(circuit, decision, mode)
        if witness is None:
            print(f"{decision.value} unreachable")
            return FINDINGS
        print(f"{decision.value} reachable  witness: {witness.describe()}")
        return OK
    if check.startswith("equiv="):
        other = _policy(doc, check.split("=", 1)[1])
        cex = equivalent(policy, other, doc, mode)
        if cex is None:
            print("equivalent")
            return OK
        print(f"not equivalent: {cex.left.value} vs {cex.right.value}  witness: {cex.witness.describe()}")
        return FINDINGS
    raise UsageError(f"unknown check {check!r}")


def _keys(args) -> dict[str, bytes]:
    try:
        return delegation.load_keys(_read(args.keys))
    except (ValueError, AttributeError) as exc:
        raise UsageError(f"bad key file {args.keys}: {exc}") from None


def _actor(keys: dict[str, bytes], name: str) -> delegation.ActorId:
    if name not in keys:
        raise UsageError(f"no key for actor {name!r}")
    return delegation.ActorId(name, keys[name])


def cmd_chain(args) -> int:
    keys = _keys(args)
    if args.action == "init":
        if not (args.asset and args.owner and args.policy and args.policies):
            raise UsageError("chain init needs --asset, --owner, --policy and --policies")
        doc = _load_doc(args.policies)
        if args.template:
            tdoc = parse(_read(args.template))
            op = delegation.CompositionOp.named(args.op, tdoc[args.op])
        else:
            op = delegation.CompositionOp(args.op)
        chain = delegation.init_chain(_actor(keys, args.owner), args.asset, op, args.policy, doc)
        _write(args.chain, delegation.chain_to_json(chain))
        return OK
    chain = delegation.chain_from_json(_read(args.chain), keys)
    if args.action == "extend":
        if not (args.issuer and args.delegate and args.policy):
            raise UsageError("chain extend needs --issuer, --delegate and --policy")
        extra = _load_doc(args.policies) if args.policies else None
        issuer = _actor(keys, args.issuer)
        delegate = delegation.ActorId(args.delegate, keys.get(args.delegate, b"-"))
        sig = delegation.sign_link(chain, issuer.name, delegate.name, args.policy, issuer.key)
        chain = delegation.extend_chain(chain, issuer, delegate, args.policy, sig, extra)
        _write(args.chain, delegation.chain_to_json(chain))
        return OK
    bad = delegation.verify_chain(chain)
    if args.action == "verify":
        if bad is None:
            print(f"ok: {len(chain.links)} links")
            return OK
        print(f"link {bad}: verification failed")
        return FINDINGS
    if bad is not None:
        print(f"link {bad}: verification failed", file=sys.stderr)
        return FINDINGS
    composed = delegation.compose_chain(chain)
    out = PolicyDocument(chain.document.definitions).merged(
        PolicyDocument.of({args.name: composed})
    )
    text = pretty_print(out)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        _write(args.output, text)
    return OK


def cmd_admin(args) -> int:
    if args.action == "step":
        if not (args.state and args.do):
            raise UsageError("admin step needs --state and --action")
        try:
            state = admin.parse_state(args.state)
            action = admin.AdminAction(args.do.lower())
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        try:
            print(admin.transition(state, action).value)
        except admin.TransitionRejected as exc:
            print(f"rejected: {exc}")
            return FINDINGS
        return OK
    if not args.tree:
        raise UsageError(f"admin {args.action} needs a TREE file")
    if args.action == "log":
        if not (args.policy_id and args.circuit):
            raise UsageError("admin log needs --policy-id and --circuit")
        path = Path(args.tree)
        tree = admin.deserialize_tree(_read(args.tree)) if path.exists() else admin.Blocktree(alg=args.hash)
        circuit = deserialize_circuit(_read(args.circuit))
        ts = args.timestamp if args.timestamp is not None else int(time.time())
        tree, node = admin.append_version(tree, args.policy_id, circuit_hash(circuit, tree.alg), ts)
        _write(args.tree, admin.serialize_tree(tree))
        print(f"{node.policy_id} v{node.version} {node.id.hex()}")
        return OK
    tree = admin.deserialize_tree(_read(args.tree))
    corrupt = admin.verify_tree(tree)
    if corrupt:
        for key in corrupt:
            print(f"corrupt: {key.hex()}")
        return FINDINGS
    print(f"ok: {len(tree.nodes)} nodes, {len(tree.heads)} policies")
    return OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frost", description="FROST policy toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="parse and validate a .frost file")
    p.add_argument("file")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("compile", help="compile a policy to a circuit file")
    p.add_argument("file")
    p.add_argument("--policy", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("eval", help="decide a request against a policy or circuit file")
    p.add_argument("file")
    p.add_argument("--policy", required=True, help="policy name (policy id when FILE is a circuit)")
    p.add_argument("--request", required=True)
    p.add_argument("--trace", action="store_true")
    p.add_argument("--pip", help="JSON object of static attribute values by dotted path")
    p.add_argument("--tree", help="blocktree file the circuit must match")
    p.add_argument("--lifecycle", default="Active")
    p.add_argument("--asset")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="SAT-based policy analyses")
    p.add_argument("file")
    p.add_argument("--policy", required=True)
    p.add_argument("--check", required=True, help="dead-arms | reach=DECISION | conflict-free | equiv=OTHER")
    p.add_argument("--mode", choices=["total", "partial"], default="partial")
    p.add_argument("--dimacs", help="also write the CNF of the policy circuit")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("chain", help="delegation chain workflows")
    p.add_argument("action", choices=["init", "extend", "verify", "compose"])
    p.add_argument("chain")
    p.add_argument("--keys", required=True, help="JSON object of actor name to base64 key")
    p.add_argument("--asset")
    p.add_argument("--owner")
    p.add_argument("--op", default="priority", help="priority | join | template name (with --template)")
    p.add_argument("--template", help=".frost file defining the template named by --op")
    p.add_argument("--policy")
    p.add_argument("--policies", help=".frost file with policies to add")
    p.add_argument("--issuer")
    p.add_argument("--delegate")
    p.add_argument("--name", default="composed")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("admin", help="lifecycle and blocktree administration")
    p.add_argument("action", choices=["log", "verify", "step"])
    p.add_argument("tree", nargs="?")
    p.add_argument("--policy-id")
    p.add_argument("--circuit")
    p.add_argument("--timestamp", type=int)
    p.add_argument("--hash", default=admin.DEFAULT_HASH)
    p.add_argument("--state")
    p.add_argument("--action", dest="do")
    p.set_defaults(func=cmd_admin)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return FAILED if exc.code else OK
    try:
        return args.func(args)
    except (UsageError, ParseError, ValidationError, CircuitError, UnresolvedReference, delegation.ChainError,
            admin.BlocktreeError, RuntimeRejected, SolverBudgetExceeded, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
