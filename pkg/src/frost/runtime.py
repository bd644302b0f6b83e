"""Reference PDP/PEP/PIP runtime executing compiled circuits."""

from __future__ import annotations

import enum
import json
import re
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from types import MappingProxyType
from typing import Any, Callable, Mapping, Optional

from .admin import Blocktree, LifecycleState, digest, verify_tree
from .circuits import KLEENE_RAILS, RAILS_KLEENE, AtomTable, DualCircuit, eval_circuit, serialize_circuit
from .core import AttrPath, Decision, Kleene, Value, compare

RESERVED_ROOTS = ("subject", "object", "action", "environment")
_TIME = re.compile(r"[0-9]{4}\Z")


class RuntimeRejected(ValueError):
    pass


class UnknownAsset(LookupError):
    pass


@dataclass(frozen=True)
class AccessRequest:
    subject: Mapping[str, Any]
    object: Mapping[str, Any]
    action: str
    environment: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.action:
            raise ValueError("request action must be nonempty")

    @classmethod
    def from_json(cls, text: str) -> "AccessRequest":
        """Parse the request file format. ``"HHMM"`` strings become times of day, JSON decimals stay exact."""
        data = json.loads(text, parse_float=Decimal)
        if not isinstance(data, dict):
            raise ValueError("request must be a JSON object")
        action = data.get("action")
        if not isinstance(action, str):
            raise ValueError("request needs a string 'action'")
        subject, obj = data.get("subject", {}), data.get("object", {})
        env = data.get("environment", {})
        if not isinstance(env, dict):
            raise ValueError("'environment' must be an object")
        return cls(
            _to_attrs(subject if isinstance(subject, dict) else {"id": subject}),
            _to_attrs(obj if isinstance(obj, dict) else {"id": obj}),
            action,
            _to_attrs(env),
        )


def json_value(raw: Any) -> Optional[Value]:
    if raw is None or isinstance(raw, (dict, list)):
        return None
    if isinstance(raw, str) and _TIME.match(raw):
        h, m = int(raw[:2]), int(raw[2:])
        if h < 24 and m < 60:
            return Value.time(h, m)
    return Value.of(raw)


def _to_attrs(data: Mapping[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, raw in data.items():
        out[key] = _to_attrs(raw) if isinstance(raw, dict) else json_value(raw)
    return out


def _lookup(attrs: Mapping[str, Any], segments: tuple[str, ...]) -> Optional[Value]:
    # dotted keys may also be stored flat, e.g. {"vehicle.owner.daughter": ...}
    flat = attrs.get(".".join(segments))
    if isinstance(flat, Value):
        return flat
    cur: Any = attrs
    for seg in segments:
        if not isinstance(cur, Mapping) or seg not in cur:
            return None
        cur = cur[seg]
    if isinstance(cur, Mapping):
        cur = cur.get("id")
    return cur if isinstance(cur, Value) else None


Resolver = Callable[[AttrPath, AccessRequest], Optional[Value]]


def builtin_resolve(path: AttrPath, req: AccessRequest) -> Optional[Value]:
    """Serve the reserved roots. A bare ``subject``/``object`` means that map's ``id``."""
    root, rest = path.root, path.segments[1:]
    if root == "action":
        return Value.string(req.action) if not rest else None
    source = {"subject": req.subject, "object": req.object, "environment": req.environment}[root]
    return _lookup(source, rest or ("id",))


class StaticResolver:
    """Fixed attribute values keyed by dotted path text."""

    def __init__(self, values: Mapping[str, Any]):
        self.values = {k: json_value(v) if not isinstance(v, Value) else v for k, v in values.items()}

    def __call__(self, path: AttrPath, req: AccessRequest) -> Optional[Value]:
        return self.values.get(str(path))


@dataclass(frozen=True)
class PipRegistry:
    """Ordered resolvers by path prefix; the first matching prefix answers.

    Paths under no registered prefix fall back to the request environment,
    which is where bare attributes such as ``localTime`` live.
    """

    resolvers: tuple[tuple[tuple[str, ...], Resolver], ...] = ()

    def register(self, prefix: str, resolver: Resolver) -> "PipRegistry":
        segs = tuple(prefix.split(".")) if prefix else ()
        return PipRegistry(self.resolvers + ((segs, resolver),))

    def resolve(self, path: AttrPath, req: AccessRequest) -> Optional[Value]:
        if path.root in RESERVED_ROOTS:
            return builtin_resolve(path, req)
        for prefix, resolver in self.resolvers:
            if path.segments[: len(prefix)] == prefix:
                try:
                    return resolver(path, req)
                except Exception:
                    return None
        return _lookup(req.environment, path.segments)


def resolve_attributes(req: AccessRequest, pip: PipRegistry, table: AtomTable) -> tuple[tuple[int, int], ...]:
    rails = []
    cache: dict[AttrPath, Optional[Value]] = {}

    def value(path: AttrPath) -> Optional[Value]:
        if path not in cache:
            cache[path] = pip.resolve(path, req)
        return cache[path]

    for atom in table:
        rhs = value(atom.rhs) if isinstance(atom.rhs, AttrPath) else atom.rhs
        rails.append(KLEENE_RAILS[compare(value(atom.lhs), atom.op, rhs)])
    return tuple(rails)


class Enforcement(enum.Enum):
    PERMIT = "permit"
    DENY_ACCESS = "deny-access"


def enforce(decision: Decision) -> Enforcement:
    """Default-deny PEP: only grant permits."""
    return Enforcement.PERMIT if decision is Decision.GRANT else Enforcement.DENY_ACCESS


@dataclass(frozen=True)
class DecisionTrace:
    decision: Decision
    atoms: tuple[tuple[str, Kleene], ...]
    elapsed: float

    def format(self) -> str:
        lines = [f"decision: {self.decision.value}"]
        lines.extend(f"  [{text}] = {k.value}" for text, k in self.atoms)
        lines.append(f"elapsed: {self.elapsed * 1e6:.0f}us")
        return "\n".join(lines)


@dataclass(frozen=True)
class Installed:
    circuit: DualCircuit
    policy_id: str
    lifecycle: LifecycleState
    head: bytes


def circuit_hash(circuit: DualCircuit, alg: str = "sha256") -> bytes:
    return digest(serialize_circuit(circuit).encode("utf-8"), alg)


class PolicyDecisionPoint:
    """Holds installed circuits per asset. ``decide`` reads an immutable snapshot; installs swap it."""

    def __init__(self, pip: Optional[PipRegistry] = None):
        self.pip = pip or PipRegistry()
        self._installed: Mapping[str, Installed] = MappingProxyType({})
        self._lock = threading.Lock()

    @property
    def installed(self) -> Mapping[str, Installed]:
        return self._installed

    def install(
        self,
        asset: str,
        circuit: DualCircuit,
        policy_id: str,
        tree: Blocktree,
        lifecycle: LifecycleState,
    ) -> None:
        if lifecycle is not LifecycleState.ACTIVE:
            raise RuntimeRejected(f"policy {policy_id!r} is {lifecycle.value}, only Active policies install")
        corrupt = verify_tree(tree)
        if corrupt:
            raise RuntimeRejected(f"blocktree fails verification ({len(corrupt)} corrupt nodes)")
        head = tree.head(policy_id)
        if head is None:
            raise RuntimeRejected(f"policy {policy_id!r} has no blocktree entry")
        if circuit_hash(circuit, tree.alg) != head.payload_hash:
            raise RuntimeRejected(f"circuit hash does not match blocktree head of {policy_id!r}")
        with self._lock:
            updated = dict(self._installed)
            updated[asset] = Installed(circuit, policy_id, lifecycle, head.id)
            self._installed = MappingProxyType(updated)

    def decide(self, asset: str, req: AccessRequest) -> DecisionTrace:
        start = time.perf_counter()
        entry = self._installed.get(asset)
        if entry is None:
            raise UnknownAsset(f"no policy installed for asset {asset!r}")
        circuit = entry.circuit
        rails = resolve_attributes(req, self.pip, circuit.table)
        decision = eval_circuit(circuit, rails)
        atoms = tuple((a.render(), RAILS_KLEENE[r]) for a, r in zip(circuit.table, rails))
        return DecisionTrace(decision, atoms, time.perf_counter() - start)
