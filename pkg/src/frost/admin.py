"""Policy administration: the lifecycle automaton and the blocktree version log."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional

# ---------------------------------------------------------------------------
# lifecycle


class LifecycleState(enum.Enum):
    DRAFT = "Draft"
    ACTIVE = "Active"
    SUSPENDED = "Suspended"
    RETIRED = "Retired"


class AdminAction(enum.Enum):
    SUBMIT = "submit"
    ACTIVATE = "activate"
    SUSPEND = "suspend"
    RESUME = "resume"
    RETIRE = "retire"


TRANSITIONS: Mapping[tuple[LifecycleState, AdminAction], LifecycleState] = MappingProxyType(
    {
        (LifecycleState.DRAFT, AdminAction.ACTIVATE): LifecycleState.ACTIVE,
        (LifecycleState.ACTIVE, AdminAction.SUSPEND): LifecycleState.SUSPENDED,
        (LifecycleState.SUSPENDED, AdminAction.RESUME): LifecycleState.ACTIVE,
        (LifecycleState.ACTIVE, AdminAction.RETIRE): LifecycleState.RETIRED,
        (LifecycleState.SUSPENDED, AdminAction.RETIRE): LifecycleState.RETIRED,
        (LifecycleState.DRAFT, AdminAction.RETIRE): LifecycleState.RETIRED,
    }
)


class TransitionRejected(ValueError):
    def __init__(self, state: LifecycleState, action: AdminAction):
        super().__init__(f"action {action.value!r} is not permitted in state {state.value}")
        self.state = state
        self.action = action


def transition(state: LifecycleState, action: AdminAction) -> LifecycleState:
    try:
        return TRANSITIONS[(state, action)]
    except KeyError:
        raise TransitionRejected(state, action) from None


def parse_state(text: str) -> LifecycleState:
    for s in LifecycleState:
        if s.value.lower() == text.lower():
            return s
    raise ValueError(f"unknown lifecycle state {text!r}")


# ---------------------------------------------------------------------------
# blocktree

DEFAULT_HASH = "sha256"
DIGEST_SIZE = 32
ROOT = bytes(DIGEST_SIZE)


class BlocktreeError(ValueError):
    pass


def digest(data: bytes, alg: str = DEFAULT_HASH) -> bytes:
    h = hashlib.new(alg)
    if h.digest_size != DIGEST_SIZE:
        raise BlocktreeError(f"hash {alg!r} does not produce 256-bit digests")
    h.update(data)
    return h.digest()


def node_id(parent: bytes, policy_id: str, version: int, payload_hash: bytes, timestamp: int,
            alg: str = DEFAULT_HASH) -> bytes:
    pid = policy_id.encode("utf-8")
    data = (
        parent
        + len(pid).to_bytes(4, "big")
        + pid
        + version.to_bytes(8, "big")
        + payload_hash
        + timestamp.to_bytes(8, "big", signed=True)
    )
    return digest(data, alg)


@dataclass(frozen=True)
class BlocktreeNode:
    id: bytes
    parent: bytes
    policy_id: str
    version: int
    payload_hash: bytes
    timestamp: int

    def expected_id(self, alg: str = DEFAULT_HASH) -> bytes:
        return node_id(self.parent, self.policy_id, self.version, self.payload_hash, self.timestamp, alg)


@dataclass(frozen=True)
class Blocktree:
    """Append-only store; :func:`append_version` returns a new tree and never touches existing nodes."""

    nodes: Mapping[bytes, BlocktreeNode] = field(default_factory=dict)
    heads: Mapping[str, bytes] = field(default_factory=dict)
    alg: str = DEFAULT_HASH
    order: tuple[bytes, ...] = ()

    def head(self, policy_id: str) -> Optional[BlocktreeNode]:
        ref = self.heads.get(policy_id)
        return None if ref is None else self.nodes.get(ref)

    def history(self, policy_id: str) -> list[BlocktreeNode]:
        """Versions of one policy, oldest first."""
        out = []
        node = self.head(policy_id)
        while node is not None:
            out.append(node)
            node = self.nodes.get(node.parent) if node.parent != ROOT else None
        return out[::-1]


def append_version(tree: Blocktree, policy_id: str, payload_hash: bytes, timestamp: int) -> tuple[Blocktree, BlocktreeNode]:
    if len(payload_hash) != DIGEST_SIZE:
        raise BlocktreeError("payload hash must be 32 bytes")
    if not policy_id or any(ch.isspace() for ch in policy_id):
        raise BlocktreeError(f"invalid policy id {policy_id!r}")
    head = tree.head(policy_id)
    if head is None:
        parent, version = ROOT, 1
    else:
        if timestamp < head.timestamp:
            raise BlocktreeError(f"timestamp {timestamp} precedes head timestamp {head.timestamp}")
        parent, version = head.id, head.version + 1
    nid = node_id(parent, policy_id, version, payload_hash, timestamp, tree.alg)
    node = BlocktreeNode(nid, parent, policy_id, version, payload_hash, timestamp)
    nodes = dict(tree.nodes)
    nodes[nid] = node
    heads = dict(tree.heads)
    heads[policy_id] = nid
    return Blocktree(nodes, heads, tree.alg, tree.order + (nid,)), node


def verify_tree(tree: Blocktree) -> list[bytes]:
    """Digests of every node failing an integrity check, sorted. Empty means the tree verifies.

    A node fails if its id does not match its fields, if it is stored under
    another key, if its parent is missing or belongs to another policy, if its
    version does not follow its parent's, if its timestamp goes backwards, if
    it shares a parent with a sibling, or if any of its ancestors fails.
    """
    bad: set[bytes] = set()
    children: dict[bytes, list[bytes]] = {}
    for key, node in tree.nodes.items():
        try:
            intact = node.id == key and node.expected_id(tree.alg) == key
        except (OverflowError, UnicodeEncodeError):
            intact = False
        if not intact:
            bad.add(key)
            continue
        if node.parent == ROOT:
            if node.version != 1:
                bad.add(key)
        else:
            parent = tree.nodes.get(node.parent)
            if (
                parent is None
                or parent.policy_id != node.policy_id
                or node.version != parent.version + 1
                or node.timestamp < parent.timestamp
            ):
                bad.add(key)
        children.setdefault((node.parent, node.policy_id) if node.parent == ROOT else node.parent, []).append(key)
    for siblings in children.values():
        if len(siblings) > 1:
            bad.update(siblings)
    for policy_id, ref in tree.heads.items():
        node = tree.nodes.get(ref)
        if node is None or node.policy_id != policy_id:
            bad.add(ref)
    # a node is only as good as its ancestry
    for key in tree.nodes:
        seen = set()
        cur = key
        while cur in tree.nodes and cur not in seen:
            if cur in bad:
                if cur != key:
                    bad.add(key)
                break
            seen.add(cur)
            cur = tree.nodes[cur].parent
        else:
            if cur != ROOT and key not in bad:
                bad.add(key)
    return sorted(bad)


# ---------------------------------------------------------------------------
# text format

HEADER = "frosttree 1"


def serialize_tree(tree: Blocktree) -> str:
    lines = [f"{HEADER} {tree.alg}"]
    for key in tree.order:
        n = tree.nodes[key]
        lines.append(
            f"node {n.id.hex()} {n.parent.hex()} {n.policy_id} {n.version} {n.payload_hash.hex()} {n.timestamp}"
        )
    return "\n".join(lines) + "\n"


def deserialize_tree(text: str) -> Blocktree:
    """Load node records as written; integrity is left to :func:`verify_tree`.

    Heads are the highest-version node per policy id.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise BlocktreeError("empty tree file")
    head = lines[0].split(" ")
    if len(head) != 3 or " ".join(head[:2]) != HEADER:
        raise BlocktreeError(f"line 1: expected '{HEADER} <hash-alg>'")
    alg = head[2]
    try:
        digest(b"", alg)
    except ValueError as exc:
        raise BlocktreeError(f"line 1: {exc}") from None
    nodes: dict[bytes, BlocktreeNode] = {}
    order = []
    heads: dict[str, bytes] = {}
    for no, line in enumerate(lines[1:], 2):
        parts = line.split(" ")
        if len(parts) != 7 or parts[0] != "node":
            raise BlocktreeError(f"line {no}: expected a node record")
        try:
            nid, parent, payload = bytes.fromhex(parts[1]), bytes.fromhex(parts[2]), bytes.fromhex(parts[5])
            version, ts = int(parts[4]), int(parts[6])
        except ValueError:
            raise BlocktreeError(f"line {no}: malformed field") from None
        if any(len(b) != DIGEST_SIZE for b in (nid, parent, payload)) or version < 1:
            raise BlocktreeError(f"line {no}: malformed field")
        if nid in nodes:
            raise BlocktreeError(f"line {no}: duplicate node {parts[1]}")
        node = BlocktreeNode(nid, parent, parts[3], version, payload, ts)
        nodes[nid] = node
        order.append(nid)
        cur = heads.get(node.policy_id)
        if cur is None or nodes[cur].version <= version:
            heads[node.policy_id] = nid
    return Blocktree(nodes, heads, alg, tuple(order))
