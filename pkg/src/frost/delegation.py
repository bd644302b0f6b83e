"""Owner-rooted delegation chains of signed policy submissions and their composition."""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Protocol, Union

from .core import Case, CaseArm, Decision, GuardConj, GuardTest, GuardTrue, Policy, PolicyDocument, Ref, constant_policy, priority
from .parser import parse, parse_policy, pretty_print, referenced_names

HOLES = ("L", "R")


class ChainError(ValueError):
    pass


class SignatureScheme(Protocol):
    def sign(self, secret: bytes, message: bytes) -> bytes: ...

    def verify(self, key: bytes, message: bytes, signature: bytes) -> bool: ...


class HmacScheme:
    """Keyed-hash tags (HMAC-SHA256); the verification key is the shared secret."""

    name = "hmac-sha256"

    def sign(self, secret: bytes, message: bytes) -> bytes:
        return hmac.new(secret, message, hashlib.sha256).digest()

    def verify(self, key: bytes, message: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self.sign(key, message), signature)


DEFAULT_SCHEME = HmacScheme()


@dataclass(frozen=True)
class ActorId:
    name: str
    key: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if not self.name:
            raise ChainError("actor name must be nonempty")
        if not self.key:
            raise ChainError(f"actor {self.name!r} has no key material")


@dataclass(frozen=True)
class CompositionOp:
    """``priority`` (left has priority), ``join`` (knowledge join) or a named template over holes L and R."""

    kind: str
    name: str = ""
    template: Optional[Policy] = None

    def __post_init__(self) -> None:
        if self.kind not in ("priority", "join", "named"):
            raise ChainError(f"unknown composition operator {self.kind!r}")
        if self.kind == "named":
            if self.template is None or not self.name:
                raise ChainError("named operator needs a name and a template")
            holes = set(referenced_names(self.template))
            if holes != set(HOLES):
                raise ChainError(f"template {self.name!r} must reference exactly the holes L and R, found {sorted(holes)}")

    @classmethod
    def named(cls, name: str, template: Union[str, Policy]) -> "CompositionOp":
        if isinstance(template, str):
            template = parse_policy(template)
        return cls("named", name, template)

    def apply(self, left: Policy, right: Policy) -> Policy:
        if self.kind == "priority":
            return priority(left, right)
        if self.kind == "join":
            return join_policy(left, right)
        return _fill(self.template, {"L": left, "R": right})


def join_policy(left: Policy, right: Policy) -> Case:
    """Case statement whose decision is the knowledge join of ``left`` and ``right``."""

    def test(p: Policy, d: Decision) -> GuardTest:
        return GuardTest(p, d)

    conflict = constant_policy(Decision.CONFLICT)
    return Case(
        (
            CaseArm(GuardConj((test(left, Decision.CONFLICT),)), conflict),
            CaseArm(GuardConj((test(right, Decision.CONFLICT),)), conflict),
            CaseArm(GuardConj((test(left, Decision.GRANT), test(right, Decision.DENY))), conflict),
            CaseArm(GuardConj((test(left, Decision.DENY), test(right, Decision.GRANT))), conflict),
            CaseArm(GuardConj((test(left, Decision.UNDEF),)), right),
            CaseArm(GuardTrue(), left),
        )
    )


def _fill(policy: Policy, holes: Mapping[str, Policy]) -> Policy:
    if isinstance(policy, Ref):
        return holes.get(policy.name, policy)
    if isinstance(policy, Case):
        arms = []
        for arm in policy.arms:
            guard = arm.guard
            if isinstance(guard, GuardConj):
                guard = GuardConj(tuple(GuardTest(_fill(t.policy, holes), t.expected) for t in guard.tests))
            arms.append(CaseArm(guard, _fill(arm.body, holes)))
        return Case(tuple(arms))
    return policy


@dataclass(frozen=True)
class ChainLink:
    issuer: ActorId
    delegate: ActorId
    policy_name: str
    signature: bytes = field(repr=False)


def _field(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


def link_message(asset: str, issuer: str, delegate: str, policy_name: str, index: int) -> bytes:
    """Canonical signed encoding: length-prefixed asset, issuer, delegate, policy name and link index."""
    return b"".join(
        _field(part.encode("utf-8")) for part in (asset, issuer, delegate, policy_name, str(index))
    )


@dataclass(frozen=True)
class DelegationChain:
    owner: ActorId
    asset: str
    op: CompositionOp
    links: tuple[ChainLink, ...]
    document: PolicyDocument

    def message(self, index: int, issuer: str, delegate: str, policy_name: str) -> bytes:
        return link_message(self.asset, issuer, delegate, policy_name, index)

    @property
    def tail(self) -> ActorId:
        return self.links[-1].delegate


def sign_link(
    chain: DelegationChain, issuer: str, delegate: str, policy_name: str, secret: bytes,
    scheme: SignatureScheme = DEFAULT_SCHEME,
) -> bytes:
    """Signature for the link that would be appended next."""
    return scheme.sign(secret, chain.message(len(chain.links), issuer, delegate, policy_name))


def init_chain(
    owner: ActorId,
    asset: str,
    op: CompositionOp,
    owner_policy_name: str,
    doc: PolicyDocument,
    scheme: SignatureScheme = DEFAULT_SCHEME,
) -> DelegationChain:
    if owner_policy_name not in doc:
        raise ChainError(f"unknown policy {owner_policy_name!r}")
    sig = scheme.sign(owner.key, link_message(asset, owner.name, owner.name, owner_policy_name, 0))
    return DelegationChain(owner, asset, op, (ChainLink(owner, owner, owner_policy_name, sig),), doc)


def extend_chain(
    chain: DelegationChain,
    issuer: ActorId,
    delegate: ActorId,
    policy_name: str,
    signature: bytes,
    policies: Optional[PolicyDocument] = None,
    scheme: SignatureScheme = DEFAULT_SCHEME,
) -> DelegationChain:
    """Append a link. ``policies`` adds the delegate's policy definitions to the chain document."""
    if issuer.name != chain.tail.name:
        raise ChainError(f"issuer {issuer.name!r} is not the chain tail {chain.tail.name!r}")
    doc = chain.document if policies is None else chain.document.merged(policies)
    if policy_name not in doc:
        raise ChainError(f"unknown policy {policy_name!r}")
    message = chain.message(len(chain.links), issuer.name, delegate.name, policy_name)
    if not scheme.verify(issuer.key, message, signature):
        raise ChainError(f"bad signature from {issuer.name!r}")
    link = ChainLink(issuer, delegate, policy_name, signature)
    return replace(chain, links=chain.links + (link,), document=doc)


def verify_chain(chain: DelegationChain, scheme: SignatureScheme = DEFAULT_SCHEME) -> Optional[int]:
    """None when every link checks out, else the index of the first failing link."""
    for i, link in enumerate(chain.links):
        if i == 0:
            ordered = link.issuer == chain.owner and link.delegate.name == chain.owner.name
        else:
            ordered = link.issuer.name == chain.links[i - 1].delegate.name
        if not ordered or link.policy_name not in chain.document:
            return i
        message = chain.message(i, link.issuer.name, link.delegate.name, link.policy_name)
        if not scheme.verify(link.issuer.key, message, link.signature):
            return i
    if not chain.links:
        return 0
    return None


def compose_chain(chain: DelegationChain, scheme: SignatureScheme = DEFAULT_SCHEME) -> Policy:
    """Left fold of the link policies, owner first, under the chain's operator."""
    bad = verify_chain(chain, scheme)
    if bad is not None:
        raise ChainError(f"chain verification failed at link {bad}")
    policies = [chain.document[link.policy_name] for link in chain.links]
    out = policies[0]
    for nxt in policies[1:]:
        out = chain.op.apply(out, nxt)
    return out


# ---------------------------------------------------------------------------
# JSON chain files


def _op_to_json(op: CompositionOp):
    if op.kind != "named":
        return op.kind
    from .parser import format_policy

    return {"named": op.name, "template": format_policy(op.template)}


def _op_from_json(data) -> CompositionOp:
    if isinstance(data, str):
        return CompositionOp(data)
    if isinstance(data, dict) and set(data) == {"named", "template"}:
        return CompositionOp.named(data["named"], data["template"])
    raise ChainError(f"bad composition operator {data!r}")


def chain_to_json(chain: DelegationChain) -> str:
    data = {
        "asset": chain.asset,
        "op": _op_to_json(chain.op),
        "owner": chain.owner.name,
        "links": [
            {
                "issuer": link.issuer.name,
                "delegate": link.delegate.name,
                "policy": link.policy_name,
                "sig": base64.b64encode(link.signature).decode("ascii"),
            }
            for link in chain.links
        ],
        "policies": pretty_print(chain.document),
    }
    return json.dumps(data, indent=2) + "\n"


def chain_from_json(text: str, keys: Mapping[str, bytes]) -> DelegationChain:
    """Load a chain file; ``keys`` maps actor names to verification keys.

    Actors missing from ``keys`` get a placeholder key that never verifies.
    """
    try:
        data = json.loads(text)
        links_data = data["links"]
        owner_name = data["owner"]
        asset = data["asset"]
        op = _op_from_json(data["op"])
        doc = parse(data["policies"])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ChainError(f"malformed chain file: {exc}") from None

    def actor(name: str) -> ActorId:
        return ActorId(name, keys.get(name) or b"\x00unknown-actor")

    links = []
    for item in links_data:
        try:
            sig = base64.b64decode(item["sig"], validate=True)
        except (KeyError, ValueError) as exc:
            raise ChainError(f"malformed link: {exc}") from None
        links.append(ChainLink(actor(item["issuer"]), actor(item["delegate"]), item["policy"], sig))
    return DelegationChain(actor(owner_name), asset, op, tuple(links), doc)


def load_keys(text: str) -> dict[str, bytes]:
    """Key ring file: JSON object of actor name to base64 key."""
    return {name: base64.b64decode(value) for name, value in json.loads(text).items()}
