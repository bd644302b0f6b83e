"""Single-field corruptions of signed chains and blocktree nodes."""

from __future__ import annotations

import dataclasses
import random


def flip_byte(rng: random.Random, data: bytes) -> bytes:
    out = bytearray(data)
    out[rng.randrange(len(out))] ^= 1 << rng.randrange(8)
    return bytes(out)


def flip_text(rng: random.Random, text: str) -> str:
    while True:
        try:
            return flip_byte(rng, text.encode()).decode()
        except UnicodeDecodeError:
            continue


def mutate_link(chain, rng: random.Random):
    """Flip one bit of one signed field: the asset, or one link's issuer, delegate, policy name or signature."""
    i = rng.randrange(len(chain.links))
    link = chain.links[i]
    which = rng.choice(["asset", "issuer", "delegate", "policy", "sig"])
    if which == "asset":
        return dataclasses.replace(chain, asset=flip_text(rng, chain.asset))
    if which == "sig":
        link = dataclasses.replace(link, signature=flip_byte(rng, link.signature))
    elif which == "issuer":
        link = dataclasses.replace(link, issuer=dataclasses.replace(link.issuer, name=flip_text(rng, link.issuer.name)))
    elif which == "delegate":
        link = dataclasses.replace(
            link, delegate=dataclasses.replace(link.delegate, name=flip_text(rng, link.delegate.name))
        )
    else:
        link = dataclasses.replace(link, policy_name=flip_text(rng, link.policy_name))
    links = list(chain.links)
    links[i] = link
    return dataclasses.replace(chain, links=tuple(links))


def tamper_node(tree, rng: random.Random):
    """Change one stored field of one node. Returns (node key, tampered tree)."""
    key = rng.choice(list(tree.nodes))
    node = tree.nodes[key]
    which = rng.choice(["id", "parent", "policy_id", "version", "payload_hash", "timestamp"])
    if which in ("id", "parent", "payload_hash"):
        value = flip_byte(rng, getattr(node, which))
    elif which == "policy_id":
        value = flip_text(rng, node.policy_id)
    else:
        value = getattr(node, which) + rng.choice([-1, 1]) * rng.randint(1, 3)
    nodes = dict(tree.nodes)
    nodes[key] = dataclasses.replace(node, **{which: value})
    return key, dataclasses.replace(tree, nodes=nodes)
