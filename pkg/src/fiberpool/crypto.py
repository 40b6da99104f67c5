"""Deterministic stand-in cryptography for protocol simulation.

One hash family (SHA-256) backs everything: share proof-of-work, Merkle
commitments, storage beacons and the simulated signatures. Domain-separation
prefixes keep the different uses from colliding (a leaf hash can never be
reinterpreted as an interior node, a public key never as a signature).

The signature scheme is a hash tag over (public key, message). It gives the
protocol exactly the behavior the simulation needs — a signature verifies
under the one public key whose holder signed that exact message — while being
deliberately worthless as real cryptography (anyone holding the public key
could forge). Key management and cryptographic strength are out of scope.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from . import encoding

DIGEST_LEN = 32

# Domain-separation prefixes (single byte each).
_LEAF_TAG = b"\x00"
_NODE_TAG = b"\x01"
_PUBKEY_TAG = b"\x02"
_SIG_TAG = b"\x03"

# Type aliases: a Digest is always exactly 32 bytes, produced by hash_bytes.
Digest = bytes
PublicKey = bytes
Signature = bytes


def hash_bytes(data: bytes) -> Digest:
    """SHA-256 of ``data``; the one hash used across the whole model."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    secret: bytes
    public: PublicKey


def keypair_from_seed(seed: bytes | str) -> KeyPair:
    """Derive a key pair deterministically from an opaque seed."""
    secret = seed.encode("utf-8") if isinstance(seed, str) else bytes(seed)
    return KeyPair(secret=secret, public=hash_bytes(_PUBKEY_TAG + secret))


def sign(kp: KeyPair, message: bytes) -> Signature:
    return hash_bytes(_SIG_TAG + kp.public + message)


def verify_signature(public: PublicKey, message: bytes, sig: Signature) -> bool:
    return sig == hash_bytes(_SIG_TAG + public + message)


@dataclass(frozen=True)
class MerkleProof:
    """Opening of one leaf: ``siblings`` bottom-up as (digest, sibling_on_left).

    The proof carries its claimed ``leaf_index``; verification recomputes the
    expected sibling sides from that index, so a proof for leaf i can never
    pass as a proof for leaf j.
    """

    leaf_index: int
    siblings: tuple[tuple[Digest, bool], ...]


@dataclass(frozen=True)
class MerkleTree:
    leaves: tuple[Digest, ...]
    levels: tuple[tuple[Digest, ...], ...]

    @property
    def leaf_count(self) -> int:
        return len(self.leaves)

    @property
    def root(self) -> Digest:
        return self.levels[-1][0]


def _hash_leaf(leaf: Digest) -> Digest:
    return hash_bytes(_LEAF_TAG + leaf)


def _hash_node(left: Digest, right: Digest) -> Digest:
    return hash_bytes(_NODE_TAG + left + right)


def merkle_build(leaves: list[Digest] | tuple[Digest, ...]) -> MerkleTree:
    """Build a binary hash tree; odd levels duplicate their last node.

    Leaf order is significant. Raises on an empty leaf list ("empty batch").
    """
    if not leaves:
        raise ValueError("empty batch")
    levels: list[tuple[Digest, ...]] = [tuple(_hash_leaf(l) for l in leaves)]
    while len(levels[-1]) > 1:
        prev = levels[-1]
        nxt = []
        for i in range(0, len(prev), 2):
            left = prev[i]
            right = prev[i + 1] if i + 1 < len(prev) else prev[i]
            nxt.append(_hash_node(left, right))
        levels.append(tuple(nxt))
    return MerkleTree(leaves=tuple(leaves), levels=tuple(levels))


def merkle_prove(tree: MerkleTree, index: int) -> MerkleProof:
    if not 0 <= index < tree.leaf_count:
        raise IndexError(f"leaf index {index} out of range [0, {tree.leaf_count})")
    siblings: list[tuple[Digest, bool]] = []
    i = index
    for level in tree.levels[:-1]:
        if i % 2 == 1:
            siblings.append((level[i - 1], True))
        elif i + 1 < len(level):
            siblings.append((level[i + 1], False))
        else:
            # Odd level: the node is paired with its own duplicate.
            siblings.append((level[i], False))
        i //= 2
    return MerkleProof(leaf_index=index, siblings=tuple(siblings))


def merkle_verify(root: Digest, leaf: Digest, proof: MerkleProof, leaf_count: int) -> bool:
    """True iff ``proof`` reconstructs ``root`` for ``leaf`` at its claimed index.

    Binds the index: the sequence of sibling sides (and the duplicate-node
    rule at odd levels) is recomputed from ``proof.leaf_index`` and
    ``leaf_count``, so structural mismatches return False rather than raising.
    """
    if leaf_count < 1 or not 0 <= proof.leaf_index < leaf_count:
        return False
    # Expected number of levels above the leaves.
    height = 0
    size = leaf_count
    while size > 1:
        size = (size + 1) // 2
        height += 1
    if len(proof.siblings) != height:
        return False

    node = _hash_leaf(leaf)
    i = proof.leaf_index
    size = leaf_count
    for sibling, sibling_on_left in proof.siblings:
        if i % 2 == 1:
            expected_left = True
        else:
            expected_left = False
            if i + 1 >= size and sibling != node:
                # Duplicate-last position: the sibling must be the node itself.
                return False
        if sibling_on_left != expected_left:
            return False
        node = _hash_node(sibling, node) if sibling_on_left else _hash_node(node, sibling)
        i //= 2
        size = (size + 1) // 2
    return node == root


def digest_entry(*parts: bytes) -> Digest:
    """Digest of a length-prefixed concatenation (order-sensitive, unambiguous)."""
    return hash_bytes(b"".join(encoding.blob(p) for p in parts))
