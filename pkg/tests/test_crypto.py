"""Hashing, simulated signatures and Merkle trees with index-binding proofs."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiberpool.crypto import (
    hash_bytes,
    keypair_from_seed,
    merkle_build,
    merkle_prove,
    merkle_verify,
    sign,
    verify_signature,
)
from fiberpool.protocol import normalized


def test_hash_deterministic_and_32_bytes():
    assert hash_bytes(b"") == hash_bytes(b"")
    assert len(hash_bytes(b"")) == 32
    assert hash_bytes(b"abc") == hash_bytes(b"abc")
    assert hash_bytes(b"abc") != hash_bytes(b"abd")


def test_hash_no_collisions_under_bit_flips():
    # 10^4 random inputs, flip one bit each: digests must all differ.
    rng = random.Random(42)
    for _ in range(10_000):
        data = bytearray(rng.randbytes(24))
        original = hash_bytes(bytes(data))
        data[rng.randrange(len(data))] ^= 1 << rng.randrange(8)
        assert hash_bytes(bytes(data)) != original


def test_sign_verify_roundtrip():
    kp = keypair_from_seed("alice")
    other = keypair_from_seed("bob")
    msg = b"batch commitment"
    sig = sign(kp, msg)
    assert verify_signature(kp.public, msg, sig)
    assert not verify_signature(other.public, msg, sig)
    assert not verify_signature(kp.public, msg + b"!", sig)


def test_public_key_derivation_is_deterministic():
    assert keypair_from_seed("alice") == keypair_from_seed("alice")
    assert keypair_from_seed("alice").public != keypair_from_seed("bob").public


def test_signature_verifies_under_exactly_one_candidate_key():
    candidates = [keypair_from_seed(f"k{i}") for i in range(20)]
    signer = candidates[7]
    sig = sign(signer, b"payload")
    matches = [kp for kp in candidates if verify_signature(kp.public, b"payload", sig)]
    assert matches == [signer]


def leaves_of(n: int, salt: bytes = b"") -> list[bytes]:
    return [hash_bytes(salt + i.to_bytes(4, "big")) for i in range(n)]


def test_merkle_empty_rejected():
    with pytest.raises(ValueError, match="empty batch"):
        merkle_build([])


def test_merkle_single_leaf_root_is_tagged_leaf_hash():
    leaf = hash_bytes(b"only")
    tree = merkle_build([leaf])
    assert tree.root == hash_bytes(b"\x00" + leaf)
    proof = merkle_prove(tree, 0)
    assert proof.siblings == ()
    assert merkle_verify(tree.root, leaf, proof, 1)


def test_merkle_two_leaf_root_structure():
    a, b = hash_bytes(b"a"), hash_bytes(b"b")
    tree = merkle_build([a, b])
    ha, hb = hash_bytes(b"\x00" + a), hash_bytes(b"\x00" + b)
    assert tree.root == hash_bytes(b"\x01" + ha + hb)


def test_merkle_order_sensitive_all_two_leaf_orderings():
    a, b = hash_bytes(b"a"), hash_bytes(b"b")
    assert merkle_build([a, b]).root != merkle_build([b, a]).root


def test_merkle_proof_length_log2():
    tree = merkle_build(leaves_of(8))
    assert len(merkle_prove(tree, 0).siblings) == 3
    assert len(merkle_prove(merkle_build(leaves_of(100)), 57).siblings) == 7


def test_merkle_proof_out_of_range():
    tree = merkle_build(leaves_of(4))
    with pytest.raises(IndexError):
        merkle_prove(tree, 4)


def test_merkle_index_binding_exhaustive_small_trees():
    # Proofs must verify at their own index only, for every tree size <= 8.
    for n in range(1, 9):
        leaves = leaves_of(n, salt=bytes([n]))
        tree = merkle_build(leaves)
        for i in range(n):
            proof = merkle_prove(tree, i)
            assert merkle_verify(tree.root, leaves[i], proof, n)
            for j in range(n):
                if j != i:
                    assert not merkle_verify(tree.root, leaves[j], proof, n)


def test_merkle_sibling_side_flip_fails_exhaustive():
    for n in (2, 3, 5, 8):
        leaves = leaves_of(n)
        tree = merkle_build(leaves)
        for i in range(n):
            proof = merkle_prove(tree, i)
            for level in range(len(proof.siblings)):
                siblings = list(proof.siblings)
                digest, on_left = siblings[level]
                siblings[level] = (digest, not on_left)
                tampered = type(proof)(leaf_index=i, siblings=tuple(siblings))
                assert not merkle_verify(tree.root, leaves[i], tampered, n)


def test_merkle_leaf_count_mismatch_fails():
    leaves = leaves_of(8)
    tree = merkle_build(leaves)
    proof = merkle_prove(tree, 3)
    assert not merkle_verify(tree.root, leaves[3], proof, 4)  # wrong count
    assert not merkle_verify(tree.root, leaves[3], proof, 16)


def test_single_leaf_mutation_changes_root():
    leaves = leaves_of(6)
    base = merkle_build(leaves).root
    for i in range(6):
        mutated = list(leaves)
        mutated[i] = hash_bytes(b"mut" + bytes([i]))
        assert merkle_build(mutated).root != base


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=1, max_value=64), st.integers(min_value=0, max_value=2**32))
def test_merkle_roundtrip_property(n, seed):
    rng = random.Random(seed)
    leaves = [rng.randbytes(32) for _ in range(n)]
    tree = merkle_build(leaves)
    index = rng.randrange(n)
    proof = merkle_prove(tree, index)
    assert merkle_verify(tree.root, leaves[index], proof, n)
    # A sampled wrong index must fail.
    if n > 1:
        wrong = (index + 1 + rng.randrange(n - 1)) % n
        assert not merkle_verify(tree.root, leaves[wrong], proof, n)


def test_normalized_of_hash_is_uniform_enough():
    # Sanity anchor for everything challenge/pow related.
    rng = random.Random(7)
    total = sum(float(normalized(hash_bytes(rng.randbytes(16)))) for _ in range(20_000))
    assert abs(total / 20_000 - 0.5) < 0.01
