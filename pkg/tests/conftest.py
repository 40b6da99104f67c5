"""Shared fixture builders for protocol-level tests.

The verification fixtures build a minimal but fully real storage chain:
heartbeat, batch block, beacon block, proof block, and one block past the
boundary. Each adversarial knob tampers with exactly one protocol rule so a
test can assert the precise verification step that catches it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import pytest

from fiberpool.crypto import KeyPair, hash_bytes, keypair_from_seed, sign
from fiberpool.protocol import (
    Batch,
    Share,
    batch_signing_bytes,
    build_batch,
    build_share_proof,
    make_share,
)
from fiberpool.storage_chain import StorageChain, challenge_indices, prepare_boundary
from fiberpool.verification import VerificationContext, craft_share

CONTRACT = hash_bytes(b"test-contract-address")
EXPECTED_COMMIT = hash_bytes(b"test-expected-dist-commit")
SELF_SERVING_COMMIT = hash_bytes(b"test-self-serving-commit")
WRONG_COINBASE = hash_bytes(b"test-wrong-coinbase")


@dataclass
class ChainFixture:
    chain: StorageChain
    batch: Batch
    batch_height: int
    ctx: VerificationContext
    kp: KeyPair
    shares: list[Share]


def honest_shares(
    kp: KeyPair,
    count: int = 8,
    difficulty: Fraction = Fraction(1, 2),
    coinbase=CONTRACT,
    dist_commit=EXPECTED_COMMIT,
    valid: bool = True,
    period: int = 0,
) -> list[Share]:
    return [
        craft_share(kp, period, c, difficulty, dist_commit, coinbase, valid=valid)
        for c in range(count)
    ]


def build_chain_fixture(
    shares: list[Share] | None = None,
    kp: KeyPair | None = None,
    batch_signer: KeyPair | None = None,
    batch_difficulty: Fraction | None = None,
    proof_index_offset: int = 0,
    drop_proof: bool = False,
    boundary_before_batch: bool = False,
    challenges: int = 1,
) -> ChainFixture:
    kp = kp or keypair_from_seed("fixture-miner")
    shares = shares if shares is not None else honest_shares(kp)
    batch, tree = build_batch(batch_signer or kp, shares)
    if batch_difficulty is not None:
        # Tamper with the advertised difficulty and re-sign so only step 5 trips.
        batch = replace(
            batch,
            difficulty=batch_difficulty,
            signature=sign(
                batch_signer or kp,
                batch_signing_bytes(
                    batch.merkle_root, batch_difficulty, batch.share_count,
                    batch.period, batch.counter_start,
                ),
            ),
        )

    chain = StorageChain()
    chain.append([], 1.0)
    chain.append([batch], 2.0)
    batch_height = 1
    chain.append([], 3.0)  # beacon block for the challenge
    indices = challenge_indices(chain, batch, batch_height, count=challenges)
    proofs = []
    if not drop_proof:
        for index in indices:
            opened = (index + proof_index_offset) % batch.share_count
            proofs.append(build_share_proof(batch_signer or kp, batch, tree, shares, opened))
    chain.append(list(proofs), 4.0)
    chain.append([], 5.0)

    boundary_time = 1.5 if boundary_before_batch else 4.5
    ctx = VerificationContext(
        period=shares[0].period,
        boundary=prepare_boundary(chain, boundary_time, shares[0].period + 2),
        expected_dist_commit=EXPECTED_COMMIT,
        contract_address=CONTRACT,
        challenges=challenges,
    )
    return ChainFixture(
        chain=chain, batch=batch, batch_height=batch_height, ctx=ctx, kp=kp, shares=shares
    )


@pytest.fixture
def miner_keypair() -> KeyPair:
    return keypair_from_seed("fixture-miner")
