"""Local verification of a period's batches and the resulting work distribution.

Every miner runs the same seven checks, in order, over the verification data
retrieved from the storage chain:

  1. batch and proof were on the storage chain strictly before the Prepare
     boundary of period i+2 (a batch whose challenge was never answered in
     time fails here too);
  2. the Merkle opening is valid, binds the proof to the challenged index,
     and the opened share's counter sits at exactly that position;
  3. the share's coinbase pays the pool contract;
  4. the share commits to the expected distribution of period i-2;
  5. the batch's target D matches the share's;
  6. the opened share actually meets D;
  7. batch and proof signatures verify under the public key inside the share.

The first failing step rejects the whole batch; success prices it at N/D.
All failures are verdicts, never exceptions, so adversarial fixtures can
assert the exact step that caught them.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from . import encoding
from .crypto import Digest, KeyPair, PublicKey, hash_bytes, keypair_from_seed, merkle_verify, verify_signature
from .protocol import (
    Batch,
    PowDistribution,
    Share,
    ShareProof,
    batch_signing_bytes,
    batch_work,
    build_batch,
    build_share_proof,
    check_pow,
    make_distribution,
    proof_signing_bytes,
    share_digest,
)
from .storage_chain import PrepareBoundary, StorageChain, challenge_from_beacon, challenge_indices

REJECT_ALL = "reject_all"
LATEST_WINS = "latest_wins"


@dataclass(frozen=True)
class VerificationContext:
    period: int
    boundary: PrepareBoundary
    expected_dist_commit: Digest
    contract_address: Digest
    challenges: int = 1


@dataclass(frozen=True)
class BatchVerdict:
    batch: Batch
    batch_height: int | None
    work: Fraction | None
    rejected_step: int | None = None
    reason: str | None = None

    @property
    def accepted(self) -> bool:
        return self.rejected_step is None


def _reject(batch: Batch, height: int | None, step: int, reason: str) -> BatchVerdict:
    return BatchVerdict(batch=batch, batch_height=height, work=None, rejected_step=step, reason=reason)


def verify_batch(
    batch: Batch,
    proofs: list[ShareProof] | ShareProof | None,
    ctx: VerificationContext,
    batch_height: int | None = None,
    proof_heights: list[int] | None = None,
    expected_indices: list[int] | None = None,
) -> BatchVerdict:
    """Run the seven checks on one batch and its challenge answers.

    ``expected_indices`` are the challenge indices derived from the storage
    chain (None means the challenge beacon never became available before the
    boundary, which is a timeliness failure). Heights may be omitted for
    off-chain fixtures; omitted heights count as before the boundary.
    """
    if isinstance(proofs, ShareProof):
        proofs = [proofs]

    # Step 1: timeliness. Batch, challenge and every proof strictly before the boundary.
    if batch_height is not None and not ctx.boundary.is_before(batch_height):
        return _reject(batch, batch_height, 1, "batch submitted at or after the Prepare boundary")
    if not proofs or expected_indices is None:
        return _reject(batch, batch_height, 1, "challenge unanswered before the Prepare boundary")
    for height in proof_heights or []:
        if not ctx.boundary.is_before(height):
            return _reject(batch, batch_height, 1, "proof submitted at or after the Prepare boundary")
    if len(proofs) != len(expected_indices):
        return _reject(batch, batch_height, 1, "missing challenge answers")

    for proof, expected in zip(proofs, expected_indices):
        share = proof.challenged_share

        # Step 2: position binding — opening, claimed index and counter all agree.
        if proof.batch_root != batch.merkle_root:
            return _reject(batch, batch_height, 2, "proof references a different batch")
        if proof.merkle_proof.leaf_index != expected:
            return _reject(batch, batch_height, 2, "opened index differs from the challenged index")
        if share.counter != batch.counter_start + expected:
            return _reject(batch, batch_height, 2, "share counter does not match its list position")
        if not merkle_verify(batch.merkle_root, share_digest(share), proof.merkle_proof, batch.share_count):
            return _reject(batch, batch_height, 2, "Merkle opening does not reconstruct the batch root")

        # Step 3: block rewards directed to the pool contract.
        if share.coinbase_target != ctx.contract_address:
            return _reject(batch, batch_height, 3, "coinbase does not pay the pool contract")

        # Step 4: linked to the distribution of period i-2.
        if share.dist_commit != ctx.expected_dist_commit:
            return _reject(batch, batch_height, 4, "template commits to the wrong distribution")

        # Step 5: batch difficulty matches the share's.
        if batch.difficulty != share.difficulty:
            return _reject(batch, batch_height, 5, "batch difficulty differs from share difficulty")

        # Step 6: the share really meets its target.
        if not check_pow(share):
            return _reject(batch, batch_height, 6, "share does not satisfy its difficulty")

        # Step 7: both signatures come from the key behind the share's pubkey.
        if batch.pubkey != share.pubkey:
            return _reject(batch, batch_height, 7, "batch pubkey differs from share pubkey")
        batch_msg = batch_signing_bytes(
            batch.merkle_root, batch.difficulty, batch.share_count, batch.period, batch.counter_start
        )
        if not verify_signature(share.pubkey, batch_msg, batch.signature):
            return _reject(batch, batch_height, 7, "batch signature invalid")
        proof_msg = proof_signing_bytes(proof.batch_root, share, proof.merkle_proof.leaf_index)
        if not verify_signature(share.pubkey, proof_msg, proof.signature):
            return _reject(batch, batch_height, 7, "proof signature invalid")

    return BatchVerdict(batch=batch, batch_height=batch_height, work=batch_work(batch))


def aggregate_distribution(
    verdicts: list[BatchVerdict], period: int, overlap_policy: str = REJECT_ALL
) -> PowDistribution:
    """Sum accepted works per miner into the period's distribution.

    Counter ranges of a miner's accepted batches must be pairwise disjoint.
    Under ``reject_all`` (default) any overlap forfeits the miner's whole
    period; under ``latest_wins`` a later batch supersedes every earlier
    accepted batch it overlaps. The result is independent of verdict order.
    """
    if overlap_policy not in (REJECT_ALL, LATEST_WINS):
        raise ValueError(f"unknown overlap policy: {overlap_policy}")

    by_miner: dict[PublicKey, list[BatchVerdict]] = {}
    for verdict in verdicts:
        if verdict.accepted and verdict.batch.period == period:
            by_miner.setdefault(verdict.batch.pubkey, []).append(verdict)

    works: dict[PublicKey, Fraction] = {}
    for pubkey in sorted(by_miner):
        # Storage order (height, then root) makes "latest" well defined.
        ordered = sorted(
            by_miner[pubkey],
            key=lambda v: (v.batch_height if v.batch_height is not None else 0, v.batch.merkle_root),
        )
        kept: list[BatchVerdict] = []
        overlapped = False
        for verdict in ordered:
            start = verdict.batch.counter_start
            end = start + verdict.batch.share_count
            clashes = [
                k for k in kept
                if start < k.batch.counter_start + k.batch.share_count and k.batch.counter_start < end
            ]
            if clashes:
                overlapped = True
                if overlap_policy == LATEST_WINS:
                    kept = [k for k in kept if k not in clashes]
                    kept.append(verdict)
            else:
                kept.append(verdict)
        if overlapped and overlap_policy == REJECT_ALL:
            continue
        total = sum((v.work for v in kept), Fraction(0))
        if total > 0:
            works[pubkey] = total
    return make_distribution(period, works)


def verify_period(
    chain: StorageChain,
    ctx: VerificationContext,
    overlap_policy: str = REJECT_ALL,
    scan_from: int = 0,
) -> tuple[list[BatchVerdict], PowDistribution]:
    """Verify all of one period's storage-chain data and aggregate it.

    Pure function of the chain and context: scans every block, pairs batches
    with the proofs answering them, derives each batch's challenge from the
    next block's beacon, and runs the seven checks. ``scan_from`` lets a
    caller that knows no relevant entry can precede a given storage height
    (the period had not started yet) skip the prefix; the result is identical
    to a full scan.
    """
    located: list[tuple[Batch, int]] = []
    proofs_by_root: dict[Digest, list[tuple[ShareProof, int]]] = {}
    for block in chain.blocks[scan_from:]:
        for entry in block.entries:
            if isinstance(entry, Batch):
                if entry.period == ctx.period:
                    located.append((entry, block.height))
            else:
                proofs_by_root.setdefault(entry.batch_root, []).append((entry, block.height))

    verdicts: list[BatchVerdict] = []
    for batch, height in located:
        try:
            expected = challenge_indices(chain, batch, height, count=ctx.challenges)
        except LookupError:
            expected = None
        timely = [
            (proof, h)
            for proof, h in sorted(proofs_by_root.get(batch.merkle_root, []), key=lambda ph: ph[1])
            if ctx.boundary.is_before(h)
        ]
        # Assign one timely proof per challenge slot, preferring one that opens
        # the challenged index; a wrong-index answer is still handed to the
        # verifier so it fails at step 2, not as a missing proof.
        chosen: list[ShareProof] = []
        chosen_heights: list[int] = []
        if expected is not None:
            used: set[int] = set()
            for want in expected:
                pick = next(
                    (n for n, (p, _) in enumerate(timely)
                     if n not in used and p.merkle_proof.leaf_index == want),
                    None,
                )
                if pick is None:
                    pick = next((n for n in range(len(timely)) if n not in used), None)
                if pick is not None:
                    used.add(pick)
                    chosen.append(timely[pick][0])
                    chosen_heights.append(timely[pick][1])
        verdicts.append(
            verify_batch(
                batch,
                chosen or None,
                ctx,
                batch_height=height,
                proof_heights=chosen_heights,
                expected_indices=expected,
            )
        )
    return verdicts, aggregate_distribution(verdicts, ctx.period, overlap_policy)


def expected_reward_under_cheating(reward: Fraction, invalid_fraction: Fraction) -> Fraction:
    """Expected batch reward when a fraction f of its shares are invalid: B(1-f)."""
    if not 0 <= invalid_fraction <= 1:
        raise ValueError("invalid fraction must lie in [0, 1]")
    return reward * (1 - invalid_fraction)


def craft_share(
    kp: KeyPair,
    period: int,
    counter: int,
    difficulty: Fraction,
    dist_commit: Digest,
    coinbase_target: Digest,
    valid: bool,
) -> Share:
    """Search nonces until the share's validity matches ``valid``.

    Used to assemble adversarial batches: an invalid share is a fully formed
    header whose hash lands above the target.
    """
    prefix = (
        encoding.blob(kp.public)
        + encoding.u64(period)
        + encoding.u64(counter)
        + encoding.rational(difficulty)
        + encoding.blob(dist_commit)
        + encoding.blob(coinbase_target)
    )
    t_num, t_den = difficulty.numerator, difficulty.denominator
    scale = 1 << 64
    nonce = 0
    while True:
        nonce_bytes = nonce.to_bytes(8, "big")
        pow_value = hash_bytes(prefix + encoding.blob(nonce_bytes))
        meets = int.from_bytes(pow_value[:8], "big") * t_den <= t_num * scale
        if meets == valid:
            return Share(
                kp.public, period, counter, difficulty, dist_commit, coinbase_target,
                nonce_bytes, pow_value,
            )
        nonce += 1


def simulate_padded_batches(
    batches: int,
    batch_size: int,
    invalid_fraction: Fraction,
    difficulty: Fraction,
    seed: int = 0,
    challenges: int = 1,
) -> dict[str, float]:
    """Accepted work over many batches padded with invalid shares.

    Each batch holds exactly ``invalid_fraction x batch_size`` invalid shares
    at seeded random positions and is challenged through the same
    beacon-to-index mapping the storage chain uses (with fresh beacons per
    batch). Returns the empirical mean accepted work per batch, the analytic
    expectation (N/D)(1-f), and the 1-sigma spread of the estimator under the
    per-batch Bernoulli acceptance model.
    """
    rng = random.Random(seed)
    kp = keypair_from_seed("padded-batch-miner")
    contract = hash_bytes(b"padded-batch-contract")
    dist_commit = hash_bytes(b"padded-batch-dist-commit")
    invalid_count = int(invalid_fraction * batch_size)
    if Fraction(invalid_count, batch_size) != invalid_fraction:
        raise ValueError("invalid_fraction x batch_size must be an integer")
    ctx = VerificationContext(
        period=0,
        boundary=PrepareBoundary(period=2, storage_height=None),
        expected_dist_commit=dist_commit,
        contract_address=contract,
        challenges=challenges,
    )
    full_work = Fraction(batch_size) / difficulty
    accepted = 0
    total_work = Fraction(0)
    for _ in range(batches):
        bad = set(rng.sample(range(batch_size), invalid_count))
        shares = [
            craft_share(kp, 0, c, difficulty, dist_commit, contract, valid=c not in bad)
            for c in range(batch_size)
        ]
        batch, tree = build_batch(kp, shares)
        beacon = rng.getrandbits(256).to_bytes(32, "big")
        indices = [
            challenge_from_beacon(beacon, batch.merkle_root, batch.share_count, salt)
            for salt in range(challenges)
        ]
        proofs = [build_share_proof(kp, batch, tree, shares, i) for i in indices]
        verdict = verify_batch(batch, proofs, ctx, expected_indices=indices)
        if verdict.accepted:
            accepted += 1
            total_work += verdict.work
    p = float((1 - invalid_fraction) ** challenges)
    sigma_mean = float(full_work) * (p * (1 - p) / batches) ** 0.5
    return {
        "batches": float(batches),
        "accept_rate": accepted / batches,
        "mean_work": float(total_work / batches),
        "expected_work": float(full_work * Fraction(1 - invalid_fraction) ** challenges),
        "sigma_mean": sigma_mean,
    }
