"""Shares, block templates, batches and per-period work distributions.

A share is a partial proof of work: a header whose hash, read as a number in
[0, 1), falls at or below the miner's self-chosen target D. One share stands
for 1/D expected hashes, so a batch of N shares at target D is priced at N/D
expected hashes of work. Difficulties, works and currency are exact
``Fraction`` values throughout so that budget arithmetic never picks up
floating-point noise.

Share headers commit to everything the verifier later checks: the miner's
public key, the period, the per-period counter, the target, the distribution
commitment of period i-2 and the pool contract address. Counters are scoped
per (public key, period) and start at 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import encoding
from .crypto import (
    Digest,
    KeyPair,
    MerkleProof,
    MerkleTree,
    PublicKey,
    Signature,
    hash_bytes,
    merkle_build,
    merkle_prove,
    sign,
)

#: Commitment used by templates of the first two periods, when no prior
#: distribution exists yet. Any digest-valued constant works as long as every
#: node agrees on it; rewards linked to it stay frozen in the contract.
EMPTY_DISTRIBUTION_COMMIT: Digest = hash_bytes(b"\x7fempty-period-distribution")

_POW_SCALE = 1 << 64


@dataclass(frozen=True)
class PeriodConfig:
    """Period geometry: L blocks per period, a P-block Prepare tail, mean block time T."""

    period_len: int
    prepare_len: int
    block_interval: float = 1.0

    def __post_init__(self) -> None:
        if self.prepare_len < 1:
            raise ValueError("prepare_len must be at least 1")
        if self.period_len < 2 * self.prepare_len:
            raise ValueError(
                f"period_len ({self.period_len}) must be at least twice "
                f"prepare_len ({self.prepare_len})"
            )
        if self.block_interval <= 0:
            raise ValueError("block_interval must be positive")


def _check_difficulty(difficulty: Fraction) -> None:
    if not 0 < difficulty <= 1:
        raise ValueError(f"difficulty must lie in (0, 1], got {difficulty}")


@dataclass(frozen=True)
class Share:
    pubkey: PublicKey
    period: int
    counter: int
    difficulty: Fraction
    dist_commit: Digest
    coinbase_target: Digest
    nonce: bytes
    pow_value: Digest


def share_header_bytes(
    pubkey: PublicKey,
    period: int,
    counter: int,
    difficulty: Fraction,
    dist_commit: Digest,
    coinbase_target: Digest,
    nonce: bytes,
) -> bytes:
    return (
        encoding.blob(pubkey)
        + encoding.u64(period)
        + encoding.u64(counter)
        + encoding.rational(difficulty)
        + encoding.blob(dist_commit)
        + encoding.blob(coinbase_target)
        + encoding.blob(nonce)
    )


def make_share(
    pubkey: PublicKey,
    period: int,
    counter: int,
    difficulty: Fraction,
    dist_commit: Digest,
    coinbase_target: Digest,
    nonce: bytes,
) -> Share:
    """Construct a share, deriving pow_value from the header. D must be in (0, 1]."""
    _check_difficulty(difficulty)
    pow_value = hash_bytes(
        share_header_bytes(pubkey, period, counter, difficulty, dist_commit, coinbase_target, nonce)
    )
    return Share(pubkey, period, counter, difficulty, dist_commit, coinbase_target, nonce, pow_value)


def share_digest(share: Share) -> Digest:
    """Digest of the full share, used as its Merkle leaf."""
    return hash_bytes(
        share_header_bytes(
            share.pubkey,
            share.period,
            share.counter,
            share.difficulty,
            share.dist_commit,
            share.coinbase_target,
            share.nonce,
        )
        + encoding.blob(share.pow_value)
    )


def normalized(digest: Digest) -> Fraction:
    """Map a digest to an exact rational in [0, 1): first 8 bytes over 2^64."""
    return Fraction(int.from_bytes(digest[:8], "big"), _POW_SCALE)


def check_pow(share: Share) -> bool:
    """Eligibility of one share: its hash, as a number, is at or below target."""
    return normalized(share.pow_value) <= share.difficulty


@dataclass(frozen=True)
class BlockTemplate:
    """What a pool miner commits to for one period's mining.

    The coinbase pays the pool contract in full; the linking payload binds the
    block reward to the distribution commitment of period ``period - 2``.
    """

    period: int
    coinbase_target: Digest
    reward_amount: Fraction
    dist_commit: Digest
    difficulty: Fraction
    pubkey: PublicKey


@dataclass(frozen=True)
class Batch:
    """A miner's Merkle commitment over its counter-ordered shares of one period.

    ``counter_start`` is the absolute counter of leaf 0; a miner splitting a
    period into several batches must use disjoint, non-overlapping counter
    ranges or forfeit the period.
    """

    pubkey: PublicKey
    period: int
    merkle_root: Digest
    difficulty: Fraction
    share_count: int
    counter_start: int
    signature: Signature


def batch_signing_bytes(
    merkle_root: Digest,
    difficulty: Fraction,
    share_count: int,
    period: int,
    counter_start: int,
) -> bytes:
    return (
        encoding.blob(merkle_root)
        + encoding.rational(difficulty)
        + encoding.u64(share_count)
        + encoding.u64(period)
        + encoding.u64(counter_start)
    )


def build_batch(kp: KeyPair, shares: list[Share], counter_start: int = 0) -> tuple[Batch, MerkleTree]:
    """Commit a miner's shares (already counter-ordered) into a signed batch."""
    if not shares:
        raise ValueError("empty batch")
    tree = merkle_build([share_digest(s) for s in shares])
    first = shares[0]
    _check_difficulty(first.difficulty)
    batch = Batch(
        pubkey=first.pubkey,
        period=first.period,
        merkle_root=tree.root,
        difficulty=first.difficulty,
        share_count=len(shares),
        counter_start=counter_start,
        signature=sign(
            kp,
            batch_signing_bytes(tree.root, first.difficulty, len(shares), first.period, counter_start),
        ),
    )
    return batch, tree


@dataclass(frozen=True)
class ShareProof:
    """Answer to a challenge: the designated share plus its Merkle opening."""

    batch_root: Digest
    challenged_share: Share
    merkle_proof: MerkleProof
    signature: Signature


def proof_signing_bytes(batch_root: Digest, share: Share, leaf_index: int) -> bytes:
    return encoding.blob(batch_root) + encoding.blob(share_digest(share)) + encoding.u64(leaf_index)


def build_share_proof(kp: KeyPair, batch: Batch, tree: MerkleTree, shares: list[Share], index: int) -> ShareProof:
    share = shares[index]
    proof = merkle_prove(tree, index)
    return ShareProof(
        batch_root=batch.merkle_root,
        challenged_share=share,
        merkle_proof=proof,
        signature=sign(kp, proof_signing_bytes(batch.merkle_root, share, index)),
    )


def batch_work(batch: Batch) -> Fraction:
    """Work priced into an accepted batch: N / D expected hashes."""
    if batch.share_count < 1:
        raise ValueError("batch must contain at least one share")
    return Fraction(batch.share_count) / batch.difficulty


@dataclass(frozen=True)
class PowDistribution:
    """Per-period map from public key to verified work, canonically ordered."""

    period: int
    entries: tuple[tuple[PublicKey, Fraction], ...]

    @property
    def total_work(self) -> Fraction:
        return sum((w for _, w in self.entries), Fraction(0))

    def work_of(self, pubkey: PublicKey) -> Fraction:
        for key, work in self.entries:
            if key == pubkey:
                return work
        return Fraction(0)


def make_distribution(period: int, works: dict[PublicKey, Fraction]) -> PowDistribution:
    for key, work in works.items():
        if work <= 0:
            raise ValueError(f"work for {key.hex()} must be positive")
    return PowDistribution(period=period, entries=tuple(sorted(works.items(), key=lambda kv: kv[0])))


def distribution_leaf_bytes(pubkey: PublicKey, work: Fraction) -> bytes:
    return encoding.blob(pubkey) + encoding.rational(work)


def commit_distribution(dist: PowDistribution) -> Digest:
    """Merkle root over the (pubkey, work) leaves; an empty period commits to a sentinel."""
    if not dist.entries:
        return EMPTY_DISTRIBUTION_COMMIT
    leaves = [hash_bytes(distribution_leaf_bytes(k, w)) for k, w in dist.entries]
    return merkle_build(leaves).root


def distribution_open(dist: PowDistribution, pubkey: PublicKey) -> tuple[Fraction, MerkleProof]:
    """Merkle opening of one miner's (pubkey, work) leaf, for child-chain claims."""
    leaves = [hash_bytes(distribution_leaf_bytes(k, w)) for k, w in dist.entries]
    for index, (key, work) in enumerate(dist.entries):
        if key == pubkey:
            return work, merkle_prove(merkle_build(leaves), index)
    raise KeyError(f"{pubkey.hex()} not present in distribution of period {dist.period}")


def mine_shares(
    kp: KeyPair,
    template: BlockTemplate,
    hash_budget: int,
    main_target: Fraction | None = None,
) -> tuple[list[Share], list[Share]]:
    """Grind ``hash_budget`` nonces against the template.

    Every header at or below the share target D becomes a share with the next
    consecutive counter; headers that additionally meet ``main_target`` are
    returned as main-chain block candidates. Deterministic: nonce k is the
    big-endian encoding of k, so the same (key, template, budget) always
    yields the same shares.
    """
    if hash_budget < 0:
        raise ValueError("hash_budget must be non-negative")
    _check_difficulty(template.difficulty)
    shares: list[Share] = []
    candidates: list[Share] = []
    prefix = encoding.blob(kp.public)
    target_num = template.difficulty.numerator
    target_den = template.difficulty.denominator
    for trial in range(hash_budget):
        counter = len(shares)
        header = (
            prefix
            + encoding.u64(template.period)
            + encoding.u64(counter)
            + encoding.rational(template.difficulty)
            + encoding.blob(template.dist_commit)
            + encoding.blob(template.coinbase_target)
            + encoding.blob(encoding.u64(trial))
        )
        pow_value = hash_bytes(header)
        # normalized(pow) <= D, kept in integer arithmetic for speed.
        if int.from_bytes(pow_value[:8], "big") * target_den <= target_num * _POW_SCALE:
            share = Share(
                pubkey=kp.public,
                period=template.period,
                counter=counter,
                difficulty=template.difficulty,
                dist_commit=template.dist_commit,
                coinbase_target=template.coinbase_target,
                nonce=encoding.u64(trial),
                pow_value=pow_value,
            )
            shares.append(share)
            if main_target is not None and normalized(pow_value) <= main_target:
                candidates.append(share)
    return shares, candidates
