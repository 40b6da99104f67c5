"""Timestamped append-only chain carrying batches and share proofs.

The storage chain does two jobs. It fixes *when* verification data was
published — the Prepare boundary is the first storage block whose timestamp
strictly exceeds that of the designated main-chain block, so equal timestamps
still count as before the boundary. And it supplies the challenge beacon:
the hash of the block *after* the one holding a batch, mixed with the batch
root, picks the leaf the miner must open. Both are pure functions of chain
state, so every honest node derives identical boundaries and challenges.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

from . import encoding
from .crypto import Digest, digest_entry, hash_bytes
from .protocol import Batch, ShareProof, batch_signing_bytes, proof_signing_bytes, share_digest

Entry = Batch | ShareProof


def entry_digest(entry: Entry) -> Digest:
    if isinstance(entry, Batch):
        return digest_entry(
            b"batch",
            batch_signing_bytes(
                entry.merkle_root,
                entry.difficulty,
                entry.share_count,
                entry.period,
                entry.counter_start,
            ),
            entry.signature,
        )
    return digest_entry(
        b"proof",
        proof_signing_bytes(
            entry.batch_root, entry.challenged_share, entry.merkle_proof.leaf_index
        ),
        entry.signature,
    )


@dataclass(frozen=True)
class StorageBlock:
    height: int
    timestamp: float
    entries: tuple[Entry, ...]
    beacon: Digest


@dataclass(frozen=True)
class PrepareBoundary:
    """First storage height inside the Prepare phase of ``period``.

    ``storage_height`` is None while no storage block has crossed the
    main-chain Prepare start yet ("open"); everything currently on the chain
    then counts as before the boundary.
    """

    period: int
    storage_height: int | None

    def is_before(self, height: int) -> bool:
        return self.storage_height is None or height < self.storage_height


@dataclass
class StorageChain:
    blocks: list[StorageBlock] = field(default_factory=list)
    timestamps: list[float] = field(default_factory=list)  # mirrors blocks, for bisects

    def append(self, entries: list[Entry], timestamp: float) -> StorageBlock:
        """Seal a new block; empty payloads are legal heartbeats."""
        if self.blocks and timestamp <= self.blocks[-1].timestamp:
            raise ValueError(
                f"storage timestamp {timestamp} not after {self.blocks[-1].timestamp}"
            )
        height = len(self.blocks)
        prev = self.blocks[-1].beacon if self.blocks else b"\x00" * 32
        beacon = hash_bytes(
            encoding.blob(prev)
            + encoding.u64(height)
            + encoding.text(repr(timestamp))
            + b"".join(encoding.blob(entry_digest(e)) for e in entries)
        )
        block = StorageBlock(height=height, timestamp=timestamp, entries=tuple(entries), beacon=beacon)
        self.blocks.append(block)
        self.timestamps.append(timestamp)
        return block

    def height_of(self, entry: Entry) -> int | None:
        for block in self.blocks:
            if any(e is entry for e in block.entries):
                return block.height
        return None


def prepare_boundary(chain: StorageChain, main_prepare_start_timestamp: float, period: int) -> PrepareBoundary:
    """Least storage height with timestamp strictly greater than the main-chain
    Prepare start; open if no such block exists yet."""
    height = bisect_right(chain.timestamps, main_prepare_start_timestamp)
    if height < len(chain.blocks):
        return PrepareBoundary(period=period, storage_height=height)
    return PrepareBoundary(period=period, storage_height=None)


def challenge_from_beacon(beacon: Digest, merkle_root: Digest, share_count: int, salt: int = 0) -> int:
    """Map (beacon, batch root) to a uniform leaf index in [0, share_count)."""
    if share_count < 1:
        raise ValueError("share_count must be positive")
    material = hash_bytes(encoding.blob(beacon) + encoding.blob(merkle_root) + encoding.u32(salt))
    return (int.from_bytes(material[:8], "big") * share_count) >> 64


def challenge_indices(
    chain: StorageChain, batch: Batch, batch_height: int, count: int = 1
) -> list[int]:
    """Challenged leaf indices for a batch stored at ``batch_height``.

    Uses the beacon of the next storage block, so it raises until that block
    exists. Multiple challenges are salted independently.
    """
    if batch_height + 1 >= len(chain.blocks):
        raise LookupError("challenge not yet available: next storage block missing")
    beacon = chain.blocks[batch_height + 1].beacon
    return [challenge_from_beacon(beacon, batch.merkle_root, batch.share_count, salt) for salt in range(count)]


def challenge_index(batch: Batch, chain: StorageChain, batch_height: int | None = None) -> int:
    if batch_height is None:
        batch_height = chain.height_of(batch)
        if batch_height is None:
            raise LookupError("batch not found on the storage chain")
    return challenge_indices(chain, batch, batch_height, count=1)[0]
