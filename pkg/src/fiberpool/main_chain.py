"""Simulated main chain: block lottery, period geometry, pool contract ledger.

The pool's smart contract never verifies a linking transaction when it is
submitted (the coinbase credit has not settled at that point). Instead the
*next* user of the contract settles all pending links first: a link is
validated only if the contract's balance plus everything withdrawn so far
covers all previously validated links plus this one. Anything else is
invalidated and its claim excluded from later settlement sums. Funds behind
invalidated or unclaimable links simply stay in the contract and are reported
as frozen residual.
"""

from __future__ import annotations

import random
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction

from .crypto import Digest, PublicKey
from .protocol import BlockTemplate, PeriodConfig

PENDING = "pending"
VALIDATED = "validated"
INVALIDATED = "invalidated"


@dataclass(frozen=True)
class RewardConfig:
    block_reward: Fraction

    def __post_init__(self) -> None:
        if self.block_reward <= 0:
            raise ValueError("block_reward must be positive")


@dataclass
class LinkingTx:
    """Binds one block reward to a distribution commitment.

    ``amount`` is what the transaction claims; ``credited`` is what the
    coinbase actually paid the contract (equal for honest blocks).
    """

    amount: Fraction
    dist_commit: Digest
    period: int
    credited: Fraction
    status: str = PENDING


@dataclass(frozen=True)
class MainBlock:
    height: int
    timestamp: float
    producer: PublicKey
    coinbase_target: Digest
    linking_tx: LinkingTx | None


@dataclass
class ContractState:
    balance: Fraction = Fraction(0)
    total_withdrawn: Fraction = Fraction(0)
    links: list[LinkingTx] = field(default_factory=list)
    credited_total: Fraction = Fraction(0)  # every coinbase ever paid in
    # Settlement bookkeeping: links[:settled_upto] are settled, and
    # validated_total is the running sum of their validated amounts. Keeping
    # these incremental makes settle_pending O(new links), not O(history).
    validated_total: Fraction = Fraction(0)
    settled_upto: int = 0


def period_of(height: int, cfg: PeriodConfig) -> int:
    return height // cfg.period_len


def in_prepare(height: int, cfg: PeriodConfig) -> bool:
    return height % cfg.period_len >= cfg.period_len - cfg.prepare_len


def prepare_start_height(period: int, cfg: PeriodConfig) -> int:
    """Main-chain height at which the Prepare phase *for* ``period`` begins.

    The Prepare phase preparing period i occupies the tail of period i-1, so
    period i's verification data must be on the storage chain before the block
    at this height.
    """
    return period * cfg.period_len - cfg.prepare_len


def submit_linking_tx(
    state: ContractState,
    amount: Fraction,
    dist_commit: Digest,
    period: int,
    credited: Fraction | None = None,
) -> LinkingTx:
    """Record a pool block: credit the coinbase and append a pending link.

    ``credited`` defaults to ``amount`` (the honest case); an adversarial
    block may claim more than its coinbase paid, which deferred settlement
    will catch.
    """
    if amount <= 0:
        raise ValueError("linking requires positive reward")
    paid = amount if credited is None else credited
    state.balance += paid
    state.credited_total += paid
    link = LinkingTx(amount=amount, dist_commit=dist_commit, period=period, credited=paid)
    state.links.append(link)
    return link


def settle_pending(state: ContractState) -> ContractState:
    """Settle every pending link in FIFO order; runs before any contract use."""
    while state.settled_upto < len(state.links):
        link = state.links[state.settled_upto]
        if link.status == PENDING:
            if state.balance + state.total_withdrawn >= state.validated_total + link.amount:
                link.status = VALIDATED
                state.validated_total += link.amount
            else:
                link.status = INVALIDATED
        elif link.status == VALIDATED:
            state.validated_total += link.amount
        state.settled_upto += 1
    return state


def withdraw(state: ContractState, amount: Fraction) -> ContractState:
    if amount < 0:
        raise ValueError("cannot withdraw a negative amount")
    if amount > state.balance:
        raise ValueError("insufficient contract balance")
    state.balance -= amount
    state.total_withdrawn += amount
    return state


def produce_block(
    height: int,
    prev_time: float,
    rng: random.Random,
    hashrates: dict[PublicKey, Fraction],
    templates: dict[PublicKey, BlockTemplate],
    reward: Fraction,
    cfg: PeriodConfig,
) -> MainBlock:
    """Sample the next block: producer by hashrate, time by an exponential gap.

    Producers holding a template (pool participants this period) direct the
    coinbase to the contract and attach a linking transaction; everyone else
    pays themselves. The linking transaction is *not* applied to any contract
    state here — the caller owns that step.
    """
    keys = list(hashrates)
    total = sum(hashrates.values())
    if total != 1:
        raise ValueError(f"hashrate fractions must sum to 1, got {total}")
    cumulative: list[float] = []
    acc = 0.0
    for key in keys:
        acc += float(hashrates[key])
        cumulative.append(acc)
    producer = keys[min(bisect_right(cumulative, rng.random()), len(keys) - 1)]
    timestamp = prev_time + rng.expovariate(1.0 / cfg.block_interval)

    template = templates.get(producer)
    if template is not None:
        link = LinkingTx(
            amount=reward,
            dist_commit=template.dist_commit,
            period=period_of(height, cfg),
            credited=reward,
        )
        return MainBlock(height, timestamp, producer, template.coinbase_target, link)
    return MainBlock(height, timestamp, producer, producer, None)
