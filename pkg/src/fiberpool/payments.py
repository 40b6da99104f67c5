"""Baseline payment schemes: Proportional, PPS and PPLNS.

All three are folds over a stream of share events punctuated by block events,
so they can replay the exact streams a pool run produces and be compared
head-to-head against the pool's own payment behavior under identical
hashrate processes. PPLNS and Proportional are budget-balanced per block by
construction; PPS is not — its operator bankroll performs a random walk whose
spread is the scheme's imbalance metric.

The module also carries the Monte-Carlo drivers for the reward-variance and
bankroll-imbalance experiments.
"""

from __future__ import annotations

import random
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class ShareEvent:
    time: float
    miner: str
    weight: Fraction  # work of the share, 1/D

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValueError("share weight must be positive")


@dataclass(frozen=True)
class PplnsConfig:
    window: int  # number of most recent shares paid

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("PPLNS window must be at least 1")


@dataclass(frozen=True)
class PpsConfig:
    rate: Fraction  # currency per unit weight
    operator_bankroll: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ValueError("PPS rate must be positive")


class PplnsWindow:
    """Sliding window of the last N share owners."""

    def __init__(self, cfg: PplnsConfig) -> None:
        self.cfg = cfg
        self._window: deque[str] = deque(maxlen=cfg.window)
        self._counts: Counter[str] = Counter()

    def on_share(self, miner: str) -> None:
        if len(self._window) == self.cfg.window:
            evicted = self._window[0]
            self._counts[evicted] -= 1
            if self._counts[evicted] == 0:
                del self._counts[evicted]
        self._window.append(miner)
        self._counts[miner] += 1

    def payout(self, reward: Fraction) -> dict[str, Fraction]:
        """Reward split for a block found now: B/N per share in the window."""
        per_share = reward / self.cfg.window
        return {miner: per_share * count for miner, count in sorted(self._counts.items())}

    def count(self, miner: str) -> int:
        return self._counts.get(miner, 0)

    @property
    def full(self) -> bool:
        return len(self._window) == self.cfg.window


def pplns_payout(
    history: list[ShareEvent],
    block_event: ShareEvent,
    cfg: PplnsConfig,
    reward: Fraction,
) -> dict[str, Fraction]:
    """Payout for one block over the most recent N shares, the block included."""
    if not history and block_event is None:
        raise ValueError("PPLNS needs at least the block itself in history")
    window = PplnsWindow(cfg)
    for event in history:
        window.on_share(event.miner)
    window.on_share(block_event.miner)
    return window.payout(reward)


def proportional_payout(
    round_shares: list[ShareEvent],
    block_event: ShareEvent,
    reward: Fraction,
) -> dict[str, Fraction]:
    """Split one block's reward by share counts within the round; sums to B exactly."""
    if not round_shares:
        raise ValueError("proportional round must contain at least one share")
    counts = Counter(e.miner for e in round_shares)
    total = sum(counts.values())
    return {miner: reward * count / total for miner, count in sorted(counts.items())}


@dataclass
class PpsBook:
    """Operator's running bankroll under pay-per-share."""

    cfg: PpsConfig
    bankroll: Fraction | None = None

    def __post_init__(self) -> None:
        if self.bankroll is None:
            self.bankroll = self.cfg.operator_bankroll

    def on_share(self, event: ShareEvent) -> Fraction:
        payment = self.cfg.rate * event.weight
        self.bankroll -= payment
        return payment

    def on_block(self, reward: Fraction) -> None:
        self.bankroll += reward


def pps_payout(share_event: ShareEvent, cfg: PpsConfig, state: PpsBook | None = None) -> tuple[Fraction, PpsBook]:
    """Pay one share at the fixed rate; a negative bankroll is data, not an error."""
    book = state if state is not None else PpsBook(cfg)
    payment = book.on_share(share_event)
    return payment, book


def simulate_pplns_variance(
    p: float,
    reward: Fraction,
    window: int,
    blocks: int,
    block_prob: float = 0.1,
    seed: int = 0,
    miner: str = "m1",
) -> dict[str, float]:
    """Empirical per-block reward distribution for one miner under PPLNS.

    Shares belong to ``miner`` independently with probability p; every share
    is also a block with probability ``block_prob``. Collection starts once
    the window has filled, and runs until ``blocks`` payouts were observed.
    Returns the empirical mean and variance of the miner's per-block reward.
    """
    rng = np.random.default_rng(seed)
    cfg = PplnsConfig(window=window)
    win = PplnsWindow(cfg)
    payouts = np.empty(blocks, dtype=np.float64)
    per_share = float(reward) / window
    found = 0
    chunk = max(4 * window, 65536)
    while found < blocks:
        owners = rng.random(chunk) < p
        is_block = rng.random(chunk) < block_prob
        for own, blk in zip(owners, is_block):
            win.on_share(miner if own else "rest")
            if blk and win.full:
                payouts[found] = win.count(miner) * per_share
                found += 1
                if found == blocks:
                    break
    return {
        "mean": float(np.mean(payouts)),
        "variance": float(np.var(payouts)),
        "blocks": float(blocks),
    }


def simulate_pps_imbalance(
    reward: Fraction,
    share_difficulty: Fraction,
    block_difficulty: Fraction,
    shares_per_walk: int,
    walks: int,
    seed: int = 0,
) -> dict[str, float]:
    """Distribution of the PPS bankroll after a fixed number of shares.

    The rate is fair (B x block difficulty), so each share moves the bankroll
    by B(1{block} - q) with q = block probability per share. Returns the
    empirical standard deviation of the final bankroll over independent walks
    together with the binomial prediction B sqrt(n q (1-q)).
    """
    q = float(block_difficulty / share_difficulty)
    if not 0 < q < 1:
        raise ValueError("block difficulty must be strictly easier than share difficulty")
    rng = np.random.default_rng(seed)
    b = float(reward)
    finals = np.empty(walks, dtype=np.float64)
    for w in range(walks):
        blocks = rng.random(shares_per_walk) < q
        finals[w] = b * (blocks.sum() - q * shares_per_walk)
    return {
        "empirical_std": float(np.std(finals)),
        "predicted_std": b * float(np.sqrt(shares_per_walk * q * (1 - q))),
        "walks": float(walks),
        "mean_final": float(np.mean(finals)),
    }


def interleave_shares(counts: dict[str, int], rng: random.Random) -> list[str]:
    """Uniformly random interleaving of per-miner share counts (seeded)."""
    tags = [miner for miner, n in counts.items() for _ in range(n)]
    rng.shuffle(tags)
    return tags
