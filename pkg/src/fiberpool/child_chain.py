"""Simplified layer-2 ledger for using and withdrawing block rewards.

Each validated linking transaction becomes a deposit earmarked against its
distribution commitment. A miner claims its slice by opening the (pubkey,
work) leaf of the committed distribution — credit is amount x work /
total_work, exact in rational arithmetic, so a fully claimed deposit drains
to zero with no dust. Balances can move freely inside the child chain;
leaving it aggregates a miner's whole balance into one main-chain withdrawal
carrying an exit-priority tag three periods older than the oldest source
deposit. No fraud-proof game is modeled: the ticket's priority is computed
and asserted, nothing contests it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .crypto import Digest, MerkleProof, PublicKey, Signature, hash_bytes, merkle_verify, verify_signature
from .main_chain import VALIDATED, ContractState, LinkingTx, settle_pending, withdraw
from .protocol import PowDistribution, commit_distribution, distribution_leaf_bytes

#: Plasma-style exits must be prioritized as if deposited three periods
#: earlier, because fully leaving the pool takes up to three periods.
EXIT_PRIORITY_LAG = 3


@dataclass
class Deposit:
    amount: Fraction
    dist_commit: Digest
    period: int  # source mining period of the committed distribution
    total_work: Fraction
    leaf_count: int
    claimed: dict[PublicKey, bool] = field(default_factory=dict)
    remaining: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if self.remaining == 0:
            self.remaining = self.amount


@dataclass
class ChildAccount:
    pubkey: PublicKey
    balance: Fraction = Fraction(0)
    # Oldest source period among the funds here, propagated conservatively
    # through transfers; None until the account ever held anything.
    oldest_source_period: int | None = None


@dataclass(frozen=True)
class ExitTicket:
    pubkey: PublicKey
    amount: Fraction
    priority_period: int


@dataclass
class ChildChain:
    accounts: dict[PublicKey, ChildAccount] = field(default_factory=dict)
    deposits: list[Deposit] = field(default_factory=list)
    exits: list[ExitTicket] = field(default_factory=list)

    def account(self, pubkey: PublicKey) -> ChildAccount:
        if pubkey not in self.accounts:
            self.accounts[pubkey] = ChildAccount(pubkey=pubkey)
        return self.accounts[pubkey]

    @property
    def supply(self) -> Fraction:
        return sum((a.balance for a in self.accounts.values()), Fraction(0))

    @property
    def unclaimed(self) -> Fraction:
        return sum((d.remaining for d in self.deposits), Fraction(0))


def register_deposit(
    chain: ChildChain,
    contract_state: ContractState,
    link: LinkingTx,
    dist: PowDistribution,
) -> Deposit:
    """Turn a validated link into a claimable deposit.

    Settlement must already have run (the caller is the contract's next
    user). The full distribution is only needed here to learn total_work and
    the leaf count; claims afterwards carry their own openings. No funds move
    on the main chain — they leave the contract only at aggregated exit.
    """
    settle_pending(contract_state)
    if link.status != VALIDATED:
        raise ValueError(f"link must be validated before deposit, found {link.status!r}")
    if commit_distribution(dist) != link.dist_commit:
        raise ValueError("distribution does not match link")
    deposit = Deposit(
        amount=link.amount,
        dist_commit=link.dist_commit,
        period=dist.period,
        total_work=dist.total_work,
        leaf_count=len(dist.entries),
    )
    chain.deposits.append(deposit)
    return deposit


def claim_signing_bytes(deposit: Deposit, pubkey: PublicKey, work: Fraction) -> bytes:
    return deposit.dist_commit + hash_bytes(distribution_leaf_bytes(pubkey, work))


def claim(
    chain: ChildChain,
    deposit: Deposit,
    pubkey: PublicKey,
    work: Fraction,
    opening: MerkleProof,
    sig: Signature,
) -> Fraction:
    """Credit one miner's slice of a deposit; every check failure raises."""
    if deposit.claimed.get(pubkey):
        raise ValueError("pubkey already claimed this deposit")
    leaf = hash_bytes(distribution_leaf_bytes(pubkey, work))
    if not merkle_verify(deposit.dist_commit, leaf, opening, deposit.leaf_count):
        raise ValueError("opening does not prove (pubkey, work) in the committed distribution")
    if not verify_signature(pubkey, claim_signing_bytes(deposit, pubkey, work), sig):
        raise ValueError("claim signature invalid")
    credit = deposit.amount * work / deposit.total_work
    deposit.claimed[pubkey] = True
    deposit.remaining -= credit
    account = chain.account(pubkey)
    account.balance += credit
    if account.oldest_source_period is None or deposit.period < account.oldest_source_period:
        account.oldest_source_period = deposit.period
    return credit


def transfer(chain: ChildChain, frm: PublicKey, to: PublicKey, amount: Fraction) -> None:
    """Move value inside the child chain; total supply is unchanged."""
    if amount < 0:
        raise ValueError("cannot transfer a negative amount")
    if amount == 0:
        return
    src = chain.account(frm)
    if amount > src.balance:
        raise ValueError("insufficient child balance")
    dst = chain.account(to)
    src.balance -= amount
    dst.balance += amount
    if src.oldest_source_period is not None:
        if dst.oldest_source_period is None or src.oldest_source_period < dst.oldest_source_period:
            dst.oldest_source_period = src.oldest_source_period


def withdraw_aggregate(chain: ChildChain, pubkey: PublicKey, contract_state: ContractState) -> ExitTicket:
    """Exit a miner's whole child balance in one main-chain withdrawal."""
    account = chain.account(pubkey)
    if account.balance <= 0:
        raise ValueError("nothing to withdraw")
    settle_pending(contract_state)
    withdraw(contract_state, account.balance)
    source = account.oldest_source_period if account.oldest_source_period is not None else 0
    ticket = ExitTicket(
        pubkey=pubkey,
        amount=account.balance,
        priority_period=source - EXIT_PRIORITY_LAG,
    )
    account.balance = Fraction(0)
    account.oldest_source_period = None
    chain.exits.append(ticket)
    return ticket


def exit_order(tickets: list[ExitTicket]) -> list[ExitTicket]:
    """Processing order for exits: strictly by priority period, then arrival."""
    return sorted(tickets, key=lambda t: t.priority_period)
