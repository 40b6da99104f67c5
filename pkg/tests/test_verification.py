"""Seven-step verification, distribution aggregation and padding economics."""

import random
from dataclasses import replace
from fractions import Fraction

import pytest

from fiberpool.crypto import keypair_from_seed
from fiberpool.protocol import batch_work, build_batch, make_distribution
from fiberpool.storage_chain import StorageChain, prepare_boundary
from fiberpool.verification import (
    LATEST_WINS,
    REJECT_ALL,
    BatchVerdict,
    VerificationContext,
    aggregate_distribution,
    expected_reward_under_cheating,
    simulate_padded_batches,
    verify_period,
)
from conftest import (
    CONTRACT,
    EXPECTED_COMMIT,
    SELF_SERVING_COMMIT,
    WRONG_COINBASE,
    build_chain_fixture,
    honest_shares,
)


def run_fixture(**kwargs):
    fixture = build_chain_fixture(**kwargs)
    verdicts, dist = verify_period(fixture.chain, fixture.ctx)
    assert len(verdicts) == 1
    return fixture, verdicts[0], dist


def test_honest_batch_accepted_with_work_n_over_d():
    fixture, verdict, dist = run_fixture()
    assert verdict.accepted
    assert verdict.work == batch_work(fixture.batch)
    assert dist.work_of(fixture.kp.public) == Fraction(8) / Fraction(1, 2)


def test_step1_batch_after_boundary():
    _, verdict, dist = run_fixture(boundary_before_batch=True)
    assert verdict.rejected_step == 1
    assert dist.entries == ()


def test_step1_missing_proof():
    _, verdict, _ = run_fixture(drop_proof=True)
    assert verdict.rejected_step == 1


def test_step2_wrong_index_opened():
    _, verdict, _ = run_fixture(proof_index_offset=1)
    assert verdict.rejected_step == 2


def test_step3_wrong_coinbase():
    kp = keypair_from_seed("fixture-miner")
    shares = honest_shares(kp, coinbase=WRONG_COINBASE)
    _, verdict, _ = run_fixture(shares=shares, kp=kp)
    assert verdict.rejected_step == 3


def test_step4_self_serving_distribution_commit_earns_nothing():
    kp = keypair_from_seed("fixture-miner")
    shares = honest_shares(kp, dist_commit=SELF_SERVING_COMMIT)
    _, verdict, dist = run_fixture(shares=shares, kp=kp)
    assert verdict.rejected_step == 4
    assert dist.work_of(kp.public) == 0  # the self-serving miner earns zero


def test_step5_difficulty_mismatch():
    _, verdict, _ = run_fixture(batch_difficulty=Fraction(1, 8))
    assert verdict.rejected_step == 5


def test_step6_invalid_pow():
    kp = keypair_from_seed("fixture-miner")
    shares = honest_shares(kp, valid=False)
    _, verdict, _ = run_fixture(shares=shares, kp=kp)
    assert verdict.rejected_step == 6


def test_step7_signature_by_wrong_key():
    stranger = keypair_from_seed("someone-else")
    _, verdict, _ = run_fixture(batch_signer=stranger)
    assert verdict.rejected_step == 7


def test_steps_check_in_order():
    # A batch violating steps 3 and 6 at once must fail at 3, the earlier one.
    kp = keypair_from_seed("fixture-miner")
    shares = honest_shares(kp, coinbase=WRONG_COINBASE, valid=False)
    _, verdict, _ = run_fixture(shares=shares, kp=kp)
    assert verdict.rejected_step == 3


def test_multiple_challenges_all_must_pass():
    fixture = build_chain_fixture(challenges=3)
    verdicts, _ = verify_period(fixture.chain, fixture.ctx)
    assert verdicts[0].accepted


# ---------------------------------------------------------------- aggregation


def _verdict(kp_name: str, work: int, period=0, counter_start=0, share_count=10, height=0):
    kp = keypair_from_seed(kp_name)
    shares = honest_shares(kp, count=share_count, difficulty=Fraction(1), period=period)
    batch, _ = build_batch(kp, shares, counter_start=0)
    batch = replace(batch, counter_start=counter_start)
    return BatchVerdict(batch=batch, batch_height=height, work=Fraction(work))


def test_aggregate_sums_accepted_works():
    verdicts = [_verdict("agg-a", 10_000), _verdict("agg-b", 30_000)]
    dist = aggregate_distribution(verdicts, period=0)
    assert dist.total_work == 40_000
    assert dist.work_of(keypair_from_seed("agg-a").public) == 10_000
    assert dist.work_of(keypair_from_seed("agg-b").public) == 30_000


def test_aggregate_ignores_rejected():
    rejected = BatchVerdict(
        batch=_verdict("agg-a", 10).batch, batch_height=0, work=None, rejected_step=6, reason="pow"
    )
    dist = aggregate_distribution([rejected], period=0)
    assert dist.entries == ()


def test_aggregate_order_invariant_commitment():
    from fiberpool.protocol import commit_distribution

    verdicts = [_verdict(f"agg-{i}", 1000 * (i + 1)) for i in range(6)]
    base = commit_distribution(aggregate_distribution(verdicts, 0))
    rng = random.Random(5)
    for _ in range(10):
        shuffled = list(verdicts)
        rng.shuffle(shuffled)
        assert commit_distribution(aggregate_distribution(shuffled, 0)) == base


def test_aggregate_disjoint_ranges_sum():
    a1 = _verdict("agg-a", 100, counter_start=0, share_count=10, height=0)
    a2 = _verdict("agg-a", 50, counter_start=10, share_count=5, height=1)
    dist = aggregate_distribution([a1, a2], period=0)
    assert dist.work_of(keypair_from_seed("agg-a").public) == 150


def test_aggregate_overlap_reject_all_by_default():
    a1 = _verdict("agg-a", 100, counter_start=0, share_count=10, height=0)
    a2 = _verdict("agg-a", 100, counter_start=5, share_count=10, height=1)
    b = _verdict("agg-b", 70, counter_start=0, share_count=7, height=2)
    dist = aggregate_distribution([a1, a2, b], period=0, overlap_policy=REJECT_ALL)
    assert dist.work_of(keypair_from_seed("agg-a").public) == 0
    assert dist.work_of(keypair_from_seed("agg-b").public) == 70


def test_aggregate_overlap_latest_wins_policy():
    a1 = _verdict("agg-a", 100, counter_start=0, share_count=10, height=0)
    a2 = _verdict("agg-a", 120, counter_start=0, share_count=10, height=3)
    dist = aggregate_distribution([a1, a2], period=0, overlap_policy=LATEST_WINS)
    assert dist.work_of(keypair_from_seed("agg-a").public) == 120


def test_aggregate_skips_other_periods():
    dist = aggregate_distribution([_verdict("agg-a", 10, period=3)], period=0)
    assert dist.entries == ()


def test_corrected_batch_after_rejection_counts():
    # Only accepted ranges participate in the overlap rule.
    bad = BatchVerdict(
        batch=_verdict("agg-a", 100, height=0).batch, batch_height=0,
        work=None, rejected_step=6, reason="pow",
    )
    good = _verdict("agg-a", 100, height=2)
    dist = aggregate_distribution([bad, good], period=0)
    assert dist.work_of(keypair_from_seed("agg-a").public) == 100


# ------------------------------------------------------------------ economics


def test_expected_reward_under_cheating_values():
    assert expected_reward_under_cheating(Fraction(10), Fraction(1, 5)) == 8
    assert expected_reward_under_cheating(Fraction(10), Fraction(0)) == 10
    assert expected_reward_under_cheating(Fraction(10), Fraction(1)) == 0
    with pytest.raises(ValueError):
        expected_reward_under_cheating(Fraction(10), Fraction(2))


def test_padding_invalid_shares_does_not_pay_small_mc():
    out = simulate_padded_batches(
        batches=600, batch_size=50, invalid_fraction=Fraction(1, 5),
        difficulty=Fraction(1, 2), seed=4,
    )
    assert abs(out["mean_work"] - out["expected_work"]) <= 3 * out["sigma_mean"]
    assert out["expected_work"] == pytest.approx(50 / 0.5 * 0.8)


def test_boundary_report_includes_late_batches_as_step1():
    # A batch sealed after the boundary is visible to a later scan and must
    # read as a step-1 rejection, not disappear.
    fixture = build_chain_fixture()
    late_ctx = VerificationContext(
        period=fixture.ctx.period,
        boundary=prepare_boundary(fixture.chain, 1.5, fixture.ctx.period + 2),
        expected_dist_commit=EXPECTED_COMMIT,
        contract_address=CONTRACT,
    )
    verdicts, dist = verify_period(fixture.chain, late_ctx)
    assert verdicts[0].rejected_step == 1
    assert dist.entries == ()
