"""End-to-end engine behavior: lag, determinism, strategies, conservation."""

from dataclasses import replace
from fractions import Fraction

import pytest

from fiberpool.checks import (
    check_cross_period,
    check_delay,
    cross_period_objective,
    hopping_cycle_losses,
    measured_cross_period_reward,
    rewards_fingerprint,
    run_with_delay,
    simplex_grid,
)
from fiberpool.engine import collect_fairness, run
from fiberpool.protocol import PeriodConfig
from fiberpool.scenario import (
    BaselineConfig,
    CrossPeriod,
    DelayedSubmitter,
    External,
    Honest,
    MinerSpec,
    PoolHopper,
    ScenarioConfig,
    ScenarioError,
)


def scenario(miners, periods=8, mode="exact", check="none", period_len=20, prepare_len=4,
             hashes=400, reward=Fraction(1), seed=7, difficulty=Fraction(1, 10),
             baselines=BaselineConfig(), driver=None):
    return ScenarioConfig(
        name="test", seed=seed, periods=periods, mode=mode, check=check,
        period=PeriodConfig(period_len=period_len, prepare_len=prepare_len, block_interval=1.0),
        block_reward=reward, storage_interval=0.5, hashes_per_period=hashes,
        share_difficulty=difficulty, miners=tuple(miners), baselines=baselines,
        driver=driver or {},
    )


THREE = [
    MinerSpec("m1", Fraction(1, 10), Honest()),
    MinerSpec("m2", Fraction(3, 10), Honest()),
    MinerSpec("m3", Fraction(6, 10), External()),
]


def test_degenerate_single_pool_miner_gets_everything_lagged():
    # One miner with the whole hashrate: every reward comes back, two periods late.
    stats = run(scenario([MinerSpec("solo", Fraction(1), Honest())], periods=6))
    assert stats.reward("solo", 0) == 0
    assert stats.reward("solo", 1) == 0
    for period in range(2, 6):
        assert stats.reward("solo", period) == stats.pool_coinbase_by_period[period]
    assert stats.frozen_warmup == sum(
        (stats.pool_coinbase_by_period[p] for p in (0, 1)), Fraction(0)
    )


def test_two_period_lag_provenance():
    stats = run(scenario(THREE))
    for record in stats.claims:
        assert record.block_period == record.source_period + 2


def test_same_seed_reproduces_identical_results():
    a = run(scenario(THREE, mode="grind"))
    b = run(scenario(THREE, mode="grind"))
    assert rewards_fingerprint(a) == rewards_fingerprint(b)
    assert a.claims == b.claims
    assert a.distributions == b.distributions


def test_different_seed_changes_grind_results():
    a = run(scenario(THREE, mode="grind", seed=1))
    b = run(scenario(THREE, mode="grind", seed=2))
    assert rewards_fingerprint(a) != rewards_fingerprint(b)


def test_exact_mode_fairness_is_one_quarter():
    stats = run(scenario(THREE, periods=10))
    for record in stats.claims:
        if record.miner == "m1" and record.block_period >= 2:
            assert record.amount / record.deposit_amount == Fraction(1, 4)
    pairs = dict((name, rf) for name, _, rf in collect_fairness(stats))
    assert pairs["m1"] == Fraction(1, 4)
    assert pairs["m2"] == Fraction(3, 4)
    assert pairs["m3"] == 0


def test_budget_residual_zero_and_conservation():
    stats = run(scenario(THREE, periods=10, mode="grind"))
    assert stats.budget_residual == 0
    assert stats.credited_total == stats.contract_balance + stats.contract_withdrawn
    # After final exits the contract holds exactly the frozen residual.
    assert stats.contract_balance == stats.frozen_warmup + stats.frozen_invalidated


def test_poisson_mode_runs_and_balances():
    stats = run(scenario(THREE, periods=6, mode="poisson"))
    assert stats.budget_residual == 0


def test_external_miner_never_claims():
    stats = run(scenario(THREE))
    assert all(record.miner != "m3" for record in stats.claims)
    assert sum(stats.solo_rewards.get(("m3", p), Fraction(0)) for p in range(8)) > 0


def test_exact_mode_requires_integral_blocks():
    bad = [
        MinerSpec("m1", Fraction(1, 3), Honest()),
        MinerSpec("m2", Fraction(2, 3), Honest()),
    ]
    with pytest.raises(ScenarioError, match="period_len"):
        run(scenario(bad, period_len=20, prepare_len=4))


def test_exits_emitted_with_lagged_priority():
    stats = run(scenario(THREE, periods=8))
    exits = {t.pubkey: t for t in stats.exits}
    assert len(exits) == 2  # both pool miners exit their balances
    # Oldest source period of any claim is 0; priority is three back.
    assert min(t.priority_period for t in stats.exits) == -3


# ------------------------------------------------------------------- hopping


def test_hopper_loss_exact_value():
    miners = [
        MinerSpec("m1", Fraction(2, 10), PoolHopper(cycle_len=10)),
        MinerSpec("m2", Fraction(3, 10), Honest()),
        MinerSpec("m3", Fraction(5, 10), External()),
    ]
    cfg = scenario(miners, periods=31, period_len=10, prepare_len=2,
                   reward=Fraction(1, 10), hashes=100, check="hopping")
    losses, expected = hopping_cycle_losses(cfg, run(cfg))
    assert expected == Fraction(4, 25)
    assert set(losses) == {Fraction(4, 25)}


def test_hopper_first_two_periods_of_cycle_pay_zero():
    miners = [
        MinerSpec("m1", Fraction(2, 10), PoolHopper(cycle_len=10)),
        MinerSpec("m2", Fraction(3, 10), Honest()),
        MinerSpec("m3", Fraction(5, 10), External()),
    ]
    stats = run(scenario(miners, periods=31, period_len=10, prepare_len=2,
                         reward=Fraction(1, 10), hashes=100))
    # Cycle 1 starts at period 10: rewards of its first two periods are zero,
    # the final two (solo) periods pay R(a + ab/(a+b)) each.
    assert stats.reward("m1", 10) == 0
    assert stats.reward("m1", 11) == 0
    r, a, b = Fraction(1), Fraction(2, 10), Fraction(3, 10)
    solo_period_income = r * (a + a * b / (a + b))
    assert stats.reward("m1", 18) == solo_period_income
    assert stats.reward("m1", 19) == solo_period_income
    for period in range(12, 18):
        assert stats.reward("m1", period) == r * a


# --------------------------------------------------------------- cross-period


CROSS = [
    MinerSpec("m1", Fraction(2, 10), CrossPeriod(start=2, allocation=(80, 80, 80, 80))),
    MinerSpec("m2", Fraction(8, 10), Honest()),
]


def test_cross_period_engine_matches_formula():
    cfg = scenario(CROSS, periods=8, hashes=400)
    for allocation in [(80, 80, 80, 80), (320, 0, 0, 0), (160, 160, 0, 0)]:
        measured = measured_cross_period_reward(cfg, allocation)
        analytic = cross_period_objective(allocation, Fraction(20), 400, Fraction(2, 10))
        assert measured == analytic


def test_cross_period_uniform_beats_concentration():
    cfg = scenario(CROSS, periods=8, hashes=400)
    uniform = measured_cross_period_reward(cfg, (80, 80, 80, 80))
    lumped = measured_cross_period_reward(cfg, (320, 0, 0, 0))
    assert uniform > lumped


def test_simplex_grid_counts_and_sums():
    grid = simplex_grid(4, Fraction(1, 20))
    assert len(grid) == 1771  # C(23, 3) compositions of 20 into 4 parts
    assert all(sum(point) == 1 for point in grid)


def test_single_period_allocation_trivially_optimal():
    miners = [
        MinerSpec("m1", Fraction(2, 10), CrossPeriod(start=2, allocation=(80,))),
        MinerSpec("m2", Fraction(8, 10), Honest()),
    ]
    cfg = scenario(miners, periods=6, hashes=400)
    measured = measured_cross_period_reward(cfg, (80,))
    assert measured == cross_period_objective((80,), Fraction(20), 400, Fraction(2, 10))


# ---------------------------------------------------------------------- delay


DELAYED = [
    MinerSpec("m1", Fraction(1, 10), DelayedSubmitter(delay=0)),
    MinerSpec("m2", Fraction(3, 10), Honest()),
    MinerSpec("m3", Fraction(6, 10), External()),
]


def test_delay_within_deadline_is_neutral():
    cfg = scenario(DELAYED, periods=8, mode="grind", check="delay")
    base = rewards_fingerprint(run_with_delay(cfg, 0))
    assert rewards_fingerprint(run_with_delay(cfg, 1)) == base
    assert rewards_fingerprint(run_with_delay(cfg, 5)) == base


def test_delay_past_boundary_rejected_step_1():
    cfg = scenario(DELAYED, periods=8, mode="grind", check="delay")
    late = run_with_delay(cfg, cfg.period.period_len - cfg.period.prepare_len)
    m1_verdicts = [v for v in late.verdicts if v.miner == "m1"]
    assert m1_verdicts and all(v.rejected_step == 1 for v in m1_verdicts)
    assert all(late.reward_by_source("m1", j) == 0 for j in range(cfg.periods))
    # Periods still balance: m1's forfeited work goes to m2, nothing vanishes.
    assert late.budget_residual == 0


# ------------------------------------------------------------------ baselines


def test_baselines_consume_engine_streams():
    cfg = scenario(
        THREE, periods=8, mode="grind", hashes=800,
        baselines=BaselineConfig(schemes=("pplns", "pps", "proportional"), pplns_window=40),
    )
    stats = run(cfg)
    pool_reward_total = sum(stats.pool_coinbase_by_period.values(), Fraction(0))
    pplns_total = sum(
        amount for (scheme, _, _), amount in stats.baseline_rewards.items() if scheme == "pplns"
    )
    prop_total = sum(
        amount for (scheme, _, _), amount in stats.baseline_rewards.items() if scheme == "proportional"
    )
    # Proportional is budget balanced per block; PPLNS pays at most B per block
    # (partial windows before the first ~window shares keep the remainder).
    assert prop_total == pool_reward_total
    assert pplns_total <= pool_reward_total
    warmup_coinbase = sum(
        (stats.pool_coinbase_by_period.get(p, Fraction(0)) for p in (0, 1)), Fraction(0)
    )
    assert pool_reward_total - pplns_total <= warmup_coinbase
    assert ("pps", "m1", 0) in stats.baseline_rewards or ("pps", "m2", 0) in stats.baseline_rewards
    assert stats.pps_bankroll_by_period  # trajectory recorded per period
