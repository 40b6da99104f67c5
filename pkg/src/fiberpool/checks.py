"""Measured-vs-analytic checks connecting runs to the payment-scheme claims.

Each scenario kind maps to one check family. A check consumes RunStats (or
drives the dedicated Monte-Carlo simulators) and produces rows of measured
value, analytic expectation and the tolerance at which they must agree —
exact rational equality in statistical-exact mode, sampling-noise bounds
(3 sigma, or a stated relative tolerance) otherwise. The CLI's ``--check``
turns any failed row into a nonzero exit code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import combinations_with_replacement

from . import engine as engine_mod
from .crypto import keypair_from_seed
from .engine import RunStats, collect_fairness
from .payments import simulate_pplns_variance, simulate_pps_imbalance
from .scenario import CrossPeriod, DelayedSubmitter, External, MinerSpec, PoolHopper, ScenarioConfig
from .verification import expected_reward_under_cheating, simulate_padded_batches


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: str
    expected: str
    tolerance: str
    passed: bool


def _result(name: str, measured, expected, tolerance: str, passed: bool) -> CheckResult:
    return CheckResult(name, str(measured), str(expected), tolerance, bool(passed))


def _pool_miners(cfg: ScenarioConfig) -> list[MinerSpec]:
    return [m for m in cfg.miners if not isinstance(m.strategy, External)]


# --------------------------------------------------------------------- fairness


def check_fairness(cfg: ScenarioConfig, stats: RunStats) -> list[CheckResult]:
    results: list[CheckResult] = []
    pool = _pool_miners(cfg)
    pool_fraction = sum((m.fraction for m in pool), Fraction(0))

    if cfg.mode == "exact":
        # Every pool block's reward from period 2 onward splits exactly by hashrate.
        for spec in pool:
            expected = spec.fraction / pool_fraction
            fractions = {
                r.amount / r.deposit_amount
                for r in stats.claims
                if r.miner == spec.name and r.block_period >= 2
            }
            ok = fractions == {expected}
            results.append(
                _result(
                    f"per-block reward fraction of {spec.name}",
                    "{" + ", ".join(str(f) for f in sorted(fractions)) + "}",
                    expected,
                    "exact",
                    ok,
                )
            )
            # Theorem-2 side: per-block reward variance is identically zero.
            amounts = {
                r.amount for r in stats.claims if r.miner == spec.name and r.block_period >= 2
            }
            results.append(
                _result(
                    f"per-block reward variance of {spec.name}",
                    0 if len(amounts) <= 1 else "nonzero",
                    0,
                    "exact",
                    len(amounts) <= 1,
                )
            )
    else:
        # Grind mode: accepted-share split within 3 sigma of the binomial model.
        dist_total: dict[str, Fraction] = {m.name: Fraction(0) for m in pool}
        d = cfg.share_difficulty
        for dist in stats.distributions.values():
            for spec in pool:
                key = keypair_from_seed(f"miner:{spec.name}").public
                dist_total[spec.name] += dist.work_of(key)
        total_work = sum(dist_total.values(), Fraction(0))
        total_shares = float(total_work * d)
        for spec in pool:
            p = float(spec.fraction / pool_fraction)
            measured = float(dist_total[spec.name] / total_work) if total_work else 0.0
            sigma = math.sqrt(p * (1 - p) / total_shares) if total_shares else float("inf")
            ok = abs(measured - p) <= 3 * sigma
            results.append(
                _result(
                    f"verified work fraction of {spec.name}",
                    f"{measured:.6f}",
                    f"{p:.6f}",
                    f"3 sigma = {3 * sigma:.6f}",
                    ok,
                )
            )
        # Reward split, weighted by each period's pool reward (delta-method sigma).
        fairness = collect_fairness(stats)
        rewards = {
            j: stats.pool_coinbase_by_period.get(j, Fraction(0))
            for j in range(2, cfg.periods)
        }
        total_r = float(sum(rewards.values(), Fraction(0)))
        for spec in pool:
            p = float(spec.fraction / pool_fraction)
            measured = next(float(rf) for name, _, rf in fairness if name == spec.name)
            var = 0.0
            for j, r in rewards.items():
                dist = stats.distributions.get(j - 2)
                if dist is None or not dist.entries or r == 0 or total_r == 0:
                    continue
                n_j = float(dist.total_work * d)
                var += (float(r) / total_r) ** 2 * p * (1 - p) / n_j
            sigma = math.sqrt(var)
            ok = abs(measured - p) <= 3 * sigma
            results.append(
                _result(
                    f"pool reward fraction of {spec.name}",
                    f"{measured:.6f}",
                    f"{p:.6f}",
                    f"3 sigma = {3 * sigma:.6f}",
                    ok,
                )
            )

    results.extend(check_budget_balance(cfg, stats))
    return results


def check_budget_balance(cfg: ScenarioConfig, stats: RunStats) -> list[CheckResult]:
    warmup_expected = sum(
        (stats.pool_coinbase_by_period.get(j, Fraction(0)) for j in (0, 1)), Fraction(0)
    )
    return [
        _result(
            "budget residual (coinbase - distributed - frozen)",
            stats.budget_residual,
            0,
            "exact",
            stats.budget_residual == 0,
        ),
        _result(
            "frozen warm-up residual",
            stats.frozen_warmup,
            warmup_expected,
            "exact (first two periods' pool rewards)",
            stats.frozen_warmup == warmup_expected,
        ),
        _result(
            "honest links never invalidated",
            stats.frozen_invalidated,
            0,
            "exact",
            stats.frozen_invalidated == 0,
        ),
    ]


# --------------------------------------------------------------------- hopping


def _hopper(cfg: ScenarioConfig) -> MinerSpec:
    for spec in cfg.miners:
        if isinstance(spec.strategy, PoolHopper):
            return spec
    raise ValueError("hopping check needs a miner with the hopper strategy")


def hopping_cycle_losses(cfg: ScenarioConfig, stats: RunStats) -> tuple[list[Fraction], Fraction]:
    """Per-cycle loss of the hopper vs always-solo, and the analytic loss.

    Always-solo income is coupled to the same block lottery: it is the block
    reward times the number of blocks the hopper actually produced in the
    cycle, which it would have kept entirely had it never joined the pool.
    Cycle 0 is skipped (global warm-up pollutes it).
    """
    spec = _hopper(cfg)
    cycle = spec.strategy.cycle_len
    alpha = spec.fraction
    beta = sum(
        (m.fraction for m in _pool_miners(cfg) if m.name != spec.name), Fraction(0)
    )
    r_per_period = cfg.block_reward * cfg.period.period_len
    expected = 2 * r_per_period * alpha * alpha / (alpha + beta)

    losses: list[Fraction] = []
    k = 1
    while (k + 1) * cycle <= cfg.periods:
        periods = range(k * cycle, (k + 1) * cycle)
        actual = sum((stats.reward(spec.name, p) for p in periods), Fraction(0))
        produced = sum(stats.blocks_by_miner_period.get((spec.name, p), 0) for p in periods)
        counterfactual = cfg.block_reward * produced
        losses.append(counterfactual - actual)
        k += 1
    return losses, expected


def check_hopping(cfg: ScenarioConfig, stats: RunStats) -> list[CheckResult]:
    losses, expected = hopping_cycle_losses(cfg, stats)
    results: list[CheckResult] = []
    if cfg.mode == "exact":
        distinct = set(losses)
        ok = distinct == {expected}
        results.append(
            _result(
                f"per-cycle hopping loss over {len(losses)} cycles",
                "{" + ", ".join(str(x) for x in sorted(distinct)) + "}",
                expected,
                "exact",
                ok,
            )
        )
    else:
        values = [float(x) for x in losses]
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        stderr = math.sqrt(var / len(values))
        ok = abs(mean - float(expected)) <= 3 * stderr
        results.append(
            _result(
                f"mean hopping loss over {len(losses)} cycles",
                f"{mean:.6f}",
                f"{float(expected):.6f}",
                f"3 sigma = {3 * stderr:.6f}",
                ok,
            )
        )
    results.extend(check_budget_balance(cfg, stats))
    return results


# ----------------------------------------------------------------- cross-period


def cross_period_objective(
    allocation: tuple[int | Fraction, ...],
    r_per_period: Fraction,
    total_pow: int,
    alpha: Fraction,
) -> Fraction:
    """Analytic reward for an allocation: sum of R x_i / (P(1-alpha) + x_i)."""
    others = total_pow * (1 - alpha)
    return sum(
        (r_per_period * x / (others + x) for x in allocation if x > 0), Fraction(0)
    )


def simplex_grid(n_parts: int, step: Fraction) -> list[tuple[Fraction, ...]]:
    """All nonnegative n-part compositions of 1 with parts on a step grid."""
    ticks = int(1 / step)
    if step * ticks != 1:
        raise ValueError("grid step must divide 1")
    out = []
    for cut in combinations_with_replacement(range(ticks + 1), n_parts - 1):
        bounds = (0, *cut, ticks)
        out.append(tuple(Fraction(bounds[i + 1] - bounds[i], ticks) for i in range(n_parts)))
    return out


def _cross_spec(cfg: ScenarioConfig) -> MinerSpec:
    for spec in cfg.miners:
        if isinstance(spec.strategy, CrossPeriod):
            return spec
    raise ValueError("cross-period check needs a miner with the crossperiod strategy")


def measured_cross_period_reward(cfg: ScenarioConfig, allocation: tuple[int, ...]) -> Fraction:
    """Engine-measured reward attributable to the allocation window."""
    spec = _cross_spec(cfg)
    strategy = replace(spec.strategy, allocation=allocation)
    miners = tuple(replace(m, strategy=strategy) if m.name == spec.name else m for m in cfg.miners)
    stats = engine_mod.run(replace(cfg, miners=miners))
    start = spec.strategy.start
    return sum(
        (stats.reward_by_source(spec.name, start + k) for k in range(len(allocation))),
        Fraction(0),
    )


def check_cross_period(cfg: ScenarioConfig) -> list[CheckResult]:
    spec = _cross_spec(cfg)
    if any(isinstance(m.strategy, External) for m in cfg.miners):
        raise ValueError("cross-period scenarios put all hashrate in the pool")
    n = len(spec.strategy.allocation)
    if spec.strategy.start + n + 2 > cfg.periods:
        raise ValueError("run too short: the whole allocation window must pay out")
    alpha = spec.fraction
    total_pow = cfg.hashes_per_period
    r_per_period = cfg.block_reward * cfg.period.period_len
    budget = int(alpha * total_pow) * n  # total hashes to spread over the window
    step = Fraction(cfg.driver.get("grid_step", "1/20"))

    uniform = tuple([budget // n] * n)
    objective_uniform = cross_period_objective(uniform, r_per_period, total_pow, alpha)

    results: list[CheckResult] = []

    # Engine agrees with the analytic objective on sampled allocations (exact).
    samples: list[tuple[int, ...]] = [uniform, (budget, *[0] * (n - 1))]
    if n >= 2:
        samples.append((budget // 2, *[0] * (n - 2), budget - budget // 2))
    for allocation in samples:
        measured = measured_cross_period_reward(cfg, allocation)
        analytic = cross_period_objective(allocation, r_per_period, total_pow, alpha)
        results.append(
            _result(
                f"engine reward for allocation {allocation}",
                measured,
                analytic,
                "exact",
                measured == analytic,
            )
        )

    # Grid search: no point on the simplex beats the uniform allocation.
    best_other = Fraction(0)
    best_point: tuple[Fraction, ...] | None = None
    exceeded = False
    for point in simplex_grid(n, step):
        allocation = tuple(int(f * budget) for f in point)
        if sum(allocation) != budget:
            # Fractions that do not land on whole hashes are still comparable
            # analytically; scale exactly instead of rounding.
            value = cross_period_objective(
                tuple(f * budget for f in point), r_per_period, total_pow, alpha
            )
        else:
            value = cross_period_objective(allocation, r_per_period, total_pow, alpha)
        if value > objective_uniform:
            exceeded = True
        if allocation != uniform and value > best_other:
            best_other, best_point = value, point
    results.append(
        _result(
            f"uniform allocation is the grid maximum (step {step}, {n} periods)",
            f"best non-uniform {float(best_other):.6f} at {best_point}",
            f"uniform {float(objective_uniform):.6f}",
            "no grid point exceeds uniform",
            not exceeded,
        )
    )
    return results


# ---------------------------------------------------------------------- delay


def _delayed_spec(cfg: ScenarioConfig) -> MinerSpec:
    for spec in cfg.miners:
        if isinstance(spec.strategy, DelayedSubmitter):
            return spec
    raise ValueError("delay check needs a miner with the delayed strategy")


def rewards_fingerprint(stats: RunStats) -> bytes:
    """Canonical byte serialization of every miner's per-period rewards."""
    lines = []
    for spec in stats.scenario.miners:
        for period, amount in sorted(stats.rewards_by_period(spec.name).items()):
            lines.append(f"{spec.name},{period},{amount}")
    return "\n".join(lines).encode()


def run_with_delay(cfg: ScenarioConfig, delay: int) -> RunStats:
    spec = _delayed_spec(cfg)
    miners = tuple(
        replace(m, strategy=DelayedSubmitter(delay=delay)) if m.name == spec.name else m
        for m in cfg.miners
    )
    return engine_mod.run(replace(cfg, miners=miners))


def check_delay(cfg: ScenarioConfig) -> list[CheckResult]:
    spec = _delayed_spec(cfg)
    delays = [int(x) for x in cfg.driver.get("delays", "0,1,5").split(",")]
    late = int(cfg.driver.get("late_delay", cfg.period.period_len - cfg.period.prepare_len))

    fingerprints = {d: rewards_fingerprint(run_with_delay(cfg, d)) for d in delays}
    identical = len(set(fingerprints.values())) == 1
    results = [
        _result(
            f"per-miner rewards identical for delays {delays}",
            "identical" if identical else "diverged",
            "identical",
            "byte-identical",
            identical,
        )
    ]

    late_stats = run_with_delay(cfg, late)
    verdicts = [v for v in late_stats.verdicts if v.miner == spec.name]
    all_step1 = bool(verdicts) and all(
        (not v.accepted and v.rejected_step == 1) for v in verdicts
    )
    results.append(
        _result(
            f"delay {late} past the Prepare boundary rejects at step 1",
            f"{len(verdicts)} verdicts, steps "
            + "{" + ", ".join(sorted({str(v.rejected_step) for v in verdicts})) + "}",
            "all step 1",
            "exact",
            all_step1,
        )
    )
    no_reward = all(
        late_stats.reward_by_source(spec.name, j) == 0 for j in range(cfg.periods)
    )
    results.append(
        _result(
            "late miner earns zero for every delayed period",
            "0" if no_reward else "nonzero",
            "0",
            "exact",
            no_reward,
        )
    )
    return results


# ------------------------------------------------------------------- variance


def check_pplns_variance(cfg: ScenarioConfig) -> list[CheckResult]:
    p = float(Fraction(cfg.driver.get("p", "1/4")))
    window = int(cfg.driver.get("window", str(cfg.baselines.pplns_window)))
    blocks = int(cfg.driver.get("blocks", "100000"))
    block_prob = float(Fraction(cfg.driver.get("block_prob", "1/10")))
    reward = Fraction(cfg.driver.get("reward", str(cfg.block_reward)))

    out = simulate_pplns_variance(
        p=p, reward=reward, window=window, blocks=blocks, block_prob=block_prob, seed=cfg.seed
    )
    expected = p * (1 - p) * float(reward) ** 2 / window
    tolerance = 0.05 * expected
    ok = abs(out["variance"] - expected) <= tolerance
    return [
        _result(
            f"PPLNS per-block reward variance (p={p}, N={window}, {blocks} blocks)",
            f"{out['variance']:.6g}",
            f"{expected:.6g}",
            "within 5%",
            ok,
        ),
        _result(
            "PPLNS per-block mean reward",
            f"{out['mean']:.6g}",
            f"{p * float(reward):.6g}",
            "within 5%",
            abs(out["mean"] - p * float(reward)) <= 0.05 * p * float(reward),
        ),
    ]


def check_pps_imbalance(cfg: ScenarioConfig) -> list[CheckResult]:
    walks = int(cfg.driver.get("walks", "200"))
    shares = int(cfg.driver.get("shares_per_walk", "20000"))
    block_difficulty = Fraction(cfg.driver.get("block_difficulty", "1/400"))
    out = simulate_pps_imbalance(
        reward=cfg.block_reward,
        share_difficulty=cfg.share_difficulty,
        block_difficulty=block_difficulty,
        shares_per_walk=shares,
        walks=walks,
        seed=cfg.seed,
    )
    # The sd-of-sd for ~Gaussian finals is predicted/sqrt(2*walks); use 3 of those.
    rel_tol = 3.0 / math.sqrt(2 * walks)
    ok = abs(out["empirical_std"] - out["predicted_std"]) <= rel_tol * out["predicted_std"]
    mean_tol = 3.0 * out["predicted_std"] / math.sqrt(walks)
    return [
        _result(
            f"PPS bankroll spread after {shares} shares ({walks} walks)",
            f"{out['empirical_std']:.6g}",
            f"{out['predicted_std']:.6g}",
            f"within {100 * rel_tol:.1f}%",
            ok,
        ),
        _result(
            "PPS bankroll drift",
            f"{out['mean_final']:.6g}",
            "0",
            f"3 sigma = {mean_tol:.6g}",
            abs(out["mean_final"]) <= mean_tol,
        ),
    ]


def check_cheater_batches(cfg: ScenarioConfig) -> list[CheckResult]:
    batches = int(cfg.driver.get("batches", "10000"))
    batch_size = int(cfg.driver.get("batch_size", "100"))
    invalid_fraction = Fraction(cfg.driver.get("invalid_fraction", "1/5"))
    difficulty = Fraction(cfg.driver.get("difficulty", "1/2"))
    out = simulate_padded_batches(
        batches=batches,
        batch_size=batch_size,
        invalid_fraction=invalid_fraction,
        difficulty=difficulty,
        seed=cfg.seed,
        challenges=cfg.challenges_per_batch,
    )
    ok = abs(out["mean_work"] - out["expected_work"]) <= 3 * out["sigma_mean"]
    oracle = expected_reward_under_cheating(Fraction(10), Fraction(1, 5))
    return [
        _result(
            f"mean accepted work, f={invalid_fraction}, {batches} batches of {batch_size}",
            f"{out['mean_work']:.4f}",
            f"{out['expected_work']:.4f}",
            f"3 sigma = {3 * out['sigma_mean']:.4f}",
            ok,
        ),
        _result(
            "analytic cheating oracle B=10, f=1/5",
            oracle,
            8,
            "exact",
            oracle == 8,
        ),
    ]


# ------------------------------------------------------------------- dispatch


def run_checks(cfg: ScenarioConfig) -> tuple[RunStats | None, list[CheckResult]]:
    """Run the scenario's check family; engine scenarios also return their stats."""
    if cfg.check in ("none", "fairness", "hopping"):
        stats = engine_mod.run(cfg)
        if cfg.check == "fairness":
            return stats, check_fairness(cfg, stats)
        if cfg.check == "hopping":
            return stats, check_hopping(cfg, stats)
        return stats, check_budget_balance(cfg, stats)
    if cfg.check == "cross-period":
        return engine_mod.run(cfg), check_cross_period(cfg)
    if cfg.check == "delay":
        return engine_mod.run(cfg), check_delay(cfg)
    if cfg.check == "pplns-variance":
        return None, check_pplns_variance(cfg)
    if cfg.check == "pps-imbalance":
        return None, check_pps_imbalance(cfg)
    if cfg.check == "cheater-batches":
        return None, check_cheater_batches(cfg)
    raise ValueError(f"unknown check {cfg.check!r}")
