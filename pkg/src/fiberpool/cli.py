"""Scenario runner CLI: ``fiberpool run | sweep | list-scenarios``.

Outputs per run (all byte-identical across reruns with the same config+seed):

  rows.csv        one row per (run, miner, period, scheme) with columns
                  run,miner,period,scheme,reward,cumulative_reward; rewards
                  are exact rationals ("1/4") so nothing is lost to floats
  summary.txt     measured-vs-analytic table for the scenario's check family
                  plus ledger totals, every number taken from RunStats
  effective.cfg   the fully resolved configuration that produced the run

``run --check`` exits nonzero if any check row fails, which makes CI the
verifier for the payment-scheme claims. ``sweep`` fans seeds out across
worker threads, one output directory per seed, plus an aggregate CSV.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

from .checks import CheckResult, run_checks
from .engine import RunStats
from .scenario import (
    ScenarioConfig,
    bundled_scenarios,
    parse_config,
    render_config,
    resolve_scenario,
    with_overrides,
)

CSV_COLUMNS = ["run", "miner", "period", "scheme", "reward", "cumulative_reward"]


def stats_rows(stats: RunStats, run_id: str) -> list[list[str]]:
    """Flatten RunStats into report rows, one per (run, miner, period, scheme)."""
    rows: list[list[str]] = []
    schemes = ["fproportional"] + sorted({k[0] for k in stats.baseline_rewards})
    cumulative: dict[tuple[str, str], Fraction] = {}
    for period in range(stats.scenario.periods):
        for spec in stats.scenario.miners:
            for scheme in schemes:
                if scheme == "fproportional":
                    reward = stats.reward(spec.name, period)
                else:
                    reward = stats.baseline_rewards.get((scheme, spec.name, period), Fraction(0))
                key = (spec.name, scheme)
                cumulative[key] = cumulative.get(key, Fraction(0)) + reward
                rows.append(
                    [run_id, spec.name, str(period), scheme, str(reward), str(cumulative[key])]
                )
    return rows


def check_rows(results: list[CheckResult], run_id: str) -> list[list[str]]:
    """Driver-only scenarios have no per-period ledger; emit one row per check."""
    return [
        [run_id, result.name, "0", "check", result.measured, result.expected]
        for result in results
    ]


def write_rows(path: Path, rows: list[list[str]]) -> None:
    with path.open("w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)


def summary_text(cfg: ScenarioConfig, stats: RunStats | None, results: list[CheckResult]) -> str:
    lines = [f"scenario {cfg.name} (seed {cfg.seed}, mode {cfg.mode}, check {cfg.check})", ""]
    header = f"{'check':<58} {'measured':>22} {'expected':>22} {'tolerance':<28} status"
    lines.append(header)
    lines.append("-" * len(header))
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        lines.append(
            f"{result.name:<58} {result.measured:>22} {result.expected:>22} "
            f"{result.tolerance:<28} {status}"
        )
    if stats is not None:
        lines += [
            "",
            f"pool coinbase credited : {stats.credited_total}",
            f"distributed to miners  : {stats.distributed_total}",
            f"frozen warm-up residual: {stats.frozen_warmup}",
            f"frozen invalidated     : {stats.frozen_invalidated}",
            f"contract balance/withdrawn after exits: "
            f"{stats.contract_balance} / {stats.contract_withdrawn}",
        ]
    lines.append("")
    return "\n".join(lines)


def run_command(
    cfg: ScenarioConfig, out_dir: Path | None, run_id: str = "run"
) -> tuple[int, RunStats | None, list[CheckResult]]:
    """Execute one scenario; write artifacts if out_dir given; exit code per checks."""
    stats, results = run_checks(cfg)
    rows = stats_rows(stats, run_id) if stats is not None else check_rows(results, run_id)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_rows(out_dir / "rows.csv", rows)
        (out_dir / "summary.txt").write_text(summary_text(cfg, stats, results))
        (out_dir / "effective.cfg").write_text(render_config(cfg))
    failed = [r for r in results if not r.passed]
    return (1 if failed else 0), stats, results


def _parse_seed_range(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in spec.split(",") if s.strip()]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fiberpool",
        description="Run pool-simulation scenarios and verify their payment-scheme claims.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario")
    run_p.add_argument("--scenario", required=True, help="scenario file or bundled name")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--periods", type=int, default=None, help="override the run length")
    run_p.add_argument("--check", action="store_true", help="exit nonzero if any check fails")
    run_p.add_argument("--out-dir", default=None, help="directory for rows.csv/summary.txt")

    sweep_p = sub.add_parser("sweep", help="run one scenario across many seeds")
    sweep_p.add_argument("--scenario", required=True)
    sweep_p.add_argument("--seeds", required=True, help='e.g. "1..100" or "1,2,7"')
    sweep_p.add_argument("--periods", type=int, default=None)
    sweep_p.add_argument("--check", action="store_true")
    sweep_p.add_argument("--out-dir", default=None)
    sweep_p.add_argument("--workers", type=int, default=4)

    sub.add_parser("list-scenarios", help="list scenario files shipped with the package")

    args = parser.parse_args(argv)

    if args.command == "list-scenarios":
        for name, path in sorted(bundled_scenarios().items()):
            first = next(
                (ln.lstrip("# ").rstrip() for ln in path.read_text().splitlines() if ln.startswith("#")),
                "",
            )
            print(f"{name:<18} {first}")
        return 0

    cfg = parse_config(resolve_scenario(args.scenario))
    cfg = with_overrides(cfg, seed=args.seed if args.command == "run" else None, periods=args.periods)

    if args.command == "run":
        out_dir = Path(args.out_dir) if args.out_dir else None
        code, stats, results = run_command(cfg, out_dir, run_id=f"{cfg.name}-s{cfg.seed}")
        print(summary_text(cfg, stats, results))
        if out_dir is not None:
            print(f"artifacts written to {out_dir}")
        return code if args.check else 0

    # sweep
    seeds = _parse_seed_range(args.seeds)
    out_root = Path(args.out_dir) if args.out_dir else None

    def one(seed: int) -> tuple[int, int, list[list[str]], list[CheckResult]]:
        scenario = with_overrides(cfg, seed=seed)
        out = out_root / f"seed-{seed}" if out_root else None
        code, stats, results = run_command(out_dir=out, cfg=scenario, run_id=f"{cfg.name}-s{seed}")
        rows = stats_rows(stats, f"{cfg.name}-s{seed}") if stats else check_rows(results, f"{cfg.name}-s{seed}")
        return seed, code, rows, results

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        outcomes = list(pool.map(one, seeds))
    outcomes.sort(key=lambda item: item[0])

    failures = sum(1 for _, code, _, _ in outcomes if code)
    if out_root is not None:
        out_root.mkdir(parents=True, exist_ok=True)
        aggregate = [row for _, _, rows, _ in outcomes for row in rows]
        write_rows(out_root / "aggregate.csv", aggregate)
    print(f"sweep over {len(seeds)} seeds: {len(seeds) - failures} passed, {failures} failed")
    return (1 if failures and args.check else 0)


if __name__ == "__main__":
    sys.exit(main())
