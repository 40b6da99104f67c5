"""Scenario configuration: experiment inputs for the simulation engine.

Scenarios are plain INI files (``configparser`` syntax, ``#`` comments).
Parsing is strict — unknown sections or keys are errors, and every constraint
violation is reported at once with the constraint named. Rationals may be
written as decimals ("0.05") or fractions ("1/20"); both parse exactly.

Schema (defaults in parentheses):

  [scenario]  name, seed (0), periods, mode (grind|poisson|exact),
              check (none|fairness|hopping|cross-period|delay|
                     pplns-variance|pps-imbalance|cheater-batches)
  [chain]     period_len, prepare_len, block_interval (1), block_reward (1),
              storage_interval (block_interval / 2)
  [mining]    hashes_per_period, share_difficulty (1/16),
              challenges_per_batch (1), overlap_policy (reject_all)
  [miners]    <name> = <fraction> <strategy> [param=value ...]
              strategies: honest | external | hopper cycle=N |
              crossperiod start=S alloc=x1,x2,... | delayed blocks=K
  [baselines] schemes (empty), pplns_window (100), pps_rate (fair rate)
  [driver]    parameters for the non-engine checks (variance, imbalance,
              cheater batches); validated by the check that consumes them
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .protocol import PeriodConfig


class ScenarioError(ValueError):
    """Raised with every violated constraint listed, one per line."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {v}" for v in violations))


@dataclass(frozen=True)
class Honest:
    pass


@dataclass(frozen=True)
class External:
    pass


@dataclass(frozen=True)
class PoolHopper:
    cycle_len: int  # in the pool for cycle_len-2 periods, solo for the last 2


@dataclass(frozen=True)
class CrossPeriod:
    start: int
    allocation: tuple[int, ...]  # hashes spent per period of the window


@dataclass(frozen=True)
class DelayedSubmitter:
    delay: int  # main-chain blocks to hold batches back


Strategy = Honest | External | PoolHopper | CrossPeriod | DelayedSubmitter


@dataclass(frozen=True)
class MinerSpec:
    name: str
    fraction: Fraction
    strategy: Strategy


@dataclass(frozen=True)
class BaselineConfig:
    schemes: tuple[str, ...] = ()
    pplns_window: int = 100
    pps_rate: Fraction | None = None  # None: fair rate B*L/P


MODES = ("grind", "poisson", "exact")
CHECKS = (
    "none",
    "fairness",
    "hopping",
    "cross-period",
    "delay",
    "pplns-variance",
    "pps-imbalance",
    "cheater-batches",
)
_ENGINE_CHECKS = ("none", "fairness", "hopping", "cross-period", "delay")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    periods: int
    mode: str
    check: str
    period: PeriodConfig
    block_reward: Fraction
    storage_interval: float
    hashes_per_period: int
    share_difficulty: Fraction
    challenges_per_batch: int = 1
    overlap_policy: str = "reject_all"
    miners: tuple[MinerSpec, ...] = ()
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    driver: dict[str, str] = field(default_factory=dict)

    def violations(self) -> list[str]:
        out: list[str] = []
        if self.periods < 1:
            out.append(f"periods must be at least 1, got {self.periods}")
        if self.mode not in MODES:
            out.append(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.check not in CHECKS:
            out.append(f"check must be one of {CHECKS}, got {self.check!r}")
        if self.block_reward <= 0:
            out.append("block_reward must be positive")
        if self.storage_interval <= 0:
            out.append("storage_interval must be positive")
        if self.challenges_per_batch < 1:
            out.append("challenges_per_batch must be at least 1")
        if self.overlap_policy not in ("reject_all", "latest_wins"):
            out.append(f"overlap_policy must be reject_all or latest_wins, got {self.overlap_policy!r}")
        if not 0 < self.share_difficulty <= 1:
            out.append(f"share_difficulty must lie in (0, 1], got {self.share_difficulty}")

        needs_engine = self.check in _ENGINE_CHECKS
        if needs_engine:
            if self.hashes_per_period < 1:
                out.append("hashes_per_period must be at least 1")
            if not self.miners:
                out.append("at least one miner is required")
            total = sum((m.fraction for m in self.miners), Fraction(0))
            if self.miners and total != 1:
                out.append(f"miner fractions must sum to 1, got {total}")
            names = [m.name for m in self.miners]
            if len(set(names)) != len(names):
                out.append("miner names must be unique")
            for m in self.miners:
                if not 0 < m.fraction <= 1:
                    out.append(f"miner {m.name}: fraction must lie in (0, 1], got {m.fraction}")
                if isinstance(m.strategy, PoolHopper) and m.strategy.cycle_len < 4:
                    out.append(f"miner {m.name}: hopper cycle must be at least 4 periods")
                if isinstance(m.strategy, DelayedSubmitter) and m.strategy.delay < 0:
                    out.append(f"miner {m.name}: delay must be non-negative")
                if isinstance(m.strategy, CrossPeriod):
                    if m.strategy.start < 0:
                        out.append(f"miner {m.name}: cross-period window start must be non-negative")
                    if any(x < 0 for x in m.strategy.allocation):
                        out.append(f"miner {m.name}: allocation entries must be non-negative")
                if self.mode == "exact":
                    blocks = m.fraction * self.period.period_len
                    if blocks.denominator != 1:
                        out.append(
                            f"miner {m.name}: exact mode requires fraction x period_len to be an "
                            f"integer block count, got {blocks}"
                        )
                    work = m.fraction * self.hashes_per_period
                    if work.denominator != 1:
                        out.append(
                            f"miner {m.name}: exact mode requires fraction x hashes_per_period to "
                            f"be an integer work budget, got {work}"
                        )
        return out

    def validate(self) -> "ScenarioConfig":
        problems = self.violations()
        if problems:
            raise ScenarioError(problems)
        return self


def _parse_strategy(name: str, tokens: list[str]) -> Strategy:
    kind = tokens[0]
    params: dict[str, str] = {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise ScenarioError([f"miner {name}: strategy parameter {tok!r} must look like key=value"])
        key, value = tok.split("=", 1)
        params[key] = value
    try:
        if kind == "honest":
            return Honest()
        if kind == "external":
            return External()
        if kind == "hopper":
            return PoolHopper(cycle_len=int(params.pop("cycle")))
        if kind == "crossperiod":
            alloc = tuple(int(x) for x in params.pop("alloc").split(",") if x != "")
            return CrossPeriod(start=int(params.pop("start", "2")), allocation=alloc)
        if kind == "delayed":
            return DelayedSubmitter(delay=int(params.pop("blocks")))
    except (KeyError, ValueError) as exc:
        raise ScenarioError([f"miner {name}: bad {kind} parameters ({exc})"]) from exc
    raise ScenarioError(
        [f"miner {name}: unknown strategy {kind!r} (expected honest, external, hopper, crossperiod, delayed)"]
    )


_ALLOWED = {
    "scenario": {"name", "seed", "periods", "mode", "check"},
    "chain": {"period_len", "prepare_len", "block_interval", "block_reward", "storage_interval"},
    "mining": {"hashes_per_period", "share_difficulty", "challenges_per_batch", "overlap_policy"},
    "baselines": {"schemes", "pplns_window", "pps_rate"},
    "driver": None,  # free-form, validated by the consuming check
}

_DRIVER_KEYS = {
    "p", "window", "blocks", "block_prob",
    "walks", "shares_per_walk", "block_difficulty",
    "batches", "batch_size", "invalid_fraction", "difficulty", "reward",
    "delays", "late_delay", "grid_step", "window_periods",
}


def parse_config(path: str | Path) -> ScenarioConfig:
    """Load and fully validate a scenario file; all violations raise together."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), strict=True)
    parser.optionxform = str  # miner names are case-sensitive
    with path.open() as fh:
        parser.read_file(fh)

    problems: list[str] = []
    for section in parser.sections():
        if section != "miners" and section not in _ALLOWED:
            problems.append(f"unknown section [{section}]")
        elif section in _ALLOWED and _ALLOWED[section] is not None:
            for key in parser[section]:
                if key not in _ALLOWED[section]:
                    problems.append(f"unknown key {key!r} in section [{section}]")
        elif section == "driver":
            for key in parser[section]:
                if key not in _DRIVER_KEYS:
                    problems.append(f"unknown key {key!r} in section [driver]")
    if problems:
        raise ScenarioError(problems)

    def get(section: str, key: str, default: str | None = None) -> str | None:
        if parser.has_option(section, key):
            return parser.get(section, key).strip()
        return default

    name = get("scenario", "name", path.stem)
    seed = int(get("scenario", "seed", "0"))
    periods = int(get("scenario", "periods", "10"))
    mode = get("scenario", "mode", "grind")
    check = get("scenario", "check", "none")

    period_len = int(get("chain", "period_len", "20"))
    prepare_len = int(get("chain", "prepare_len", "4"))
    block_interval = float(Fraction(get("chain", "block_interval", "1")))
    block_reward = Fraction(get("chain", "block_reward", "1"))
    storage_default = str(Fraction(get("chain", "block_interval", "1")) / 2)
    storage_interval = float(Fraction(get("chain", "storage_interval", storage_default)))

    hashes = int(get("mining", "hashes_per_period", "1000"))
    share_difficulty = Fraction(get("mining", "share_difficulty", "1/16"))
    challenges = int(get("mining", "challenges_per_batch", "1"))
    overlap_policy = get("mining", "overlap_policy", "reject_all")

    miners: list[MinerSpec] = []
    if parser.has_section("miners"):
        for miner_name, raw in parser["miners"].items():
            tokens = raw.split()
            if not tokens:
                raise ScenarioError([f"miner {miner_name}: empty definition"])
            fraction = Fraction(tokens[0])
            miners.append(
                MinerSpec(name=miner_name, fraction=fraction, strategy=_parse_strategy(miner_name, tokens[1:]))
            )

    schemes_raw = get("baselines", "schemes", "")
    schemes = tuple(s.strip() for s in schemes_raw.split(",") if s.strip())
    for scheme in schemes:
        if scheme not in ("pplns", "pps", "proportional"):
            problems.append(f"unknown baseline scheme {scheme!r}")
    pps_rate_raw = get("baselines", "pps_rate", None)
    baselines = BaselineConfig(
        schemes=schemes,
        pplns_window=int(get("baselines", "pplns_window", "100")),
        pps_rate=Fraction(pps_rate_raw) if pps_rate_raw else None,
    )

    driver = dict(parser["driver"]) if parser.has_section("driver") else {}

    try:
        period = PeriodConfig(period_len=period_len, prepare_len=prepare_len, block_interval=block_interval)
    except ValueError as exc:
        problems.append(str(exc))
        period = PeriodConfig(period_len=max(2 * prepare_len, 2), prepare_len=max(prepare_len, 1))

    cfg = ScenarioConfig(
        name=name,
        seed=seed,
        periods=periods,
        mode=mode,
        check=check,
        period=period,
        block_reward=block_reward,
        storage_interval=storage_interval,
        hashes_per_period=hashes,
        share_difficulty=share_difficulty,
        challenges_per_batch=challenges,
        overlap_policy=overlap_policy,
        miners=tuple(miners),
        baselines=baselines,
        driver=driver,
    )
    problems.extend(cfg.violations())
    if problems:
        raise ScenarioError(problems)
    return cfg


def with_overrides(cfg: ScenarioConfig, seed: int | None = None, periods: int | None = None) -> ScenarioConfig:
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if periods is not None:
        cfg = replace(cfg, periods=periods)
    return cfg.validate()


def render_config(cfg: ScenarioConfig) -> str:
    """Canonical INI rendering of the effective configuration (reproducibility echo)."""
    lines = [
        "[scenario]",
        f"name = {cfg.name}",
        f"seed = {cfg.seed}",
        f"periods = {cfg.periods}",
        f"mode = {cfg.mode}",
        f"check = {cfg.check}",
        "",
        "[chain]",
        f"period_len = {cfg.period.period_len}",
        f"prepare_len = {cfg.period.prepare_len}",
        f"block_interval = {cfg.period.block_interval}",
        f"block_reward = {cfg.block_reward}",
        f"storage_interval = {cfg.storage_interval}",
        "",
        "[mining]",
        f"hashes_per_period = {cfg.hashes_per_period}",
        f"share_difficulty = {cfg.share_difficulty}",
        f"challenges_per_batch = {cfg.challenges_per_batch}",
        f"overlap_policy = {cfg.overlap_policy}",
    ]
    if cfg.miners:
        lines += ["", "[miners]"]
        for m in cfg.miners:
            extra = ""
            if isinstance(m.strategy, Honest):
                kind = "honest"
            elif isinstance(m.strategy, External):
                kind = "external"
            elif isinstance(m.strategy, PoolHopper):
                kind, extra = "hopper", f" cycle={m.strategy.cycle_len}"
            elif isinstance(m.strategy, CrossPeriod):
                kind = "crossperiod"
                extra = f" start={m.strategy.start} alloc={','.join(str(x) for x in m.strategy.allocation)}"
            else:
                kind, extra = "delayed", f" blocks={m.strategy.delay}"
            lines.append(f"{m.name} = {m.fraction} {kind}{extra}")
    if cfg.baselines.schemes:
        lines += ["", "[baselines]", f"schemes = {','.join(cfg.baselines.schemes)}"]
        lines.append(f"pplns_window = {cfg.baselines.pplns_window}")
        if cfg.baselines.pps_rate is not None:
            lines.append(f"pps_rate = {cfg.baselines.pps_rate}")
    if cfg.driver:
        lines += ["", "[driver]"]
        lines += [f"{k} = {v}" for k, v in sorted(cfg.driver.items())]
    return "\n".join(lines) + "\n"


def bundled_scenarios() -> dict[str, Path]:
    """Scenario files shipped with the package, by stem name."""
    root = resources.files("fiberpool") / "scenarios"
    out: dict[str, Path] = {}
    for item in sorted(root.iterdir(), key=lambda p: p.name):
        if item.name.endswith(".cfg"):
            out[item.name[: -len(".cfg")]] = Path(str(item))
    return out


def resolve_scenario(ref: str) -> Path:
    """Accept either a filesystem path or the stem of a bundled scenario."""
    path = Path(ref)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    if ref in bundled:
        return bundled[ref]
    raise FileNotFoundError(
        f"scenario {ref!r} is neither a file nor a bundled scenario "
        f"(bundled: {', '.join(sorted(bundled))})"
    )
