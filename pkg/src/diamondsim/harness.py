"""Monte Carlo experiment runner: scenarios, sweeps, CSV emission.

A scenario drives one Diamond pool and its benchmarks (pure-arbitrage
CFMM, HODL) over n_paths independent martingale price paths.  Per block:
arbitrage on both pools, then retail flow when a fee is configured; at
the horizon every portfolio is marked at the final external price
(including residual vault tokens and open futures).

Whole scenarios are reproducible bit-for-bit from (config, master_seed):
each path owns RNG streams seeded from (master_seed, path_id), results
are ordered by path_id regardless of worker scheduling, and summaries are
reduced over that ordering.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .conversion import (AuctionModel, ConversionVersusFutures, OracleModel,
                         PeriodicConversionAuction)
from .curves import DomainError, Reserves
from .diamond import DiamondParams, DiamondPool, LiquidationError
from .market import (CfmmBenchmark, PathParams, RetailFlow, apply_retail_flow,
                     gen_path, hodl_value, path_rng_for)

CONVERSION_MODES = ("pca", "cvf")
SETTLEMENT_MODES = ("futures-auction", "batch-oracle")

_INT_FIELDS = {"tau_blocks", "blocks_per_day", "days", "n_paths", "master_seed"}
_STR_FIELDS = {"conversion_mode", "settlement_mode"}


@dataclass(frozen=True)
class ScenarioConfig:
    """One experiment cell; defaults are the base simulation parameters."""

    beta: float = 0.95
    tau_blocks: int = 10            # conversion once per day at 10 blocks/day
    blocks_per_day: int = 10
    days: int = 365
    n_paths: int = 500
    daily_move: float = 0.05
    fee: float = 0.0
    conversion_mode: str = "pca"
    settlement_mode: str = "futures-auction"
    auction_haircut: float = 0.0
    rx0: float = 1.0e8
    ry0: float = 76336.0
    eps0: Optional[float] = None    # None: start at the pool price rx0/ry0
    master_seed: int = 20240            # u64

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must be in (0,1), got {self.beta}")
        if self.tau_blocks < 1 or self.blocks_per_day < 1 or self.days < 1:
            raise DomainError("tau_blocks, blocks_per_day and days must be >= 1")
        if self.n_paths < 1:
            raise DomainError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.daily_move < 0:
            raise DomainError(f"daily_move must be >= 0, got {self.daily_move}")
        if not 0.0 <= self.fee < 1.0:
            raise DomainError(f"fee must be in [0,1), got {self.fee}")
        if self.conversion_mode not in CONVERSION_MODES:
            raise DomainError(f"conversion_mode must be one of {CONVERSION_MODES}")
        if self.settlement_mode not in SETTLEMENT_MODES:
            raise DomainError(f"settlement_mode must be one of {SETTLEMENT_MODES}")
        if not self.auction_haircut < 1.0:
            raise DomainError(f"auction_haircut must be < 1, got {self.auction_haircut}")
        if self.rx0 <= 0 or self.ry0 <= 0:
            raise DomainError("starting reserves must be positive")
        if self.eps0 is not None and not self.eps0 > 0:
            raise DomainError(f"eps0 must be positive, got {self.eps0}")
        if self.master_seed < 0:
            raise DomainError(f"master_seed must be non-negative, got {self.master_seed}")

    @property
    def resolved_eps0(self) -> float:
        return self.rx0 / self.ry0 if self.eps0 is None else self.eps0

    @property
    def n_blocks(self) -> int:
        return self.blocks_per_day * self.days

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        """Parse a key=value config document; unknown keys are errors."""
        text = Path(path).read_text()
        known = {f.name for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in known:
                raise DomainError(f"{path}:{lineno}: unknown key {key!r}")
            if key in _STR_FIELDS:
                values[key] = val
            elif key in _INT_FIELDS:
                values[key] = int(val)
            elif key == "eps0" and val.lower() == "none":
                values[key] = None
            else:
                values[key] = float(val)
        return cls(**values)


class PathResult(NamedTuple):
    path_id: int
    final_eps: float
    v_cfmm: float
    v_diamond: float
    v_hodl: float
    ratio_diamond_cfmm: float
    ratio_hodl_cfmm: float
    cumulative_cfmm_lvr: float
    cumulative_rebate: float


@dataclass(frozen=True)
class ScenarioSummary:
    n_paths: int
    n_liquidated: int
    mean_ratio_diamond_cfmm: float
    std_ratio_diamond_cfmm: float
    mean_ratio_hodl_cfmm: float
    std_ratio_hodl_cfmm: float
    mean_cumulative_cfmm_lvr: float
    mean_cumulative_rebate: float


@dataclass(frozen=True)
class ScenarioResult:
    config: ScenarioConfig
    results: tuple
    liquidated: tuple
    summary: ScenarioSummary


def make_conversion(cfg: ScenarioConfig, rng: Optional[np.random.Generator] = None):
    """Build the conversion handle a scenario's pool should run."""
    if cfg.conversion_mode == "pca":
        return PeriodicConversionAuction(AuctionModel(cfg.auction_haircut))
    return ConversionVersusFutures(cfg.settlement_mode, OracleModel(0.0), rng)


def run_path(cfg: ScenarioConfig, path_id: int) -> Optional[PathResult]:
    """Simulate one path; None signals a liquidated (flagged) path."""
    path_ss, market_rng = path_rng_for(cfg.master_seed, path_id)
    params = PathParams(cfg.daily_move, cfg.blocks_per_day, cfg.days,
                        cfg.resolved_eps0)
    prices = gen_path(params, path_ss).eps.tolist()

    pool = DiamondPool(Reserves(cfg.rx0, cfg.ry0),
                       DiamondParams(cfg.beta, cfg.tau_blocks))
    conversion = make_conversion(cfg, market_rng)
    bench = CfmmBenchmark(cfg.rx0, cfg.ry0)
    flow = RetailFlow(0.10, cfg.blocks_per_day) if cfg.fee > 0.0 else None

    cum_rebate = 0.0
    end_of_block = pool.end_of_block
    arb_to = bench.arb_to
    try:
        if flow is None:
            for e in prices[1:]:
                res = end_of_block(e, conversion)
                cum_rebate += res.cfmm_lvr - res.arb_profit
                arb_to(e)
        else:
            fee = cfg.fee
            for e in prices[1:]:
                res = end_of_block(e, conversion)
                cum_rebate += res.cfmm_lvr - res.arb_profit
                arb_to(e)
                apply_retail_flow(pool, flow, fee)
                apply_retail_flow(bench, flow, fee)
    except LiquidationError:
        return None

    eps_n = prices[-1]
    v_diamond = pool.total_value(eps_n)
    if pool.open_futures:
        from .conversion import mark_open_futures
        v_diamond += mark_open_futures(pool, eps_n)
    v_cfmm = bench.pool_value(eps_n)
    v_hodl = hodl_value(Reserves(cfg.rx0, cfg.ry0), eps_n)
    return PathResult(path_id, eps_n, v_cfmm, v_diamond, v_hodl,
                      v_diamond / v_cfmm, v_hodl / v_cfmm,
                      bench.cumulative_lvr, cum_rebate)


def _run_path_task(args) -> tuple[int, Optional[PathResult]]:
    cfg, path_id = args
    return path_id, run_path(cfg, path_id)


def run_scenario(cfg: ScenarioConfig, workers: int = 1) -> ScenarioResult:
    """Run all paths of a scenario; output independent of worker count."""
    tasks = [(cfg, i) for i in range(cfg.n_paths)]
    if workers > 1:
        chunk = max(1, cfg.n_paths // (4 * workers))
        with multiprocessing.Pool(workers) as pool:
            raw = pool.map(_run_path_task, tasks, chunksize=chunk)
    else:
        raw = [_run_path_task(t) for t in tasks]
    raw.sort(key=lambda item: item[0])
    results = tuple(r for _, r in raw if r is not None)
    liquidated = tuple(i for i, r in raw if r is None)
    return ScenarioResult(cfg, results, liquidated, summarize(results, liquidated))


def summarize(results, liquidated=()) -> ScenarioSummary:
    if not results:
        nan = float("nan")
        return ScenarioSummary(0, len(liquidated), nan, nan, nan, nan, nan, nan)
    ratios = np.array([r.ratio_diamond_cfmm for r in results])
    hodl = np.array([r.ratio_hodl_cfmm for r in results])
    lvrs = np.array([r.cumulative_cfmm_lvr for r in results])
    rebates = np.array([r.cumulative_rebate for r in results])
    ddof = 1 if len(results) > 1 else 0
    return ScenarioSummary(
        n_paths=len(results),
        n_liquidated=len(liquidated),
        mean_ratio_diamond_cfmm=float(ratios.mean()),
        std_ratio_diamond_cfmm=float(ratios.std(ddof=ddof)),
        mean_ratio_hodl_cfmm=float(hodl.mean()),
        std_ratio_hodl_cfmm=float(hodl.std(ddof=ddof)),
        mean_cumulative_cfmm_lvr=float(lvrs.mean()),
        mean_cumulative_rebate=float(rebates.mean()),
    )


SWEEP_VARIABLES = {
    "beta": "beta",
    "daily_move": "daily_move",
    "tau": "tau_blocks",
    "fee": "fee",
    "days": "days",
}


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise DomainError(
                f"sweep variable must be one of {sorted(SWEEP_VARIABLES)}, "
                f"got {self.variable!r}")
        if not self.values:
            raise DomainError("sweep needs a non-empty value list")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple  # of (value, ScenarioResult)

    def summaries(self):
        return [(v, res.summary) for v, res in self.rows]


def run_sweep(spec: SweepSpec, base: ScenarioConfig, workers: int = 1) -> SweepResult:
    """One scenario per swept value, sharing the master seed so paths
    differ only through the swept variable."""
    attr = SWEEP_VARIABLES[spec.variable]
    rows = []
    for value in spec.values:
        coerced = int(value) if attr in _INT_FIELDS else float(value)
        cfg = replace(base, **{attr: coerced})
        rows.append((coerced, run_scenario(cfg, workers)))
    return SweepResult(spec, tuple(rows))


def emit_csv(results, path) -> None:
    """Write PathResults: header row, one row per result, full precision."""
    out = Path(path)
    lines = [",".join(PathResult._fields)]
    for r in results:
        lines.append(",".join(
            repr(v) if isinstance(v, float) else str(v) for v in r))
    out.write_text("\n".join(lines) + "\n")


def emit_sweep_csv(sweep: SweepResult, path) -> None:
    """Summary table keyed by the swept value."""
    out = Path(path)
    header = [sweep.spec.variable] + [f.name for f in fields(ScenarioSummary)]
    lines = [",".join(header)]
    for value, res in sweep.rows:
        s = res.summary
        row = [value] + [getattr(s, f.name) for f in fields(ScenarioSummary)]
        lines.append(",".join(
            repr(v) if isinstance(v, float) else str(v) for v in row))
    out.write_text("\n".join(lines) + "\n")


def accounting_closure_errors(cfg: ScenarioConfig, path_id: int) -> list[float]:
    """Per-block conservation residuals, relative to pool value.

    For every block: the change of (pool + vault + futures marked at eps)
    plus the arbitrageur's profit minus conversion/settlement transfers
    must vanish.  Used by the invariant tests; runs without retail flow.
    """
    from .conversion import mark_open_futures

    path_ss, market_rng = path_rng_for(cfg.master_seed, path_id)
    params = PathParams(cfg.daily_move, cfg.blocks_per_day, cfg.days,
                        cfg.resolved_eps0)
    prices = gen_path(params, path_ss).eps.tolist()
    pool = DiamondPool(Reserves(cfg.rx0, cfg.ry0),
                       DiamondParams(cfg.beta, cfg.tau_blocks))
    conversion = make_conversion(cfg, market_rng)
    errors = []
    for e in prices[1:]:
        before = pool.total_value(e) + mark_open_futures(pool, e)
        n_events = len(conversion.events)
        res = pool.end_of_block(e, conversion)
        after = pool.total_value(e) + mark_open_futures(pool, e)
        transfers = math.fsum(ev.transfer for ev in conversion.events[n_events:])
        residual = (after - before) + res.arb_profit - transfers
        errors.append(abs(residual) / pool.reserves.value(e))
    return errors
