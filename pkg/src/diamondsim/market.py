"""Stochastic environment: price paths, arbitrageur, benchmarks, retail flow.

External prices follow a martingale: per-block log-returns are drawn
Normal(-s^2/2, s^2), so E[eps_{t+1} | eps_t] = eps_t exactly and prices
stay positive over long horizons.  The per-block sigma s is calibrated so
the mean absolute per-block log move equals daily_move / blocks_per_day
(folded normal: E|N(0,s)| = s*sqrt(2/pi)); the stated daily move is split
evenly across the day's blocks.  ``scaling="sqrt"`` instead spreads the
daily move Brownian-style (per-block sigma = daily sigma / sqrt(blocks)).

Benchmarks: a pure-arbitrage CFMM pool (reserves track the optimal
arbitrage target on a constant invariant; retail fee revenue accrues to a
separate fee account, so the pool value stays the classic 2*sqrt(k*eps)
baseline) and HODL (the starting reserves, never touched).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .curves import DomainError, PoolCurve, ProductCurve, Reserves, lvr
from .diamond import DiamondPool

# E|N(0, s)| = s * sqrt(2/pi); invert to hit a target mean absolute move.
FOLDED_NORMAL_FACTOR = math.sqrt(math.pi / 2.0)

SeedLike = Union[int, np.random.SeedSequence]


@dataclass(frozen=True)
class PathParams:
    daily_move: float
    blocks_per_day: int = 10
    days: int = 365
    eps0: float = 1.0
    scaling: str = "linear"

    def __post_init__(self):
        if self.daily_move < 0:
            raise DomainError(f"daily_move must be >= 0, got {self.daily_move}")
        if self.blocks_per_day < 1 or self.days < 1:
            raise DomainError("blocks_per_day and days must be >= 1")
        if not self.eps0 > 0:
            raise DomainError(f"eps0 must be positive, got {self.eps0}")
        if self.scaling not in ("linear", "sqrt"):
            raise DomainError(f"scaling must be 'linear' or 'sqrt', got {self.scaling}")

    @property
    def n_blocks(self) -> int:
        return self.blocks_per_day * self.days

    @property
    def block_sigma(self) -> float:
        if self.scaling == "linear":
            return FOLDED_NORMAL_FACTOR * self.daily_move / self.blocks_per_day
        return FOLDED_NORMAL_FACTOR * self.daily_move / math.sqrt(self.blocks_per_day)


@dataclass(frozen=True)
class PricePath:
    eps: np.ndarray          # length n_blocks + 1, eps[0] == params.eps0
    seed: object
    params: PathParams


def gen_path(params: PathParams, seed: SeedLike) -> PricePath:
    """Deterministic martingale price path for (params, seed)."""
    n = params.n_blocks
    s = params.block_sigma
    if s == 0.0:
        eps = np.full(n + 1, params.eps0)
        return PricePath(eps, seed, params)
    rng = np.random.default_rng(seed)
    steps = rng.normal(-0.5 * s * s, s, size=n)
    eps = np.empty(n + 1)
    eps[0] = params.eps0
    eps[1:] = params.eps0 * np.exp(np.cumsum(steps))
    return PricePath(eps, seed, params)


def path_rng_for(master_seed: int, path_id: int) -> tuple[np.random.SeedSequence,
                                                          np.random.Generator]:
    """Per-path RNG streams derived from (master_seed, path_id).

    Returns the path's price-path seed sequence and an independent market
    generator (auction/oracle noise), both deterministic and independent of
    scheduling or worker count.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(path_id,))
    path_ss, market_ss = ss.spawn(2)
    return path_ss, np.random.default_rng(market_ss)


class CfmmBenchmark:
    """A CFMM pool driven by pure arbitrage on a constant invariant.

    Retail fee revenue is collected into a side fee account in the tokens
    paid, leaving the reserves on the constant-k curve; ``pool_value`` is
    the pool itself, ``total_value`` adds the fee account.
    """

    def __init__(self, rx: float, ry: float, curve: Optional[PoolCurve] = None):
        self.reserves = Reserves(rx, ry)
        self.curve = curve if curve is not None else ProductCurve(rx * ry)
        self.cumulative_lvr = 0.0
        self.fee_x = 0.0
        self.fee_y = 0.0

    def price(self) -> float:
        return self.curve.price(self.reserves.rx, self.reserves.ry)

    def arb_to(self, eps: float) -> None:
        """Move reserves to the optimal arbitrage target at eps."""
        if eps == self.price():
            return
        self.cumulative_lvr += lvr(self.reserves, eps, self.curve)
        self.reserves = self.curve.arb_target(eps)

    def retail_swap(self, amount_in: float, side: str, fee: float) -> float:
        """Swap along the constant curve; the fee portion goes to the account."""
        eff = amount_in * (1.0 - fee)
        out = self.curve.swap_out(self.reserves, eff, side)
        rx, ry = self.reserves
        if side == "x":
            self.reserves = Reserves(rx + eff, ry - out)
            self.fee_x += amount_in - eff
        else:
            self.reserves = Reserves(rx - out, ry + eff)
            self.fee_y += amount_in - eff
        return out

    def pool_value(self, eps: float) -> float:
        return self.reserves.value(eps)

    def total_value(self, eps: float) -> float:
        return self.pool_value(eps) + self.fee_x + self.fee_y * eps


@dataclass
class BenchmarkState:
    """The two reference strategies run alongside a Diamond pool."""

    cfmm: CfmmBenchmark
    hodl: Reserves


def hodl_value(hodl: Reserves, eps_T: float) -> float:
    """Value of holding the starting reserves: rx + ry * eps_T."""
    return hodl.rx + hodl.ry * eps_T


def arb_agent(pool, eps: float, conversion=None):
    """Optimal per-block action: CFMM pools move to the arbitrage target,
    Diamond pools run the full end-of-block transition."""
    if isinstance(pool, DiamondPool):
        return pool.end_of_block(eps, conversion)
    pool.arb_to(eps)
    return None


@dataclass
class RetailFlow:
    """Price-neutral retail order flow for fee experiments.

    Per block a volume of daily_turnover_fraction * TVL / blocks_per_day
    trades as a buy leg followed by a sell leg of the proceeds, so with
    zero fee the legs cancel exactly and with a fee the pool nets the fee
    revenue.  Legs larger than half the input reserve are capped (counted
    in ``capped_blocks``).
    """

    daily_turnover_fraction: float = 0.10
    blocks_per_day: int = 10
    capped_blocks: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.daily_turnover_fraction < 0:
            raise DomainError(
                f"turnover must be >= 0, got {self.daily_turnover_fraction}")


def apply_retail_flow(pool, flow: RetailFlow, fee: float) -> float:
    """Run one block of retail flow against a pool; returns fee revenue.

    ``pool`` is anything with price()/reserves/retail_swap (DiamondPool and
    CfmmBenchmark both qualify); fee revenue is reported in token-x units
    at the current pool price.
    """
    if not 0.0 <= fee < 1.0:
        raise DomainError(f"fee must be in [0, 1), got {fee}")
    if flow.daily_turnover_fraction == 0.0:
        return 0.0
    p = pool.price()
    tvl = pool.reserves.value(p)
    half = 0.5 * flow.daily_turnover_fraction * tvl / flow.blocks_per_day
    cap = 0.5 * pool.reserves.rx
    if half > cap:
        half = cap
        flow.capped_blocks += 1
    if half <= 0.0:
        return 0.0
    bought = pool.retail_swap(half, "x", fee)
    pool.retail_swap(bought, "y", fee)
    return fee * half + fee * bought * p


