"""Vault conversion protocols and futures settlement.

Two ways to turn the single-token vault back into pool liquidity:

* **Periodic conversion auction** -- every tau blocks, half the vault is
  auctioned for the other token (competitive bidders pay at least fair
  value in expectation); the winning bid plus the unconverted half are
  both added to the pool, with no constraint on their ratio.

* **Conversion versus futures** -- every block the arbitrageur buys half
  the vault at the pool price, so the whole vault value returns to the
  pool immediately, and simultaneously sells the pool a futures position
  of the same notional and strike.  All open positions settle together
  every tau blocks; the pool's PnL on a position of notional eta struck
  at p_c settling at p_T is eta*(p_T - p_c) (sign per side), paid half in
  each token so that s_x == s_y * p_T.

Both conversions have zero expectancy for the pool under a fair
settlement price (martingale external prices, competitive auctions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .curves import DomainError
from .diamond import DiamondPool, Vault

POOL_LONG = 1
POOL_SHORT = -1


class FuturesPosition(NamedTuple):
    """The pool's side of a per-block conversion.

    ``notional`` is denominated in ``token`` (the vault token that was
    sold); ``strike`` is the pool price (token x per token y) at
    conversion time, whichever token the position is written on.
    """

    notional: float
    strike: float
    pool_side: int = POOL_LONG
    token: str = "y"
    opened_at: int = 0


class SettlementPair(NamedTuple):
    """Signed token amounts paying a settlement half in each token."""

    s_x: float
    s_y: float

    def value(self, eps: float) -> float:
        return self.s_x + self.s_y * eps


class AuctionQuote(NamedTuple):
    quantity: float
    clearing_bid: float


@dataclass
class AuctionModel:
    """First-price auction clearing model.

    Competitive bidders bid at least fair value, so the default clears at
    exactly quantity * unit_price.  ``haircut`` in (0, 1) stresses
    under-competition (clearing below fair value); negative values model
    bidders paying a premium.
    """

    haircut: float = 0.0

    def __post_init__(self):
        if not self.haircut < 1.0:
            raise DomainError(f"haircut must be < 1, got {self.haircut}")

    def quote(self, quantity: float, unit_price: float) -> AuctionQuote:
        return AuctionQuote(quantity, quantity * unit_price * (1.0 - self.haircut))


@dataclass
class OracleModel:
    """Batch-auction settlement oracle: fair price plus mean-zero noise.

    Returns eps * (1 + u) with u uniform on (-rel_width, rel_width), so the
    expectation is exactly eps.
    """

    rel_width: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rel_width < 1.0:
            raise DomainError(f"rel_width must be in [0, 1), got {self.rel_width}")

    def draw(self, eps: float, rng: Optional[np.random.Generator] = None) -> float:
        if self.rel_width == 0.0 or rng is None:
            return eps
        return eps * (1.0 + rng.uniform(-self.rel_width, self.rel_width))


def pca_convert(vault: Vault, eps: float, auction: AuctionModel) -> SettlementPair:
    """Auction half the (single-typed) vault for the other token.

    Drains the vault and returns the pair to add to the pool: the winning
    bid plus the unconverted half.  The pair need not match the pool's
    reserve ratio.
    """
    token = vault.single_token()
    if token is None:
        return SettlementPair(0.0, 0.0)
    if token == "y":
        eta = 0.5 * vault.vy
        bid = auction.quote(eta, eps).clearing_bid
        vault.vy = 0.0
        return SettlementPair(bid, eta)
    eta = 0.5 * vault.vx
    bid = auction.quote(eta, 1.0 / eps).clearing_bid
    vault.vx = 0.0
    return SettlementPair(eta, bid)


def cvf_convert(vault: Vault, p_c: float,
                opened_at: int = 0) -> tuple[SettlementPair, Optional[FuturesPosition]]:
    """Convert half the vault at the pool price and open the offsetting future.

    The arbitrageur buys eta vault tokens at p_c, so the pool re-adds the
    unconverted eta plus the proceeds, and goes long eta futures on the
    vault token struck at p_c.
    """
    if not p_c > 0:
        raise DomainError(f"conversion price must be positive, got {p_c}")
    token = vault.single_token()
    if token is None:
        return SettlementPair(0.0, 0.0), None
    if token == "y":
        eta = 0.5 * vault.vy
        vault.vy = 0.0
        pair = SettlementPair(eta * p_c, eta)
    else:
        eta = 0.5 * vault.vx
        vault.vx = 0.0
        pair = SettlementPair(eta, eta / p_c)
    return pair, FuturesPosition(eta, p_c, POOL_LONG, token, opened_at)


def futures_pnl(pos: FuturesPosition, p_T: float) -> float:
    """The pool's settlement profit in token-x units.

    For a y-token notional the pool wins notional*(p_T - strike) when
    long; an x-token notional mirrors through the inverse price, which in
    x units is notional*(strike - p_T)/strike.
    """
    if pos.token == "y":
        return pos.pool_side * pos.notional * (p_T - pos.strike)
    return pos.pool_side * pos.notional * (pos.strike - p_T) / pos.strike


def settle_futures(pos: FuturesPosition, p_T: float) -> SettlementPair:
    """Settlement pair at price p_T: PnL paid half in each token.

    s_x = s_y * p_T by construction and s_x + s_y * p_T equals the PnL.
    Positive pairs come from the arbitrageur's collateral; negative pairs
    are removed from the pool in the p_T ratio.
    """
    if not p_T > 0:
        raise DomainError(f"settlement price must be positive, got {p_T}")
    pnl = futures_pnl(pos, p_T)
    s_y = pnl / (2.0 * p_T)
    return SettlementPair(s_y * p_T, s_y)


def settle_price(mode: str, eps_T: float, noise: Optional[OracleModel] = None,
                 rng: Optional[np.random.Generator] = None) -> float:
    """Settlement price for the futures leg.

    'futures-auction': competitive bidders value the offered tokens at the
    external price, so the clearing is equivalent to settling at eps_T.
    'batch-oracle': a batch-auction oracle settling at eps_T in
    expectation, optionally with mean-zero noise.
    """
    if mode == "futures-auction":
        return eps_T
    if mode == "batch-oracle":
        return eps_T if noise is None else noise.draw(eps_T, rng)
    raise DomainError(f"unknown settlement mode {mode!r}")


def futures_collateral(side: str, p: float, sigma_T: float,
                       lambda_y: float) -> tuple[float, float]:
    """Minimal collateral (pi_x, pi_y) for a futures notional of lambda_y.

    ``side`` is the arbitrageur's side of the contract.  The collateral
    must be worth at least the maximum expected loss over a settlement
    window with relative move bound sigma_T, held in the reserve ratio at
    the worst-case settlement price (p/(1+sigma_T) when long, p*(1+sigma_T)
    when short) so it can be added straight back into the pool.
    """
    if not sigma_T > 0:
        raise DomainError(f"sigma_T must be positive, got {sigma_T}")
    if not p > 0:
        raise DomainError(f"price must be positive, got {p}")
    if lambda_y < 0:
        raise DomainError(f"notional must be non-negative, got {lambda_y}")
    if lambda_y == 0.0:
        return 0.0, 0.0
    if side == "long":
        ratio = p / (1.0 + sigma_T)
        pi_y = lambda_y * (p - ratio) / (2.0 * ratio)
        return ratio * pi_y, pi_y
    if side == "short":
        ratio = p * (1.0 + sigma_T)
        pi_y = lambda_y * sigma_T / (2.0 * (1.0 + sigma_T))
        return ratio * pi_y, pi_y
    raise DomainError(f"side must be 'long' or 'short', got {side!r}")


class ConversionEvent(NamedTuple):
    """Net value change of the pool-side package (pool + vault + futures
    marks, in token-x units at the block's external price) caused by one
    conversion or settlement.  Zero for fair auctions and fair settlement;
    the accounting-closure invariant sums these per block.
    """

    height: int
    kind: str
    transfer: float


@dataclass
class PeriodicConversionAuction:
    """Conversion handle: auction half the vault every tau blocks."""

    auction: AuctionModel = field(default_factory=AuctionModel)
    events: list = field(default_factory=list)

    mode = "pca"

    def on_block(self, pool: DiamondPool, eps: float) -> None:
        if pool.block_height % pool.params.tau:
            return
        if pool.vault.is_empty():
            return
        before = pool.vault.value(eps)
        pair = pca_convert(pool.vault, eps, self.auction)
        pool.add_liquidity(pair.s_x, pair.s_y)
        self.events.append(ConversionEvent(
            pool.block_height, "pca", pair.value(eps) - before))


@dataclass
class ConversionVersusFutures:
    """Conversion handle: convert every block, settle futures every tau."""

    settlement_mode: str = "futures-auction"
    oracle: Optional[OracleModel] = None
    rng: Optional[np.random.Generator] = None
    events: list = field(default_factory=list)

    mode = "cvf"

    def on_block(self, pool: DiamondPool, eps: float) -> None:
        # Settle first so every position lives between one and tau blocks.
        if pool.open_futures and pool.block_height % pool.params.tau == 0:
            p_T = settle_price(self.settlement_mode, eps, self.oracle, self.rng)
            marks = math.fsum(futures_pnl(pos, eps) for pos in pool.open_futures)
            sx = 0.0
            sy = 0.0
            for pos in pool.open_futures:
                pair = settle_futures(pos, p_T)
                sx += pair.s_x
                sy += pair.s_y
            pool.open_futures.clear()
            pool.add_liquidity(sx, sy)
            self.events.append(ConversionEvent(
                pool.block_height, "settlement", sx + sy * eps - marks))
        if not pool.vault.is_empty():
            p_c = pool.price()
            before = pool.vault.value(eps)
            pair, pos = cvf_convert(pool.vault, p_c, pool.block_height)
            pool.add_liquidity(pair.s_x, pair.s_y)
            pool.open_futures.append(pos)
            self.events.append(ConversionEvent(
                pool.block_height, "cvf",
                pair.value(eps) - before + futures_pnl(pos, eps)))


def mark_open_futures(pool: DiamondPool, eps: float) -> float:
    """Mark-to-market of open positions as if settled at eps."""
    return math.fsum(futures_pnl(pos, eps) for pos in pool.open_futures)
