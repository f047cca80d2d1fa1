"""The Diamond pool state machine.

Diamond is not a CFMM: each block the pool's reserves are updated with
reference to its *corresponding CFMM pool* (same reserves, same invariant,
pool constant recomputed whenever the reserves change).  If moving the
corresponding CFMM to the block's final price would flow (ux, uy) through
the pool, Diamond exchanges only (1-beta)-scaled flows with the
arbitrageur, then skims a further quantity of the token the arbitrageur
was net buying into a side vault so the final pool price still equals the
target.  The arbitrageur's profit is exactly (1-beta) times the CFMM's
loss-versus-rebalancing; the skimmed value stays with the protocol.

After the skim the vault is rebalanced: the largest price-matched pair in
the vault is re-added to the reserves (which cannot move the price),
leaving at most one token type behind.  Every conversion period the
remaining vault balance is converted and re-added by one of the
conversion protocols (see :mod:`diamondsim.conversion`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .curves import DomainError, PoolCurve, ProductCurve, Reserves


class LiquidationError(RuntimeError):
    """A settlement tried to remove more tokens than the pool holds."""


@dataclass
class DiamondParams:
    """Protocol parameters: LVR rebate fraction and conversion cadence."""

    beta: float
    tau: int = 1

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must be in (0, 1), got {self.beta}")
        if not (isinstance(self.tau, int) and self.tau >= 1):
            raise DomainError(f"tau must be a positive integer, got {self.tau}")


@dataclass
class Vault:
    """Side account receiving the per-block skim.

    Immediately after a vault rebalance at most one of vx, vy is nonzero.
    """

    vx: float = 0.0
    vy: float = 0.0

    def is_empty(self) -> bool:
        return self.vx == 0.0 and self.vy == 0.0

    def single_token(self) -> Optional[str]:
        """'x', 'y', or None; raises if the vault holds both tokens."""
        if self.vx > 0.0 and self.vy > 0.0:
            raise DomainError(f"vault holds both tokens ({self.vx}, {self.vy})")
        if self.vx > 0.0:
            return "x"
        if self.vy > 0.0:
            return "y"
        return None

    def value(self, eps: float) -> float:
        return self.vx + self.vy * eps


class BlockResult(NamedTuple):
    """Per-block accounting: what the arbitrageur made and the pool kept."""

    arb_profit: float
    vault_skim: tuple[str, float]
    cfmm_lvr: float
    diamond_lvr: float


@dataclass
class DiamondPool:
    """A Diamond pool: reserves, curve, vault, parameters, open futures.

    The pool owns its curve instance and mutates its pool constant in
    place; reserves always lie on the recomputed curve.  Instances are
    single-threaded during mutation; distinct pools are independent.
    """

    reserves: Reserves
    params: DiamondParams
    curve: PoolCurve = None  # type: ignore[assignment]
    vault: Vault = field(default_factory=Vault)
    open_futures: list = field(default_factory=list)
    block_height: int = 0

    def __post_init__(self):
        if isinstance(self.reserves, tuple) and not isinstance(self.reserves, Reserves):
            self.reserves = Reserves(*self.reserves)
        if self.reserves.rx <= 0 or self.reserves.ry <= 0:
            raise DomainError(f"live pool needs positive reserves, got {self.reserves}")
        if self.curve is None:
            self.curve = ProductCurve(self.reserves.rx * self.reserves.ry)
        else:
            k = self.curve.invariant(*self.reserves)
            if abs(k - self.curve.k) > 1e-9 * abs(self.curve.k):
                raise DomainError(
                    f"reserves {tuple(self.reserves)} not on curve: "
                    f"invariant {k} vs k {self.curve.k}")

    def price(self) -> float:
        return self.curve.price(self.reserves.rx, self.reserves.ry)

    def total_value(self, eps: float) -> float:
        """Pool plus vault, marked at eps (open futures not included)."""
        return self.reserves.value(eps) + self.vault.value(eps)

    def add_liquidity(self, ax: float, ay: float) -> None:
        """Apply a (possibly signed) reserve adjustment and recompute k."""
        rx = self.reserves.rx + ax
        ry = self.reserves.ry + ay
        if rx <= 0.0 or ry <= 0.0:
            raise LiquidationError(
                f"reserve adjustment ({ax}, {ay}) exhausts reserves {tuple(self.reserves)}")
        self.reserves = Reserves(rx, ry)
        self.curve.k = self.curve.invariant(rx, ry)

    def apply_arbitrage(self, eps: float) -> BlockResult:
        """Run the rebated arbitrage transition to external price eps.

        The corresponding CFMM's optimal flows are scaled by (1-beta); the
        skim in the net-bought token restores the final price to eps and is
        credited to the vault.  arb_profit is valued from the arbitrageur's
        actual flows at eps and equals (1-beta) times the CFMM LVR.
        """
        if not eps > 0:
            raise DomainError(f"external price must be positive, got {eps}")
        rx, ry = self.reserves
        curve = self.curve
        if eps == curve.price(rx, ry):
            return BlockResult(0.0, ("y", 0.0), 0.0, 0.0)
        tx, ty = curve.arb_target(eps)
        ux = tx - rx
        uy = ty - ry
        cfmm_lvr = (rx + ry * eps) - (tx + ty * eps)
        if cfmm_lvr < 0.0:
            cfmm_lvr = 0.0
        keep = 1.0 - self.params.beta
        rx1 = rx + keep * ux
        ry1 = ry + keep * uy
        if ux > 0.0:
            # x flowed in, y out: the arbitrageur net bought y, so skim y.
            ry_final = curve.ry_at_price(rx1, eps)
            skim = ry1 - ry_final
            token = "y"
            self.vault.vy += skim
            self.reserves = Reserves(rx1, ry_final)
            profit = keep * ((-uy) * eps - ux)
        else:
            rx_final = curve.rx_at_price(ry1, eps)
            skim = rx1 - rx_final
            token = "x"
            self.vault.vx += skim
            self.reserves = Reserves(rx_final, ry1)
            profit = keep * ((-ux) - uy * eps)
        curve.k = curve.invariant(*self.reserves)
        return BlockResult(profit, (token, skim), cfmm_lvr, profit)

    def vault_rebalance(self, p: float) -> None:
        """Move the price-matched part of the vault back into the pool.

        Adds (vx, vx/p) or (vy*p, vy), whichever the vault can fund, so at
        most one token type remains.  Adding tokens in the ratio p at pool
        price p leaves the price unchanged.
        """
        if not p > 0:
            raise DomainError(f"rebalance price must be positive, got {p}")
        vx = self.vault.vx
        vy = self.vault.vy
        if vx == 0.0 and vy == 0.0:
            return
        if vy * p > vx:
            add_x, add_y = vx, vx / p
            self.vault.vx = 0.0
            self.vault.vy = vy - add_y
        else:
            add_x, add_y = vy * p, vy
            self.vault.vx = vx - add_x
            self.vault.vy = 0.0
        if add_x != 0.0 or add_y != 0.0:
            self.add_liquidity(add_x, add_y)

    def retail_swap(self, amount_in: float, side: str, fee: float = 0.0) -> float:
        """A user swap at CFMM(pool) pricing; fee compounds into reserves."""
        from .curves import swap_exact_in

        out, new_r = swap_exact_in(self.curve, self.reserves, amount_in, side, fee)
        self.reserves = new_r
        self.curve.k = self.curve.invariant(new_r.rx, new_r.ry)
        return out

    def end_of_block(self, eps: float, conversion=None) -> BlockResult:
        """One block: arbitrage, vault rebalance, then the conversion hook.

        The conversion handle owns its own cadence (the periodic auction
        converts every tau blocks; conversion-versus-futures converts every
        block and settles every tau).
        """
        result = self.apply_arbitrage(eps)
        self.vault_rebalance(eps)
        self.block_height += 1
        if conversion is not None:
            conversion.on_block(self, eps)
        return result
