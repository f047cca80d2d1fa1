"""Per-block transaction layer: unlock, collateral bounds, escrow settlement.

The first pool transaction of a block is the *pool unlock*: the
arbitrageur posts collateral (C_x, C_y) and thereby opens a session.
Orders then execute exactly as they would in the corresponding CFMM pool
(no rebate discount per order), as long as every intermediate state
(rx_i, ry_i) keeps the implied repayment within collateral:

    C_x >= beta * (rx_0 - rx_i)   and   C_y >= beta * (ry_0 - ry_i)

An order that would breach the bound is rejected atomically; the session
stays valid.  Closing the block settles the escrow from the *net* move
(Yx, Yy): the protocol refunds beta times the net inflow token from the
pool, debits beta times the net outflow token from the escrow, and skims
the vault quantity that restores the block's final price -- so any order
sequence with the same net end-state produces identical pool, vault and
escrow outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .curves import DomainError, Reserves, lvr, swap_exact_in
from .diamond import BlockResult, DiamondPool


class UnlockError(RuntimeError):
    """Second unlock in the same block, or acting on a closed session."""


class InvariantViolation(RuntimeError):
    """Escrow cannot cover a debit the order bounds should have prevented."""


@dataclass
class Order:
    side: str               # token paid in: 'x' or 'y'
    amount_in: float
    origin: str = "user"    # 'user' or 'arb'


class ExecutionReport(NamedTuple):
    executed: bool
    amount_out: float
    reserves: Reserves
    reason: str = ""


@dataclass
class RebateController:
    """Rebate decay under inactivity.

    Each empty block multiplies the current rebate by ``decay``; any
    activity resets it to the initial value.
    """

    beta_initial: float
    decay: float = 0.9
    beta_current: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not 0.0 < self.beta_initial < 1.0:
            raise DomainError(f"beta_initial must be in (0,1), got {self.beta_initial}")
        if not 0.0 < self.decay <= 1.0:
            raise DomainError(f"decay must be in (0,1], got {self.decay}")
        if self.beta_current is None:
            self.beta_current = self.beta_initial

    def tick(self, had_activity: bool) -> float:
        if had_activity:
            self.beta_current = self.beta_initial
        else:
            self.beta_current *= self.decay
        return self.beta_current


@dataclass
class EscrowSettlement:
    """Outcome of closing a block: what the escrow paid and got back."""

    debit_token: str = "x"
    debit: float = 0.0
    refund_from_pool: float = 0.0   # beta * net inflow, paid to the arbitrageur
    collateral_returned: tuple[float, float] = (0.0, 0.0)
    vault_skim: float = 0.0


class UnlockSession:
    """Staged per-block state; the pool itself mutates only at close."""

    def __init__(self, engine: "BlockEngine", collateral: tuple[float, float]):
        cx, cy = collateral
        if cx < 0 or cy < 0:
            raise DomainError(f"collateral must be non-negative, got {collateral}")
        pool = engine.pool
        self.engine = engine
        self.collateral = (float(cx), float(cy))
        self.start_reserves = pool.reserves
        self.reserves = pool.reserves
        self.curve = pool.curve.with_k(pool.curve.k)
        self.height = pool.block_height
        self.orders_applied = 0
        self.closed = False
        # Arbitrageur-origin token flows (received minus paid), for profit
        # attribution only; escrow settlement uses the pool's net move.
        self.arb_net_x = 0.0
        self.arb_net_y = 0.0
        self.settlement: Optional[EscrowSettlement] = None


class BlockEngine:
    """Drives a DiamondPool through unlock / orders / close cycles."""

    def __init__(self, pool: DiamondPool, fee: float = 0.0):
        self.pool = pool
        self.fee = fee
        self._session: Optional[UnlockSession] = None

    def unlock(self, collateral: tuple[float, float]) -> UnlockSession:
        """Open the block's session.  One unlock per pool per block."""
        if self._session is not None and not self._session.closed:
            raise UnlockError("a pool unlock is already active for this block")
        self._session = UnlockSession(self, collateral)
        return self._session

    def execute_order(self, session: UnlockSession, order: Order) -> ExecutionReport:
        """Execute an order at CFMM(pool) pricing iff the bound allows it."""
        if session.closed:
            raise UnlockError("session already closed")
        if order.amount_in == 0.0:
            return ExecutionReport(True, 0.0, session.reserves, "no-op")
        out, new_r = swap_exact_in(session.curve, session.reserves,
                                   order.amount_in, order.side, self.fee)
        beta = self.pool.params.beta
        cx, cy = session.collateral
        r0 = session.start_reserves
        if (beta * (r0.rx - new_r.rx) > cx) or (beta * (r0.ry - new_r.ry) > cy):
            return ExecutionReport(False, 0.0, session.reserves,
                                   "collateral bound violated")
        session.reserves = new_r
        session.curve.k = session.curve.invariant(new_r.rx, new_r.ry)
        session.orders_applied += 1
        if order.origin == "arb":
            if order.side == "x":
                session.arb_net_x -= order.amount_in
                session.arb_net_y += out
            else:
                session.arb_net_y -= order.amount_in
                session.arb_net_x += out
        return ExecutionReport(True, out, new_r)

    def close_block(self, session: UnlockSession, eps: Optional[float] = None,
                    conversion=None) -> BlockResult:
        """Settle the block from the net move and advance the pool.

        Equivalent to running the core transition directly on the net
        (Yx, Yy): refund beta*inflow from the pool, debit beta*outflow from
        escrow, skim the vault quantity restoring the final pool price,
        then rebalance and (per cadence) convert.  ``eps`` is only used to
        value the result metrics; it defaults to the final pool price,
        which for an optimizing arbitrageur is the external price.
        """
        if session.closed:
            raise UnlockError("session already closed")
        pool = self.pool
        beta = pool.params.beta
        r0 = session.start_reserves
        cur = session.reserves
        curve = session.curve
        p1 = curve.price(cur.rx, cur.ry)
        if eps is None:
            eps = p1
        net_x = cur.rx - r0.rx
        net_y = cur.ry - r0.ry
        cx, cy = session.collateral
        settle = EscrowSettlement(collateral_returned=(cx, cy))

        if net_x < 0.0 and net_y < 0.0:
            raise InvariantViolation(f"net outflow in both tokens ({net_x}, {net_y})")
        if net_x < 0.0:
            # Orders net bought x: escrow repays beta*outflow in x, the pool
            # refunds beta*inflow in y, and the skim (in x) restores p1.
            debit = beta * (-net_x)
            if debit > cx * (1.0 + 1e-12):
                raise InvariantViolation(
                    f"escrow debit {debit} exceeds collateral {cx}")
            rx1 = cur.rx + debit
            ry1 = cur.ry - beta * net_y
            rx_final = curve.rx_at_price(ry1, p1)
            skim = rx1 - rx_final
            pool.vault.vx += skim
            pool.reserves = Reserves(rx_final, ry1)
            settle.debit_token = "x"
            settle.debit = debit
            settle.refund_from_pool = beta * net_y
            settle.collateral_returned = (cx - debit, cy)
            settle.vault_skim = skim
            skim_token = "x"
        elif net_y < 0.0:
            debit = beta * (-net_y)
            if debit > cy * (1.0 + 1e-12):
                raise InvariantViolation(
                    f"escrow debit {debit} exceeds collateral {cy}")
            ry1 = cur.ry + debit
            rx1 = cur.rx - beta * net_x
            ry_final = curve.ry_at_price(rx1, p1)
            skim = ry1 - ry_final
            pool.vault.vy += skim
            pool.reserves = Reserves(rx1, ry_final)
            settle.debit_token = "y"
            settle.debit = debit
            settle.refund_from_pool = beta * net_x
            settle.collateral_returned = (cx, cy - debit)
            settle.vault_skim = skim
            skim_token = "y"
        else:
            # No net outflow (no orders, or pure fee inflow): nothing owed.
            pool.reserves = cur
            skim = 0.0
            skim_token = "y"

        pool.curve.k = pool.curve.invariant(*pool.reserves)
        pool.vault_rebalance(p1)
        pool.block_height += 1
        if conversion is not None:
            conversion.on_block(pool, eps)

        cfmm_lvr = lvr(r0, eps, pool.curve.with_k(curve_start_k(session)))
        arb_x = session.arb_net_x
        arb_y = session.arb_net_y
        if net_x < 0.0:
            arb_x -= settle.debit
            arb_y += settle.refund_from_pool
        elif net_y < 0.0:
            arb_y -= settle.debit
            arb_x += settle.refund_from_pool
        arb_profit = arb_x + arb_y * eps
        session.settlement = settle
        session.closed = True
        self._session = None
        return BlockResult(arb_profit, (skim_token, skim), cfmm_lvr, arb_profit)


def curve_start_k(session: UnlockSession) -> float:
    """Pool constant at the session's start reserves."""
    r0 = session.start_reserves
    return session.curve.invariant(r0.rx, r0.ry)


def tick_rebate(ctrl: RebateController, had_activity: bool) -> float:
    """Advance the rebate controller by one block."""
    return ctrl.tick(had_activity)
