"""Constant-function pool mathematics.

A pool is a pair of reserves (rx, ry) constrained to an invariant curve
f(rx, ry) = k.  The pool price (token x per token y) is the marginal rate
of exchange along the curve.  For the product invariant f = rx*ry the
price is rx/ry and everything below has a closed form; other curves fall
back to bracketed bisection.

The three operations that matter for LVR accounting:

* ``arb_target(eps)``  -- the reserves minimizing eps*ry + rx on the
  curve, i.e. where an optimal arbitrageur leaves the pool when the
  external price is eps.  First-order condition: price(target) == eps.
* ``pool_value(eps)``  -- the minimized portfolio value at the target,
  2*sqrt(k*eps) for the product curve.
* ``lvr(r, eps)``      -- rx + ry*eps - pool_value(eps): what the pool
  loses to the arbitrageur relative to holding, always >= 0 on-curve.
"""

from __future__ import annotations

import math
from typing import NamedTuple


class DomainError(ValueError):
    """Inputs outside an operation's domain (zero reserve, bad price, ...)."""


class ConvergenceError(RuntimeError):
    """Numeric solver failed to converge; carries the final residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class Reserves(NamedTuple):
    rx: float
    ry: float

    def value(self, eps: float) -> float:
        """Portfolio value in token-x units at external price eps."""
        return self.rx + self.ry * eps


class ArbOutcome(NamedTuple):
    """Result of an optimal arbitrage against the pool at external price eps.

    delta_x/delta_y are signed token flows *into* the pool (opposite signs
    unless both zero); lvr is the arbitrageur's gain in token-x units.
    """

    target: Reserves
    delta_x: float
    delta_y: float
    lvr: float


_PRICE_RTOL = 1e-12
_MAX_ITER = 200


class PoolCurve:
    """Invariant curve with numeric fallbacks.

    Subclasses must provide ``invariant`` and ``price`` (the price function
    is assumed strictly increasing in rx and strictly decreasing in ry, and
    the invariant strictly increasing in each reserve).  Closed-form curves
    override the solver methods.
    """

    kind = "generic"

    def __init__(self, k: float):
        if not k > 0:
            raise DomainError(f"pool constant must be positive, got {k}")
        self.k = float(k)

    def with_k(self, k: float) -> "PoolCurve":
        """A copy of this curve with a new pool constant."""
        clone = self.__class__.__new__(self.__class__)
        clone.__dict__.update(self.__dict__)
        clone.k = float(k)
        return clone

    def invariant(self, rx: float, ry: float) -> float:
        raise NotImplementedError

    def price(self, rx: float, ry: float) -> float:
        raise NotImplementedError

    # -- numeric fallbacks ------------------------------------------------

    def ry_on_curve(self, rx: float) -> float:
        """Solve invariant(rx, ry) = k for ry (bisection)."""
        return _bisect_increasing(lambda ry: self.invariant(rx, ry), self.k,
                                  seed=self.k / max(rx, 1e-300))

    def rx_on_curve(self, ry: float) -> float:
        return _bisect_increasing(lambda rx: self.invariant(rx, ry), self.k,
                                  seed=self.k / max(ry, 1e-300))

    def ry_at_price(self, rx: float, eps: float) -> float:
        """Solve price(rx, ry) = eps for ry at fixed rx (price falls in ry)."""
        return _bisect_increasing(lambda ry: 1.0 / self.price(rx, ry),
                                  1.0 / eps, seed=rx / eps)

    def rx_at_price(self, ry: float, eps: float) -> float:
        return _bisect_increasing(lambda rx: self.price(rx, ry), eps,
                                  seed=ry * eps)

    def swap_out(self, r: Reserves, eff_in: float, side: str) -> float:
        """Output amount when eff_in of ``side`` moves along the invariant."""
        if side == "x":
            return r.ry - self.ry_on_curve(r.rx + eff_in)
        return r.rx - self.rx_on_curve(r.ry + eff_in)

    def arb_target(self, eps: float) -> Reserves:
        """Reserves minimizing eps*ry + rx on the curve.

        Bisection on the first-order condition price(rx, ry_on_curve(rx)) = eps;
        relative price tolerance 1e-12, at most 200 iterations.
        """
        if not eps > 0:
            raise DomainError(f"external price must be positive, got {eps}")

        def curve_price(rx: float) -> float:
            return self.price(rx, self.ry_on_curve(rx))

        rx = _bisect_increasing(curve_price, eps, seed=math.sqrt(self.k * eps),
                                rtol=_PRICE_RTOL)
        return Reserves(rx, self.ry_on_curve(rx))

    def pool_value(self, eps: float) -> float:
        t = self.arb_target(eps)
        return t.rx + t.ry * eps


class ProductCurve(PoolCurve):
    """Uniswap-V2 style product invariant: rx*ry = k, price rx/ry."""

    kind = "product"

    def invariant(self, rx: float, ry: float) -> float:
        return rx * ry

    def price(self, rx: float, ry: float) -> float:
        if rx <= 0 or ry <= 0:
            raise DomainError(f"reserves must be positive, got ({rx}, {ry})")
        return rx / ry

    def ry_on_curve(self, rx: float) -> float:
        return self.k / rx

    def rx_on_curve(self, ry: float) -> float:
        return self.k / ry

    def ry_at_price(self, rx: float, eps: float) -> float:
        return rx / eps

    def rx_at_price(self, ry: float, eps: float) -> float:
        return ry * eps

    def swap_out(self, r: Reserves, eff_in: float, side: str) -> float:
        # Direct form avoids cancellation for inputs tiny relative to reserves.
        if side == "x":
            return r.ry * eff_in / (r.rx + eff_in)
        return r.rx * eff_in / (r.ry + eff_in)

    def arb_target(self, eps: float) -> Reserves:
        if not eps > 0:
            raise DomainError(f"external price must be positive, got {eps}")
        rx = math.sqrt(self.k * eps)
        return Reserves(rx, rx / eps)

    def pool_value(self, eps: float) -> float:
        if not eps > 0:
            raise DomainError(f"external price must be positive, got {eps}")
        return 2.0 * math.sqrt(self.k * eps)


class VirtualReserveCurve(PoolCurve):
    """Product curve on virtual reserves: (rx + ox)(ry + oy) = k.

    Price (rx + ox)/(ry + oy) still satisfies the ratio-add property: adding
    (c*p, c) at price p leaves the price unchanged.  With zero offsets this
    is the product curve routed through the generic bisection solvers, which
    is what the tests use to cross-check the numeric path against the closed
    forms.
    """

    kind = "virtual-product"

    def __init__(self, k: float, ox: float = 0.0, oy: float = 0.0):
        super().__init__(k)
        self.ox = float(ox)
        self.oy = float(oy)

    def invariant(self, rx: float, ry: float) -> float:
        return (rx + self.ox) * (ry + self.oy)

    def price(self, rx: float, ry: float) -> float:
        if rx + self.ox <= 0 or ry + self.oy <= 0:
            raise DomainError(f"reserves must be positive, got ({rx}, {ry})")
        return (rx + self.ox) / (ry + self.oy)


def _bisect_increasing(fn, target: float, seed: float, rtol: float = 1e-14):
    """Solve fn(z) = target for an increasing fn, z > 0.

    Brackets geometrically from ``seed`` then bisects; raises
    ConvergenceError with the final relative residual after 200 iterations.
    """
    lo = hi = max(seed, 1e-300)
    for _ in range(_MAX_ITER):
        if fn(lo) <= target:
            break
        lo *= 0.5
    for _ in range(_MAX_ITER):
        if fn(hi) >= target:
            break
        hi *= 2.0
    z = seed
    for _ in range(_MAX_ITER):
        z = 0.5 * (lo + hi)
        val = fn(z)
        if abs(val - target) <= rtol * abs(target):
            return z
        if val < target:
            lo = z
        else:
            hi = z
        if hi - lo <= 1e-15 * z:
            return z
    residual = abs(fn(z) - target) / abs(target)
    if residual <= 1e-9:
        return z
    raise ConvergenceError("bisection on invariant curve did not converge",
                           residual)


def price(curve: PoolCurve, r: Reserves) -> float:
    """Pool price (token x per token y) at reserves r."""
    if r.rx <= 0 or r.ry <= 0:
        raise DomainError(f"price undefined at zero reserve ({r.rx}, {r.ry})")
    return curve.price(r.rx, r.ry)


def arb_target(curve: PoolCurve, eps: float, r: Reserves | None = None) -> ArbOutcome:
    """Optimal arbitrage move against the pool at external price eps.

    When ``r`` (the pre-move reserves, assumed on-curve) is given, the
    outcome carries the signed flows and the realized LVR; otherwise only
    the target reserves are meaningful.
    """
    target = curve.arb_target(eps)
    if r is None:
        return ArbOutcome(target, 0.0, 0.0, 0.0)
    dx = target.rx - r.rx
    dy = target.ry - r.ry
    return ArbOutcome(target, dx, dy, lvr(r, eps, curve))


def pool_value(curve: PoolCurve, eps: float) -> float:
    """Minimal portfolio value eps*ry + rx over the invariant curve."""
    return curve.pool_value(eps)


def lvr(r_prev: Reserves, eps_next: float, curve: PoolCurve) -> float:
    """Loss-versus-rebalancing of one block: holding value minus pool value.

    r_prev must lie on the curve; the result is then non-negative (zero iff
    the pool price already equals eps_next).
    """
    held = r_prev.rx + r_prev.ry * eps_next
    val = held - curve.pool_value(eps_next)
    if val < 0.0:
        if val < -1e-9 * held:
            raise DomainError(
                f"negative LVR {val}: reserves {tuple(r_prev)} not on curve k={curve.k}")
        return 0.0
    return val


def swap_exact_in(curve: PoolCurve, r: Reserves, amount_in: float, side: str,
                  fee: float = 0.0) -> tuple[float, Reserves]:
    """Swap ``amount_in`` of ``side`` ('x' or 'y') into the pool.

    Fee-on-input: (1-fee)*amount_in moves along the invariant, the fee
    portion is credited to the input-side reserve after the swap.  The
    caller owns recomputing k from the returned reserves.
    """
    if not amount_in > 0:
        raise DomainError(f"amount_in must be positive, got {amount_in}")
    if not 0.0 <= fee < 1.0:
        raise DomainError(f"fee must be in [0, 1), got {fee}")
    eff = amount_in * (1.0 - fee)
    if side == "x":
        out = curve.swap_out(r, eff, "x")
        if out <= 0 or out >= r.ry:
            raise DomainError(f"swap output {out} outside reserves {r.ry}")
        return out, Reserves(r.rx + amount_in, r.ry - out)
    if side == "y":
        out = curve.swap_out(r, eff, "y")
        if out <= 0 or out >= r.rx:
            raise DomainError(f"swap output {out} outside reserves {r.rx}")
        return out, Reserves(r.rx - out, r.ry + amount_in)
    raise DomainError(f"side must be 'x' or 'y', got {side!r}")
