import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diamondsim.curves import (DomainError, ProductCurve, Reserves,
                               VirtualReserveCurve, arb_target, lvr,
                               pool_value, price, swap_exact_in)

K = 10_000.0


def test_price_symmetric_pool():
    assert price(ProductCurve(K), Reserves(100.0, 100.0)) == 1.0


def test_price_division_oracle():
    r = Reserves(110.0, 90.909091)
    assert price(ProductCurve(K), r) == pytest.approx(110.0 / 90.909091)
    assert price(ProductCurve(K), r) == pytest.approx(1.21, rel=1e-7)


def test_price_reference_pool():
    # $100m USDC against 76,336 ETH quotes about $1,310 per ETH.
    r = Reserves(1e8, 76336.0)
    assert price(ProductCurve(1e8 * 76336.0), r) == pytest.approx(1310.0, rel=1e-3)


def test_price_zero_reserve_rejected():
    with pytest.raises(DomainError):
        price(ProductCurve(K), Reserves(0.0, 100.0))
    with pytest.raises(DomainError):
        price(ProductCurve(K), Reserves(100.0, 0.0))


@given(rx=st.floats(1e-3, 1e9), ry=st.floats(1e-3, 1e9),
       c=st.floats(1e-6, 1e6))
def test_price_ratio_add_leaves_price_unchanged(rx, ry, c):
    curve = ProductCurve(rx * ry)
    p = curve.price(rx, ry)
    assert curve.price(rx + c * p, ry + c) == pytest.approx(p, rel=1e-12)


def test_price_monotonicity():
    curve = ProductCurve(K)
    assert curve.price(101.0, 100.0) > curve.price(100.0, 100.0)
    assert curve.price(100.0, 101.0) < curve.price(100.0, 100.0)


def test_arb_target_closed_form_up_move():
    out = arb_target(ProductCurve(K), 1.21, Reserves(100.0, 100.0))
    assert out.target.rx == pytest.approx(110.0, rel=1e-12)
    assert out.target.ry == pytest.approx(90.909091, rel=1e-7)
    assert out.delta_x == pytest.approx(10.0, rel=1e-12)
    assert out.delta_y == pytest.approx(-9.090909, rel=1e-6)
    # Value check: V(eps) = 2*sqrt(k*eps) = 220 vs held portfolio 221.
    assert out.lvr == pytest.approx(1.0, rel=1e-9)


def test_arb_target_noop_at_current_price():
    out = arb_target(ProductCurve(K), 1.0, Reserves(100.0, 100.0))
    assert out.target == Reserves(100.0, 100.0)
    assert out.lvr == pytest.approx(0.0, abs=1e-12)


def test_arb_target_down_move():
    out = arb_target(ProductCurve(K), 0.81, Reserves(100.0, 100.0))
    assert out.target.rx == pytest.approx(90.0, rel=1e-12)
    assert out.target.ry == pytest.approx(111.111111, rel=1e-7)
    assert out.lvr == pytest.approx(1.0, rel=1e-9)


def test_arb_target_is_curve_minimum():
    # Brute-force oracle: no on-curve point values below the target.
    rng = np.random.default_rng(42)
    for _ in range(20):
        k = 10.0 ** rng.uniform(2, 10)
        eps = 10.0 ** rng.uniform(-2, 2)
        curve = ProductCurve(k)
        best = curve.pool_value(eps)
        rx = 10.0 ** rng.uniform(math.log10(math.sqrt(k)) - 3,
                                 math.log10(math.sqrt(k)) + 3, size=1000)
        values = rx + (k / rx) * eps
        assert np.all(values >= best * (1.0 - 1e-12))


def test_pool_value_examples():
    curve = ProductCurve(K)
    assert pool_value(curve, 1.21) == pytest.approx(220.0, rel=1e-12)
    assert pool_value(curve, 1.0) == pytest.approx(200.0, rel=1e-12)
    assert pool_value(curve, 0.81) == pytest.approx(180.0, rel=1e-12)


def test_lvr_examples():
    curve = ProductCurve(K)
    r = Reserves(100.0, 100.0)
    assert lvr(r, 1.21, curve) == pytest.approx(1.0, rel=1e-9)
    assert lvr(r, 1.0, curve) == pytest.approx(0.0, abs=1e-12)
    assert lvr(r, 0.81, curve) == pytest.approx(1.0, rel=1e-9)


@given(rx=st.floats(1.0, 1e8), eps_mult=st.floats(0.2, 5.0))
def test_lvr_nonnegative_on_curve(rx, eps_mult):
    curve = ProductCurve(K)
    r = Reserves(rx, curve.ry_on_curve(rx))
    eps = curve.price(r.rx, r.ry) * eps_mult
    val = lvr(r, eps, curve)
    assert val >= 0.0
    if abs(eps_mult - 1.0) > 1e-6:
        assert val > 0.0


def test_lvr_rejects_off_curve_reserves():
    with pytest.raises(DomainError):
        lvr(Reserves(10.0, 10.0), 1.0, ProductCurve(K))


class TestNumericFallback:
    """The generic bisection path must agree with the closed forms."""

    def test_matches_product_closed_form(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            k = 10.0 ** rng.uniform(2, 12)
            eps = 10.0 ** rng.uniform(-3, 3)
            numeric = VirtualReserveCurve(k).arb_target(eps)
            closed = ProductCurve(k).arb_target(eps)
            assert numeric.rx == pytest.approx(closed.rx, rel=1e-10)
            assert numeric.ry == pytest.approx(closed.ry, rel=1e-10)

    def test_offsets_satisfy_first_order_condition(self):
        curve = VirtualReserveCurve(5e4, ox=25.0, oy=40.0)
        for eps in (0.3, 1.0, 4.7):
            t = curve.arb_target(eps)
            assert curve.price(t.rx, t.ry) == pytest.approx(eps, rel=1e-10)
            assert curve.invariant(t.rx, t.ry) == pytest.approx(curve.k, rel=1e-10)

    def test_ratio_add_property_with_offsets(self):
        curve = VirtualReserveCurve(5e4, ox=25.0, oy=40.0)
        p = curve.price(120.0, 90.0)
        assert curve.price(120.0 + 7 * p, 90.0 + 7) == pytest.approx(p, rel=1e-12)


def test_swap_exact_in_no_fee():
    out, r = swap_exact_in(ProductCurve(K), Reserves(100.0, 100.0), 10.0, "x")
    assert out == pytest.approx(9.090909, rel=1e-7)
    assert r == Reserves(110.0, 100.0 - out)


def test_swap_small_input_limit():
    curve = ProductCurve(K)
    outs = [swap_exact_in(curve, Reserves(100.0, 100.0), a, "x")[0]
            for a in (1e-3, 1e-6, 1e-9)]
    assert outs[0] > outs[1] > outs[2] > 0.0
    assert outs[2] == pytest.approx(1e-9, rel=1e-6)


def test_swap_with_fee_on_input():
    out, r = swap_exact_in(ProductCurve(K), Reserves(100.0, 100.0), 10.0, "x",
                           fee=0.003)
    assert out == pytest.approx(9.066108, rel=1e-6)  # 9.97 effective input
    assert r.rx == pytest.approx(110.0)               # 0.03 fee kept in reserve
    assert r.rx * r.ry > K                            # fee grows the invariant


@given(rx=st.floats(10.0, 1e7), ry=st.floats(10.0, 1e7),
       frac=st.floats(1e-6, 0.5))
@settings(max_examples=200)
def test_swap_round_trip_is_exact(rx, ry, frac):
    curve = ProductCurve(rx * ry)
    amount = rx * frac
    out, r1 = swap_exact_in(curve, Reserves(rx, ry), amount, "x")
    back, r2 = swap_exact_in(curve, r1, out, "y")
    assert back == pytest.approx(amount, rel=1e-12)
    assert r2.rx == pytest.approx(rx, rel=1e-12)
    assert r2.ry == pytest.approx(ry, rel=1e-12)


def test_swap_rejects_bad_inputs():
    curve = ProductCurve(K)
    r = Reserves(100.0, 100.0)
    with pytest.raises(DomainError):
        swap_exact_in(curve, r, 0.0, "x")
    with pytest.raises(DomainError):
        swap_exact_in(curve, r, 10.0, "x", fee=1.0)
    with pytest.raises(DomainError):
        swap_exact_in(curve, r, 10.0, "z")
