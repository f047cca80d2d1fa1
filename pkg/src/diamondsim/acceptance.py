"""Executable acceptance criteria.

Each criterion is a function returning a CriterionResult; the pytest
acceptance module asserts them one by one and the CLI ``verify``
subcommand runs the same list, printing one pass/fail line per criterion.
Tolerances are pinned here, not calibrated elsewhere.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .blockengine import BlockEngine, Order
from .conversion import (AuctionModel, OracleModel, cvf_convert,
                         settle_futures, settle_price)
from .curves import ProductCurve, Reserves, lvr, pool_value, swap_exact_in
from .diamond import DiamondParams, DiamondPool, Vault
from .harness import ScenarioConfig, SweepSpec, run_scenario, run_sweep
from .market import PathParams, gen_path


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    runtime: float


def _result(number: int, title: str, passed: bool, detail: str,
            t0: float) -> CriterionResult:
    return CriterionResult(number, title, passed, detail, time.perf_counter() - t0)


def criterion_1_rebate_theorem(workers: int = 1) -> CriterionResult:
    """Arbitrageur block profit equals (1-beta) * LVR on randomized pools."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    n = 10_000
    for _ in range(n):
        rx = 10.0 ** rng.uniform(0, 9)
        ry = 10.0 ** rng.uniform(0, 9)
        beta = rng.uniform(0.05, 0.95)
        eps = (rx / ry) * rng.uniform(0.5, 1.5)
        pool = DiamondPool(Reserves(rx, ry), DiamondParams(beta, 1))
        res = pool.apply_arbitrage(eps)
        # Independent oracle: LVR through the pool-value route.
        expect = (1.0 - beta) * lvr(Reserves(rx, ry), eps, ProductCurve(rx * ry))
        scale = max(abs(expect), 1e-30)
        worst = max(worst, abs(res.arb_profit - expect) / scale)
    elapsed = time.perf_counter() - t0
    passed = worst <= 1e-9 and elapsed < 5.0
    return _result(1, "rebate theorem: profit = (1-beta)*LVR", passed,
                   f"worst rel err {worst:.2e} over {n} cases, {elapsed:.2f}s", t0)


def criterion_2_zero_expectancy(workers: int = 1) -> CriterionResult:
    """Conversions are zero-expectancy under fair settlement; sign tests."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    n = 20_000
    tau = 10
    s = math.sqrt(math.pi / 2) * 0.05 / 10
    details = []
    ok = True

    # Per-block conversion vs futures: sell eta at the pool price (equal to
    # the external price at conversion), settle tau blocks later.
    p_c = 1310.0
    steps = rng.normal(-0.5 * s * s, s, size=(n, tau)).sum(axis=1)
    eps_T = p_c * np.exp(steps)
    eta = 1.0
    oracle = OracleModel(0.02)
    noise = rng.uniform(-oracle.rel_width, oracle.rel_width, size=n)
    p_T = eps_T * (1.0 + noise)
    pnl = eta * (p_T - p_c)
    # conversion leg + settlement pair valued at the settlement-time price
    change = eta * (p_c - eps_T) + (pnl / 2.0) * (1.0 + eps_T / p_T)
    mean = change.mean()
    se = change.std(ddof=1) / math.sqrt(n)
    ok &= abs(mean) <= 3 * se
    details.append(f"PBC mean {mean:.3e} (3SE {3*se:.3e})")

    # Fair settlement is an exact identity per trial.
    exact = eta * (p_c - eps_T) + eta * (eps_T - p_c)
    ok &= float(np.max(np.abs(exact))) <= 1e-9
    details.append(f"PBC fair identity max {np.max(np.abs(exact)):.1e}")

    # Periodic conversion auction: fair bids transfer exactly zero; haircut
    # bids lose, premium bids gain.
    from .conversion import pca_convert

    eps = 1310.0
    transfers = {}
    for label, haircut in (("fair", 0.0), ("haircut", 0.05), ("premium", -0.05)):
        vault = Vault(vy=8.0)
        before = vault.value(eps)
        pair = pca_convert(vault, eps, AuctionModel(haircut))
        transfers[label] = pair.value(eps) - before
    ok &= transfers["fair"] == 0.0
    ok &= transfers["haircut"] < 0.0 < transfers["premium"]
    details.append(f"PCA transfers fair {transfers['fair']:.1e}, "
                   f"haircut {transfers['haircut']:.3e}, "
                   f"premium {transfers['premium']:.3e}")

    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30.0
    return _result(2, "conversion zero expectancy (PBC/PCA)", ok,
                   "; ".join(details) + f", {elapsed:.2f}s", t0)


def criterion_3_dominance(workers: int = 1) -> CriterionResult:
    """Defaults: diamond/CFMM ratio > 1 on every path, both modes, < 2 min."""
    t0 = time.perf_counter()
    details = []
    ok = True
    for mode in ("pca", "cvf"):
        res = run_scenario(ScenarioConfig(conversion_mode=mode), workers)
        ratios = [r.ratio_diamond_cfmm for r in res.results]
        frac = sum(1 for r in ratios if r > 1.0) / len(ratios)
        ok &= frac == 1.0 and not res.liquidated
        details.append(f"{mode}: min ratio {min(ratios):.6f}, "
                       f"{100*frac:.1f}% > 1 of {len(ratios)}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    return _result(3, "strategy dominance over CFMM (both modes)", ok,
                   "; ".join(details) + f", {elapsed:.1f}s", t0)


def criterion_4_conversion_cadence_stats(workers: int = 1) -> CriterionResult:
    """Daily-conversion ratio in [1.005, 1.02]; weekly std >= 2x daily std."""
    t0 = time.perf_counter()
    daily = run_scenario(ScenarioConfig(tau_blocks=10), workers).summary
    weekly = run_scenario(ScenarioConfig(tau_blocks=70), workers).summary
    in_band = 1.005 <= daily.mean_ratio_diamond_cfmm <= 1.02
    spread = weekly.std_ratio_diamond_cfmm >= 2.0 * daily.std_ratio_diamond_cfmm
    return _result(
        4, "conversion cadence statistics", in_band and spread,
        f"daily mean {daily.mean_ratio_diamond_cfmm:.6f} "
        f"std {daily.std_ratio_diamond_cfmm:.6f}; "
        f"weekly mean {weekly.mean_ratio_diamond_cfmm:.6f} "
        f"std {weekly.std_ratio_diamond_cfmm:.6f}", t0)


def criterion_5_quadratic_lvr(workers: int = 1) -> CriterionResult:
    """log(mean cumulative CFMM LVR) vs log(daily move) slope in [1.8, 2.2]."""
    t0 = time.perf_counter()
    moves = (0.01, 0.02, 0.04, 0.08)
    sweep = run_sweep(SweepSpec("daily_move", moves),
                      ScenarioConfig(n_paths=200), workers)
    lvrs = [s.mean_cumulative_cfmm_lvr for _, s in sweep.summaries()]
    slope = float(np.polyfit(np.log(moves), np.log(lvrs), 1)[0])
    return _result(5, "LVR quadratic in volatility", 1.8 <= slope <= 2.2,
                   f"fitted slope {slope:.3f} over moves {moves}", t0)


def criterion_6_monotone_sweeps(workers: int = 1) -> CriterionResult:
    """Mean ratio strictly increasing in beta, fee and days."""
    t0 = time.perf_counter()
    base = ScenarioConfig(n_paths=200)
    sweeps = [("beta", (0.25, 0.5, 0.75, 0.95)),
              ("fee", (0.0, 0.0005, 0.003, 0.01)),
              ("days", (90, 180, 365))]
    details = []
    ok = True
    for var, values in sweeps:
        res = run_sweep(SweepSpec(var, values), base, workers)
        means = [s.mean_ratio_diamond_cfmm for _, s in res.summaries()]
        mono = all(a < b for a, b in zip(means, means[1:]))
        ok &= mono
        details.append(f"{var}: " + " < ".join(f"{m:.6f}" for m in means)
                       + ("" if mono else " NOT monotone"))
    return _result(6, "monotone sweeps (beta, fee, days)", ok,
                   "; ".join(details), t0)


def criterion_7_block_engine(workers: int = 1) -> CriterionResult:
    """Path independence, escrow safety, user orders at exact CFMM prices."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    ok = True
    details = []

    worst = 0.0
    for _ in range(100):
        rx = 10.0 ** rng.uniform(1, 6)
        ry = 10.0 ** rng.uniform(1, 6)
        beta = rng.uniform(0.1, 0.95)
        eps = (rx / ry) * rng.uniform(0.7, 1.3)
        baseline = _close_with_orders(rx, ry, beta, eps, [("arb", 1.0)])
        # Random decomposition of the same net move plus user round trips.
        cuts = sorted(rng.uniform(0.05, 0.95, size=rng.integers(1, 4)))
        slices = [("arb", b - a) for a, b in
                  zip([0.0, *cuts], [*cuts, 1.0])]
        mixed = []
        for piece in slices:
            mixed.append(piece)
            if rng.random() < 0.5:
                mixed.append(("roundtrip", rng.uniform(0.001, 0.01)))
        alt = _close_with_orders(rx, ry, beta, eps, mixed)
        for a, b in zip(baseline, alt):
            scale = max(abs(a), abs(b), 1e-30)
            worst = max(worst, abs(a - b) / scale)
    ok &= worst <= 1e-9
    details.append(f"path independence worst rel dev {worst:.2e}")

    # Safety plus user-order bit-equality over random accepted sequences.
    bit_equal = True
    safe = True
    for _ in range(200):
        rx, ry = 1000.0, 1000.0
        beta = rng.uniform(0.1, 0.95)
        pool = DiamondPool(Reserves(rx, ry), DiamondParams(beta, 1))
        engine = BlockEngine(pool)
        collateral = (rng.uniform(0, 50), rng.uniform(0, 50))
        session = engine.unlock(collateral)
        for _ in range(rng.integers(1, 12)):
            side = "x" if rng.random() < 0.5 else "y"
            amount = rng.uniform(0.1, 80.0)
            oracle = swap_exact_in(session.curve, session.reserves, amount, side)
            report = engine.execute_order(session, Order(side, amount))
            if report.executed:
                bit_equal &= report.amount_out == oracle[0]
                bit_equal &= report.reserves == oracle[1]
        try:
            result = engine.close_block(session)
        except Exception:
            safe = False
            break
        settle = session.settlement
        safe &= settle.debit <= collateral[0 if settle.debit_token == "x" else 1] + 1e-9
    ok &= bit_equal and safe
    details.append(f"escrow safety {safe}, user CFMM pricing bit-equal {bit_equal}")
    return _result(7, "block engine properties", ok, "; ".join(details), t0)


def _close_with_orders(rx, ry, beta, eps, plan):
    """Run a session applying ``plan`` and return the outcome fingerprint.

    Plan items: ("arb", fraction of the remaining move to the target) or
    ("roundtrip", relative size of a user buy immediately arbed back).
    """
    pool = DiamondPool(Reserves(rx, ry), DiamondParams(beta, 1))
    engine = BlockEngine(pool)
    target = pool.curve.arb_target(eps)
    session = engine.unlock((rx, ry))  # ample collateral
    moved = 0.0
    for kind, value in plan:
        if kind == "arb":
            moved = min(1.0, moved + value)
            goal_rx = rx + (target.rx - rx) * moved
            cur = session.reserves
            if goal_rx > cur.rx:
                engine.execute_order(session, Order("x", goal_rx - cur.rx, "arb"))
            elif goal_rx < cur.rx:
                need = cur.ry * (cur.rx / goal_rx - 1.0)
                engine.execute_order(session, Order("y", need, "arb"))
        else:
            cur = session.reserves
            amount = cur.rx * value
            out = engine.execute_order(session, Order("x", amount, "user"))
            if out.executed:
                engine.execute_order(session, Order("y", out.amount_out, "arb"))
    # Final push exactly to the target.
    cur = session.reserves
    if target.rx > cur.rx:
        engine.execute_order(session, Order("x", target.rx - cur.rx, "arb"))
    elif target.rx < cur.rx:
        engine.execute_order(session, Order("y", target.ry - cur.ry, "arb"))
    engine.close_block(session, eps)
    settle = session.settlement
    return (pool.reserves.rx, pool.reserves.ry, pool.vault.vx, pool.vault.vy,
            settle.debit, settle.refund_from_pool)


def criterion_8_structural_invariants(workers: int = 1) -> CriterionResult:
    """Vault/price/curve invariants, martingale + determinism, settlement ids."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    ok = True
    details = []

    # Drive a pool block by block and check state invariants throughout.
    from .conversion import PeriodicConversionAuction

    pool = DiamondPool(Reserves(1e8, 76336.0), DiamondParams(0.95, 10))
    conv = PeriodicConversionAuction(AuctionModel())
    params = PathParams(0.05, 10, 40, eps0=1e8 / 76336.0)
    prices = gen_path(params, np.random.SeedSequence(11)).eps.tolist()
    worst_price = 0.0
    worst_curve = 0.0
    single = True
    for e in prices[1:]:
        pool.apply_arbitrage(e)
        worst_price = max(worst_price, abs(pool.price() - e) / e)
        pool.vault_rebalance(e)
        single &= not (pool.vault.vx > 0 and pool.vault.vy > 0)
        pool.block_height += 1
        conv.on_block(pool, e)
        k = pool.curve.invariant(*pool.reserves)
        worst_curve = max(worst_curve, abs(k - pool.curve.k) / pool.curve.k)
    ok &= worst_price <= 1e-12 and single and worst_curve <= 1e-12
    details.append(f"price-to-eps worst {worst_price:.2e}, vault single-type "
                   f"{single}, curve residual {worst_curve:.2e}")

    # Martingale: one-step sample mean within 3 SE of eps0.
    n = 100_000
    pp = PathParams(0.05, 10, 1, eps0=100.0)
    s = pp.block_sigma
    steps = np.random.default_rng(99).normal(-0.5 * s * s, s, size=n)
    finals = 100.0 * np.exp(steps)
    se = finals.std(ddof=1) / math.sqrt(n)
    drift = abs(finals.mean() - 100.0)
    ok &= drift <= 3 * se
    details.append(f"martingale drift {drift:.4f} (3SE {3*se:.4f})")

    # Determinism: same (seed, params) give bit-identical paths.
    a = gen_path(pp, np.random.SeedSequence(4)).eps
    b = gen_path(pp, np.random.SeedSequence(4)).eps
    ok &= bool(np.array_equal(a, b))
    details.append("paths deterministic" if np.array_equal(a, b)
                   else "paths NOT deterministic")

    # Settlement identities on random positions.
    ident = True
    for _ in range(1000):
        vault = Vault(vy=rng.uniform(0.1, 100.0))
        pair, pos = cvf_convert(vault, rng.uniform(0.5, 2000.0))
        p_t = pos.strike * rng.uniform(0.5, 1.5)
        s_pair = settle_futures(pos, p_t)
        pnl = pos.notional * (p_t - pos.strike)
        ident &= s_pair.s_x == s_pair.s_y * p_t
        ident &= abs(s_pair.s_x + s_pair.s_y * p_t - pnl) <= 1e-13 * max(abs(pnl), 1e-30)
    ok &= ident
    details.append(f"settlement identities exact {ident}")
    return _result(8, "structural invariants suite", ok, "; ".join(details), t0)


ALL_CRITERIA: list[Callable[[int], CriterionResult]] = [
    criterion_1_rebate_theorem,
    criterion_2_zero_expectancy,
    criterion_3_dominance,
    criterion_4_conversion_cadence_stats,
    criterion_5_quadratic_lvr,
    criterion_6_monotone_sweeps,
    criterion_7_block_engine,
    criterion_8_structural_invariants,
]


def run_all(workers: int = 1, report=print) -> bool:
    """Run every criterion, printing one pass/fail line each."""
    all_passed = True
    for criterion in ALL_CRITERIA:
        res = criterion(workers)
        status = "PASS" if res.passed else "FAIL"
        report(f"[{status}] criterion {res.number}: {res.title} "
               f"({res.runtime:.1f}s) -- {res.detail}")
        all_passed &= res.passed
    return all_passed
