"""diamondsim: protocol engine and Monte Carlo simulator for Diamond pools.

Diamond is an AMM design that makes per-block arbitrageurs rebate a
fraction beta of the loss-versus-rebalancing (LVR) they extract from the
pool.  The package implements the pool state machine, its corresponding
constant-function pool mathematics, both vault-conversion protocols, the
block-producer escrow layer, and a reproducible simulation harness with
CFMM and HODL benchmarks.
"""

from .blockengine import (BlockEngine, ExecutionReport, InvariantViolation,
                          Order, RebateController, UnlockError, UnlockSession,
                          tick_rebate)
from .conversion import (AuctionModel, AuctionQuote, ConversionVersusFutures,
                         FuturesPosition, OracleModel,
                         PeriodicConversionAuction, SettlementPair,
                         cvf_convert, futures_collateral, futures_pnl,
                         mark_open_futures, pca_convert, settle_futures,
                         settle_price)
from .curves import (ArbOutcome, ConvergenceError, DomainError, PoolCurve,
                     ProductCurve, Reserves, VirtualReserveCurve, arb_target,
                     lvr, pool_value, price, swap_exact_in)
from .diamond import (BlockResult, DiamondParams, DiamondPool,
                      LiquidationError, Vault)
from .harness import (PathResult, ScenarioConfig, ScenarioResult,
                      ScenarioSummary, SweepResult, SweepSpec, emit_csv,
                      emit_sweep_csv, make_conversion, run_path, run_scenario,
                      run_sweep)
from .market import (BenchmarkState, CfmmBenchmark, PathParams, PricePath,
                     RetailFlow, apply_retail_flow, arb_agent, gen_path,
                     hodl_value, path_rng_for)

__version__ = "0.1.0"
