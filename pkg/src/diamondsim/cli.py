"""Command line entry point: run one scenario, sweep a variable, or verify.

Exit code is 0 on success and nonzero when any path was liquidated or a
verification criterion failed.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import acceptance
from .harness import (ScenarioConfig, SweepSpec, emit_csv, emit_sweep_csv,
                      run_scenario, run_sweep)


def _base_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.from_file(args.config) if args.config else ScenarioConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.mode is not None:
        overrides["conversion_mode"] = args.mode
    if args.settlement is not None:
        overrides["settlement_mode"] = ("futures-auction" if args.settlement == "auction"
                                        else "batch-oracle")
    return replace(cfg, **overrides) if overrides else cfg


def _add_common(parser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="key=value scenario config file")
    parser.add_argument("--out", metavar="CSV", help="output CSV path")
    parser.add_argument("--seed", type=int, metavar="U64", help="master seed")
    parser.add_argument("--workers", type=int, default=1, metavar="N",
                        help="number of worker processes")
    parser.add_argument("--mode", choices=("pca", "cvf"),
                        help="conversion protocol")
    parser.add_argument("--settlement", choices=("auction", "oracle"),
                        help="futures settlement mechanism (cvf mode)")


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    result = run_scenario(cfg, workers=args.workers)
    s = result.summary
    print(f"paths {s.n_paths} (liquidated {s.n_liquidated})")
    print(f"ratio diamond/cfmm: mean {s.mean_ratio_diamond_cfmm:.6f} "
          f"std {s.std_ratio_diamond_cfmm:.6f}")
    print(f"ratio hodl/cfmm:    mean {s.mean_ratio_hodl_cfmm:.6f} "
          f"std {s.std_ratio_hodl_cfmm:.6f}")
    print(f"mean cumulative cfmm lvr: {s.mean_cumulative_cfmm_lvr:.6g}")
    print(f"mean cumulative rebate:   {s.mean_cumulative_rebate:.6g}")
    if args.out:
        emit_csv(result.results, args.out)
        print(f"wrote {args.out}")
    return 1 if result.liquidated else 0


def _cmd_sweep(args) -> int:
    cfg = _base_config(args)
    values = [v for v in args.values.split(",") if v]
    spec = SweepSpec(args.variable, tuple(float(v) for v in values))
    result = run_sweep(spec, cfg, workers=args.workers)
    liq = 0
    for value, res in result.rows:
        s = res.summary
        liq += s.n_liquidated
        print(f"{args.variable}={value}: mean ratio "
              f"{s.mean_ratio_diamond_cfmm:.6f} std {s.std_ratio_diamond_cfmm:.6f}"
              f" (liquidated {s.n_liquidated})")
    if args.out:
        emit_sweep_csv(result, args.out)
        print(f"wrote {args.out}")
    return 1 if liq else 0


def _cmd_verify(args) -> int:
    ok = acceptance.run_all(workers=args.workers)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diamondsim",
        description="Diamond pool protocol engine and Monte Carlo simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one variable")
    _add_common(p_sweep)
    p_sweep.add_argument("--variable", required=True,
                         choices=("beta", "daily_move", "tau", "fee", "days"))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the acceptance criteria")
    _add_common(p_verify)
    p_verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
