"""Command-line entry point.

Subcommands:
  simulate       run a scenario and emit the CSV artifacts
  build-table    run the Monte Carlo failure-table build
  inspect-table  print table coverage, fits, and the chosen group sizes
  metrics        recompute communication figures from an emitted event log
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

from .config import ConfigError, ScenarioConfig, load_config
from .failure import (
    FailureTable,
    SizingInfeasibleError,
    SizingPolicy,
    build_failure_table,
)
from .metrics import EventLog, communication_metrics, read_metrics_csv, write_join_cdf
from .network import ChurnModel
from .simulation import run_scenario, summarize_run


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="scenario config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument(
        "--budget", type=int, default=None, help="trials per failure-table cell"
    )
    parser.add_argument(
        "--threads", type=int, default=1, help="worker processes for table builds"
    )


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _build_table(cfg: ScenarioConfig, budget: int | None, threads: int) -> FailureTable:
    if not cfg.table_n_grid or not cfg.table_k_ratios:
        raise ConfigError(
            "table_n_grid and table_k_ratios must be set to build a failure table"
        )
    policy = SizingPolicy(cfg.zeta, cfg.gamma, cfg.alpha, cfg.beta)
    return build_failure_table(
        cfg.table_n_grid,
        cfg.table_k_ratios,
        ChurnModel(cfg.lambda_leave, cfg.lambda_join),
        policy.horizon,
        budget if budget is not None else cfg.table_trials,
        cfg.seed,
        precode_rate=cfg.precode_rate,
        c=cfg.soliton_c,
        delta=cfg.soliton_delta,
        threads=threads,
    )


def _ensure_table(cfg: ScenarioConfig, args) -> FailureTable:
    if cfg.failure_table_path and Path(cfg.failure_table_path).is_file():
        return FailureTable.load(cfg.failure_table_path)
    return _build_table(cfg, args.budget, args.threads)


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    table = _ensure_table(cfg, args)
    result = run_scenario(cfg, table, args.out)
    print(summarize_run(result, cfg))
    return result.exit_code


def _cmd_build_table(args) -> int:
    cfg = _load(args)
    budget = args.budget if args.budget is not None else cfg.table_trials
    if budget <= 0:
        print("error: budget must be positive", file=sys.stderr)
        return 2
    table = _build_table(cfg, budget, args.threads)
    if not table.cells:
        print("error: no table cells were completed", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.save(out / "failure_table.csv")
    table.save_fits(out / "failure_table_fit.csv")
    print(f"table cells: {len(table.cells)} over N in {table.covered_ns()}")
    for n_nodes in table.covered_ns():
        fit = table.fits.get(n_nodes)
        if fit is None:
            print(f"  N={n_nodes}: no usable extrapolation fit")
        else:
            print(
                f"  N={n_nodes}: log10 f ~ {fit.slope:.6g}*k + {fit.intercept:.6g} "
                f"({fit.points} points)"
            )
    return 0


def _cmd_inspect_table(args) -> int:
    cfg = _load(args)
    path = cfg.failure_table_path or str(Path(args.out) / "failure_table.csv")
    if not Path(path).is_file():
        print(f"error: failure table not found at {path}", file=sys.stderr)
        return 2
    table = FailureTable.load(path)
    policy = SizingPolicy(cfg.zeta, cfg.gamma, cfg.alpha, cfg.beta)
    print(f"table: {path}")
    for n_nodes in table.covered_ns():
        cells = table.cells_for(n_nodes)
        print(f"N={n_nodes}: {len(cells)} cells")
        for c in cells:
            print(
                f"  k={c.k} trials={c.trials} failures={c.failures} "
                f"f={c.estimate:.6g} (cleaned {c.cleaned:.6g})"
            )
        try:
            k = table.k_at(cfg.zeta, n_nodes)
            print(f"  chosen k at zeta={cfg.zeta:g}, horizon={policy.horizon:g}: {k}")
        except SizingInfeasibleError as exc:
            print(f"  sizing infeasible: {exc}")
    return 0


def _cmd_metrics(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    events_path = out / "events.csv"
    metrics_path = out / "metrics.csv"
    if not events_path.is_file() or not metrics_path.is_file():
        print(f"error: need {events_path} and {metrics_path}", file=sys.stderr)
        return 2
    events = EventLog.read_csv(events_path)
    rows = read_metrics_csv(metrics_path)
    chain_length = rows[-1][2] if rows else 0
    block_bytes = cfg.symbols_per_block * ((cfg.symbol_bits + 7) // 8)
    report = communication_metrics(events, chain_length, block_bytes)
    write_join_cdf(report.cdf, out / "join_cdf.csv")
    print(f"chain length: {chain_length}")
    print(f"coded-path bytes: {report.coded_bytes_total}")
    print(f"pool-copy bytes: {report.pool_bytes_total}")
    print(f"communication reduction coefficient: {report.reduction_coefficient:.6g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ratelesschain",
        description="Rateless coded blockchain simulator and sizing tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", _cmd_simulate),
        ("build-table", _cmd_build_table),
        ("inspect-table", _cmd_inspect_table),
        ("metrics", _cmd_metrics),
    ):
        sp = sub.add_parser(name)
        _add_common(sp)
        sp.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SizingInfeasibleError as exc:
        print(f"sizing error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
