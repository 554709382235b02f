"""Seeded scenario execution: the epoch loop tying chain, network, sizing,
and metrics together.

Epoch phases, in order: re-encode trigger checks, block production with at
most the configured number of enhanced blocks mined into the leading slots,
confirmation sweep and decentralized group encoding, churn with maintenance
joins, then the metrics row.  Checking triggers first lets a group re-mine in
the very epoch its protection horizon expires.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import (
    GENESIS_HASH,
    BlockHeader,
    BlockPool,
    BlockStore,
    ChainConfig,
    block_hash,
    confirmation_check,
    mine_enhanced_block,
    remine_decision,
    update_pool,
    verify_enhanced_block,
)
from .config import ScenarioConfig
from .degree import encoding_distribution
from .failure import FailureTable, SizingInfeasibleError, SizingPolicy, choose_group_size
from .metrics import (
    SYSTEM_NODE,
    EventLog,
    MetricsLedger,
    communication_metrics,
    join_transfer_cdf,
    write_enhanced_history,
    write_join_cdf,
)
from .network import ChurnModel, GroupState, Network, NetworkDiedError

logger = logging.getLogger(__name__)

OUTPUT_NAMES = (
    "metrics.csv",
    "events.csv",
    "join_cdf.csv",
    "enhanced_history.csv",
    "failure_table.csv",
)


@dataclass
class PendingGroup:
    header: object
    heights: tuple
    intermediates: np.ndarray


@dataclass
class RunResult:
    exit_code: int
    reason: str
    epochs_run: int
    history: list
    metrics: MetricsLedger
    events: EventLog
    out_dir: Path


def load_churn_trace(path) -> dict:
    """Trace rows are (epoch, joins, leaves); absent epochs mean no churn."""
    trace: dict[int, tuple] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ("epoch", "joins", "leaves"):
            raise ValueError(f"unexpected churn trace header: {header}")
        for row in reader:
            trace[int(row[0])] = (int(row[2]), int(row[1]))  # (leaves, joins)
    return trace


def _build_initial_chain(store: BlockStore, count: int) -> BlockHeader:
    tip = BlockHeader(0, GENESIS_HASH, GENESIS_HASH, 0)
    for h in range(1, count + 1):
        tip = BlockHeader(h, block_hash(tip), store.merkle_root(h), 0)
    return tip


def run_scenario(cfg: ScenarioConfig, table: FailureTable, out_dir) -> RunResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    chain_cfg = ChainConfig(
        cfg.alpha, cfg.beta, cfg.precode_rate, cfg.reencode_factor
    )
    policy = SizingPolicy(cfg.zeta, cfg.gamma, cfg.alpha, cfg.beta)
    churn = ChurnModel(cfg.lambda_leave, cfg.lambda_join)
    store = BlockStore(cfg.seed, cfg.symbol_bits, cfg.symbols_per_block)
    events = EventLog()
    net = Network(cfg.symbol_bits, cfg.symbols_per_block, events=events)
    for _ in range(cfg.n0):
        net.add_node()
    trace = load_churn_trace(cfg.churn_trace_path) if cfg.churn_trace_path else None

    tip = _build_initial_chain(store, cfg.initial_unencoded)
    pool = BlockPool(range(1, cfg.initial_unencoded + 1))
    confirmed_up_to = cfg.initial_unencoded

    pending: dict[int, PendingGroup] = {}
    enhanced_headers: dict[int, object] = {}
    group_heights: dict[int, tuple] = {}
    reuse_queue: list[int] = []
    next_seq = 1
    history: list[tuple] = []
    metrics = MetricsLedger()
    infeasible_streak = 0
    exit_code, reason = 0, "ok"
    epochs_run = 0

    def sum_k_live() -> int:
        return sum(gs.k for gs in net.groups.values())

    prev_coded = prev_pool_bytes = prev_fallbacks = 0

    for epoch in range(1, cfg.epochs + 1):
        # --- re-encode triggers (start of epoch so re-mining can happen now)
        for seq in sorted(net.groups):
            gs = net.groups[seq]
            if epoch < gs.encoded_epoch + cfg.gamma:
                continue
            if remine_decision(net.alive_count, gs.nodes_at_encoding, chain_cfg):
                for h in group_heights[seq]:
                    pool.add(h)
                net.drop_group(seq)
                del enhanced_headers[seq]
                del group_heights[seq]
                reuse_queue.append(seq)
                events.append(epoch, "reencode", SYSTEM_NODE, seq, 0, 0)

        # --- production, with enhanced blocks in the leading slots
        slots = cfg.beta
        mined_this_epoch = 0
        try:
            k_next = choose_group_size(net.alive_count, table, policy)
            infeasible_streak = 0
        except SizingInfeasibleError:
            k_next = None
            infeasible_streak += 1
            if infeasible_streak > cfg.patience:
                exit_code, reason = 1, "sizing-infeasible"
                epochs_run = epoch - 1
                break
        max_mines = 1 if cfg.one_enhanced_per_epoch else cfg.beta
        while (
            k_next is not None
            and mined_this_epoch < max_mines
            and slots > 0
            and len(pool) >= k_next
        ):
            if reuse_queue:
                seq = reuse_queue.pop(0)
            else:
                seq = next_seq
                next_seq += 1
            miner = int(rng.choice(net.alive_count))
            miner_id = net.alive_ids()[miner]
            header, intermediates = mine_enhanced_block(
                pool, k_next, tip, store, chain_cfg, seq, epoch
            )
            vres = verify_enhanced_block(header, pool, store, chain_cfg)
            if not vres.accepted:  # pragma: no cover - honest-run invariant
                raise RuntimeError(f"honest enhanced block rejected: {vres.reason}")
            verifier = int(rng.choice(net.alive_count))
            verifier_id = net.alive_ids()[verifier]
            events.append(epoch, "mine", miner_id, seq, 0, 0)
            events.append(epoch, "verify", verifier_id, seq, 0, 0)
            update_pool(pool, header.group_indices)
            pending[seq] = PendingGroup(header, header.group_indices, intermediates)
            enhanced_headers[seq] = header
            group_heights[seq] = header.group_indices
            history.append((seq, epoch, k_next))
            tip = header.base
            slots -= 1
            mined_this_epoch += 1
        for _ in range(slots):
            h = tip.height + 1
            tip = BlockHeader(h, block_hash(tip), store.merkle_root(h), epoch)

        # --- confirmation sweep and decentralized encoding
        boundary = tip.height - cfg.alpha
        while confirmed_up_to < boundary:
            confirmed_up_to += 1
            pool.add(confirmed_up_to)
        for seq in sorted(pending):
            pg = pending[seq]
            if not confirmation_check(pg.header, tip.height, cfg.alpha):
                continue
            gs = GroupState(
                seq,
                pg.header.generator,
                encoding_distribution(
                    pg.header.generator.n, cfg.soliton_c, cfg.soliton_delta
                ),
                encoded_epoch=epoch,
                nodes_at_encoding=net.alive_count,
            )
            net.groups[seq] = gs
            net.decentralized_encode(gs, pg.intermediates, rng, epoch)
            del pending[seq]

        # --- churn
        unencoded = tip.height - sum_k_live()
        counts = trace.get(epoch, (0, 0)) if trace is not None else None
        try:
            _left, joined = net.churn_step(churn, rng, epoch, unencoded, counts=counts)
        except NetworkDiedError:
            epochs_run = epoch
            exit_code, reason = 1, "network-death"
            metrics.add_epoch(
                epoch, 0, tip.height, sum_k_live(), len(net.groups),
                net.bytes_coded_total - prev_coded,
                net.bytes_pool_total - prev_pool_bytes,
                0, net.fallbacks_total - prev_fallbacks, len(net.groups_lost),
            )
            break

        # --- metrics row
        metrics.add_epoch(
            epoch,
            net.alive_count,
            tip.height,
            sum_k_live(),
            len(net.groups),
            net.bytes_coded_total - prev_coded,
            net.bytes_pool_total - prev_pool_bytes,
            joined,
            net.fallbacks_total - prev_fallbacks,
            len(net.groups_lost),
        )
        prev_coded = net.bytes_coded_total
        prev_pool_bytes = net.bytes_pool_total
        prev_fallbacks = net.fallbacks_total
        epochs_run = epoch

    metrics.write_csv(out / "metrics.csv")
    events.write_csv(out / "events.csv")
    write_join_cdf(join_transfer_cdf(events), out / "join_cdf.csv")
    write_enhanced_history(history, out / "enhanced_history.csv")
    table.save(out / "failure_table.csv")
    table.save_fits(out / "failure_table_fit.csv")
    if exit_code != 0:
        logger.error("scenario aborted at epoch %d: %s", epochs_run, reason)
    return RunResult(exit_code, reason, epochs_run, history, metrics, events, out)


def summarize_run(result: RunResult, cfg: ScenarioConfig) -> str:
    report = communication_metrics(
        result.events,
        chain_length=max(r[2] for r in result.metrics.rows) if result.metrics.rows else 0,
        block_bytes=cfg.symbols_per_block * ((cfg.symbol_bits + 7) // 8),
    )
    lines = [
        f"epochs run: {result.epochs_run} ({result.reason})",
        f"enhanced blocks mined: {len(result.history)}",
        f"coded-path bytes: {report.coded_bytes_total}",
        f"pool-copy bytes: {report.pool_bytes_total}",
        f"communication reduction coefficient: {report.reduction_coefficient:.6g}",
    ]
    if result.metrics.rows:
        last = result.metrics.rows[-1]
        lines.append(f"final nodes: {last[1]}, chain length: {last[2]}, R_s: {last[5]:.6g}")
    return "\n".join(lines)
