"""Event log and run metrics: storage and communication accounting.

Event rows are one line per protocol event.  A node join produces one row
per encoded group carrying the TOTAL coded blocks fetched for that group
(direct fetches plus any repair or fallback collection), plus one row with
group -1 for the un-encoded chain copy.  repair/fallback rows mark the
occurrence only; their transfers are already rolled into the join row, so
communication sums never double count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

EVENT_KINDS = (
    "claim",
    "join",
    "repair",
    "fallback",
    "leave",
    "mine",
    "verify",
    "reencode",
)

EVENT_HEADER = ("epoch", "kind", "node", "group", "blocks", "bytes")
METRICS_HEADER = (
    "epoch",
    "nodes",
    "W",
    "sum_k",
    "groups",
    "R_s",
    "comm_coded_bytes",
    "comm_pool_bytes",
    "joins",
    "fallbacks",
    "groups_lost",
)

POOL_COPY_GROUP = -1  # group column sentinel for a join's un-encoded chain copy
SYSTEM_NODE = -1  # node column sentinel for scheduler-level events


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


class EventLog:
    """Append-only protocol event rows."""

    def __init__(self):
        self.rows: list[tuple] = []

    def append(
        self, epoch: int, kind: str, node: int, group: int, blocks: int, nbytes: int
    ) -> None:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        self.rows.append((epoch, kind, node, group, blocks, nbytes))

    def count(self, kind: str) -> int:
        return sum(1 for r in self.rows if r[1] == kind)

    def of_kind(self, kind: str) -> list:
        return [r for r in self.rows if r[1] == kind]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(EVENT_HEADER)
            for r in self.rows:
                w.writerow([_fmt(x) for x in r])

    @staticmethod
    def read_csv(path) -> "EventLog":
        log = EventLog()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != EVENT_HEADER:
                raise ValueError(f"unexpected event log header: {header}")
            for row in reader:
                epoch, kind, node, group, blocks, nbytes = row
                log.rows.append(
                    (int(epoch), kind, int(node), int(group), int(blocks), int(nbytes))
                )
        return log


def storage_reduction(
    total_blocks: int, encoded_block_total: int, group_count: int
) -> float:
    """Per-node storage relative to a fully replicated chain.

    A node keeps every un-encoded block plus one coded block per group:
    (W - sum_k + |groups|) / W.
    """
    if total_blocks <= 0:
        raise ValueError("chain length must be positive")
    if encoded_block_total > total_blocks:
        raise ValueError("encoded blocks cannot exceed the chain length")
    return (total_blocks - encoded_block_total + group_count) / total_blocks


class MetricsLedger:
    """Per-epoch scalar metrics, written as CSV."""

    def __init__(self):
        self.rows: list[tuple] = []

    def add_epoch(
        self,
        epoch: int,
        nodes: int,
        chain_length: int,
        encoded_block_total: int,
        group_count: int,
        comm_coded_bytes: int,
        comm_pool_bytes: int,
        joins: int,
        fallbacks: int,
        groups_lost: int,
    ) -> None:
        r_s = storage_reduction(chain_length, encoded_block_total, group_count)
        self.rows.append(
            (
                epoch,
                nodes,
                chain_length,
                encoded_block_total,
                group_count,
                r_s,
                comm_coded_bytes,
                comm_pool_bytes,
                joins,
                fallbacks,
                groups_lost,
            )
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_HEADER)
            for r in self.rows:
                w.writerow([_fmt(x) for x in r])


def join_group_transfers(events: EventLog) -> list:
    """Coded blocks fetched per (joining node, group), from join rows."""
    return [r[4] for r in events.rows if r[1] == "join" and r[3] != POOL_COPY_GROUP]


def join_transfer_cdf(events: EventLog) -> list:
    """Cumulative distribution of per-group join transfers as (blocks, cum_p)."""
    counts = sorted(join_group_transfers(events))
    if not counts:
        return []
    total = len(counts)
    out = []
    seen = 0
    last = None
    for c in counts:
        if last is not None and c != last:
            out.append((last, seen / total))
        seen += 1
        last = c
    out.append((last, seen / total))
    return out


def cdf_at(cdf: list, blocks: int) -> float:
    """P(transfers <= blocks) under a join_transfer_cdf result."""
    best = 0.0
    for b, p in cdf:
        if b <= blocks:
            best = p
        else:
            break
    return best


@dataclass(frozen=True)
class CommReport:
    coded_bytes_total: int
    pool_bytes_total: int
    per_epoch: dict
    reduction_coefficient: float
    cdf: list


def communication_metrics(
    events: EventLog, chain_length: int, block_bytes: int
) -> CommReport:
    """Aggregate join traffic and the coded-path reduction coefficient."""
    coded = 0
    pool = 0
    per_epoch: dict[int, list] = {}
    for epoch, kind, _node, group, _blocks, nbytes in events.rows:
        if kind != "join":
            continue
        slot = per_epoch.setdefault(epoch, [0, 0])
        if group == POOL_COPY_GROUP:
            pool += nbytes
            slot[1] += nbytes
        else:
            coded += nbytes
            slot[0] += nbytes
    denom = chain_length * block_bytes
    reduction = coded / denom if denom > 0 else 0.0
    return CommReport(
        coded_bytes_total=coded,
        pool_bytes_total=pool,
        per_epoch={e: tuple(v) for e, v in sorted(per_epoch.items())},
        reduction_coefficient=reduction,
        cdf=join_transfer_cdf(events),
    )


def write_join_cdf(cdf: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("blocks", "cum_probability"))
        for blocks, p in cdf:
            w.writerow((blocks, _fmt(p)))


def write_enhanced_history(rows: list, path) -> None:
    """History rows are (group_seq, mined_epoch, k)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seq", "epoch", "k"))
        for r in rows:
            w.writerow(r)


def read_metrics_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header: {header}")
        rows = []
        for row in reader:
            rows.append(
                (
                    int(row[0]),
                    int(row[1]),
                    int(row[2]),
                    int(row[3]),
                    int(row[4]),
                    float(row[5]),
                    int(row[6]),
                    int(row[7]),
                    int(row[8]),
                    int(row[9]),
                    int(row[10]),
                )
            )
        return rows
