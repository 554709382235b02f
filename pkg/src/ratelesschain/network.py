"""Per-node protocol state and the network maintenance procedures.

Covers decentralized systematic encoding with claim messages, new-node joins
(availability queries, intermediate repair with set expansion, and the
whole-group decode fallback), Poisson churn, and the request-serving rules.

The simulator is a single-threaded event loop with zero propagation delay, so
every node observes the same claim state; the per-group claim registry held
by GroupState IS that shared view.  Claim conflicts still occur when two
nodes act at the same logical instant and are resolved deterministically by
(timestamp, node id).
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .degree import DegreeDistribution
from .lt import CodedBlock, raptor_decode, repair_from_edge
from .metrics import POOL_COPY_GROUP, EventLog
from .precode import GeneratorMatrix, encode_column

logger = logging.getLogger(__name__)

# Decode-overhead escalation used by the group decode fallback.
EPS_SCHEDULE = tuple(round(0.03 + 0.02 * i, 2) for i in range(12))  # 0.03 .. 0.25


class NetworkDiedError(RuntimeError):
    """Every node left; the simulation cannot continue."""


@dataclass(frozen=True)
class ChurnModel:
    lambda_leave: float
    lambda_join: float

    def __post_init__(self):
        if self.lambda_leave < 0 or self.lambda_join < 0:
            raise ValueError("churn rates must be non-negative")


@dataclass(frozen=True)
class ClaimMessage:
    group_seq: int
    index: int
    claimer: int
    timestamp: int


def resolve_claim_conflict(a: ClaimMessage, b: ClaimMessage) -> ClaimMessage:
    """Earlier timestamp wins; ties break to the smaller node id."""
    if (a.group_seq, a.index) != (b.group_seq, b.index):
        raise ValueError("claims target different intermediates")
    return min(a, b, key=lambda c: (c.timestamp, c.claimer))


@dataclass
class RepairSession:
    """State of one missing-intermediate repair attempt."""

    group_seq: int
    missing: set  # the growing set of unavailable intermediate indices
    dead_ends: set = dc_field(default_factory=set)  # not repairable right now
    discovered_edges: dict = dc_field(default_factory=dict)
    availability: dict = dc_field(default_factory=dict)
    transfers: int = 0


class NodeState:
    """One network participant: at most one stored coded block per group."""

    __slots__ = ("id", "stored", "alive")

    def __init__(self, node_id: int):
        self.id = node_id
        self.stored: dict[int, CodedBlock] = {}
        self.alive = True

    def __repr__(self):
        return f"NodeState(id={self.id}, groups={sorted(self.stored)}, alive={self.alive})"


class GroupState:
    """Live coding state of one encoded group (latest enhanced block wins)."""

    def __init__(
        self,
        seq: int,
        generator: GeneratorMatrix,
        omega: DegreeDistribution,
        encoded_epoch: int,
        nodes_at_encoding: int,
    ):
        if omega.support != generator.n:
            raise ValueError("degree distribution support must equal n")
        self.seq = seq
        self.generator = generator
        self.omega = omega
        self.encoded_epoch = encoded_epoch
        self.nodes_at_encoding = nodes_at_encoding
        self.claimed: dict[int, int] = {}  # intermediate index -> holder node id
        self._edges: dict[int, list] = {}  # index -> node ids ever storing it

    @property
    def k(self) -> int:
        return self.generator.k

    @property
    def n(self) -> int:
        return self.generator.n

    def coverage(self):
        """(claimed indices, still-unclaimed indices)."""
        claimed = set(self.claimed)
        return claimed, set(range(self.n)) - claimed

    def add_edges(self, node_id: int, neighbors) -> None:
        for i in neighbors:
            self._edges.setdefault(i, []).append(node_id)

    def edge_candidates(self, index: int) -> list:
        return self._edges.get(index, [])


class Network:
    """All protocol state, owned by the single-threaded event loop."""

    def __init__(self, p: int, s: int, events: EventLog | None = None,
                 debug_verify: bool = False):
        self.p = p
        self.s = s
        self.block_bytes = s * ((p + 7) // 8)
        self.events = events if events is not None else EventLog()
        self.debug_verify = debug_verify
        self.nodes: dict[int, NodeState] = {}
        self._alive: list[int] = []
        self._alive_pos: dict[int, int] = {}
        self.groups: dict[int, GroupState] = {}
        self._oracles: dict[int, np.ndarray] = {}
        self.next_node_id = 0
        self.joins_total = 0
        self.fallbacks_total = 0
        self.groups_lost: set[int] = set()
        self.bytes_coded_total = 0
        self.bytes_pool_total = 0

    # node bookkeeping --------------------------------------------------

    @property
    def alive_count(self) -> int:
        return len(self._alive)

    def alive_ids(self) -> list:
        return list(self._alive)

    def add_node(self) -> NodeState:
        node = NodeState(self.next_node_id)
        self.next_node_id += 1
        self.nodes[node.id] = node
        self._alive_pos[node.id] = len(self._alive)
        self._alive.append(node.id)
        return node

    def remove_node(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if not node.alive:
            return
        node.alive = False
        pos = self._alive_pos.pop(node_id)
        last = self._alive.pop()
        if last != node_id:
            self._alive[pos] = last
            self._alive_pos[last] = pos
        for seq, blk in node.stored.items():
            if blk.degree == 1:
                (idx,) = blk.neighbors
                group = self.groups.get(seq)
                if group is not None and group.claimed.get(idx) == node_id:
                    del group.claimed[idx]

    def drop_group(self, seq: int) -> None:
        """Forget a retired group: nodes discard their coded blocks."""
        self.groups.pop(seq, None)
        self._oracles.pop(seq, None)
        for node in self.nodes.values():
            node.stored.pop(seq, None)

    # request serving ----------------------------------------------------

    def serve_availability(self, holder_id: int, group_seq: int, index: int):
        """Metadata-only: does this holder store intermediate `index` verbatim?

        Dead holders stay silent (None), which requesters treat as missing.
        """
        holder = self.nodes.get(holder_id)
        if holder is None or not holder.alive:
            return None
        blk = holder.stored.get(group_seq)
        if blk is None:
            return False
        return blk.degree == 1 and index in blk.neighbors

    def serve_edge_query(self, holder_id: int, group_seq: int, index: int):
        """Neighbor list, returned only when the holder's block contains index."""
        holder = self.nodes.get(holder_id)
        if holder is None or not holder.alive:
            return None
        blk = holder.stored.get(group_seq)
        if blk is None or index not in blk.neighbors:
            return None
        return blk.neighbors

    def serve_block(self, holder_id: int, group_seq: int):
        """Payload transfer; the caller accounts the bytes."""
        holder = self.nodes.get(holder_id)
        if holder is None or not holder.alive:
            return None
        return holder.stored.get(group_seq)

    # encoding and joins --------------------------------------------------

    def _store_block(self, node: NodeState, group: GroupState, block: CodedBlock) -> None:
        if self.debug_verify:
            oracle = self._oracles.get(group.seq)
            if oracle is not None:
                acc = np.array(block.payload, copy=True)
                for i in block.neighbors:
                    acc ^= oracle[i]
                if acc.any():
                    raise AssertionError(
                        f"payload of node {node.id} for group {group.seq} does not "
                        f"match the XOR of its neighbors"
                    )
        node.stored[group.seq] = block
        group.add_edges(node.id, block.neighbors)
        if block.degree == 1:
            (idx,) = block.neighbors
            group.claimed[idx] = node.id

    def decentralized_encode(
        self,
        group: GroupState,
        intermediates: np.ndarray,
        rng: np.random.Generator,
        epoch: int,
    ) -> None:
        """Every alive node picks its coded block for a freshly confirmed group.

        While unclaimed intermediates remain, nodes claim them (degree-1
        blocks) under the jittered-broadcast race; once coverage is complete
        the rest draw parity blocks from the encoding distribution.
        """
        if self.debug_verify:
            self._oracles[group.seq] = intermediates
        ids = sorted(self._alive)
        n = group.n
        if len(ids) < n:
            logger.warning(
                "group %d: only %d alive nodes for %d intermediates; "
                "systematic coverage will be short by %d",
                group.seq, len(ids), n, n - len(ids),
            )
        jitter = rng.integers(0, 4 * max(len(ids), 1), size=len(ids))
        heap = list(zip(jitter.tolist(), ids))
        heapq.heapify(heap)
        parity_nodes = []
        next_target = 0  # fresh group: claims always take the lowest open index
        while heap:
            ts = heap[0][0]
            bucket = []
            while heap and heap[0][0] == ts:
                bucket.append(heapq.heappop(heap)[1])
            if next_target >= n:
                parity_nodes.extend(bucket)
                continue
            claims = [ClaimMessage(group.seq, next_target, nid, ts) for nid in bucket]
            winner = claims[0]
            for other in claims[1:]:
                winner = resolve_claim_conflict(winner, other)
            node = self.nodes[winner.claimer]
            self._store_block(
                node,
                group,
                CodedBlock(
                    intermediates[next_target].copy(),
                    frozenset({next_target}),
                    group.seq,
                ),
            )
            self.events.append(epoch, "claim", winner.claimer, group.seq, 0, 0)
            next_target += 1
            for claim in claims:
                if claim.claimer != winner.claimer:
                    # losers restart at the next instant with a fresh view
                    heapq.heappush(heap, (ts + 1, claim.claimer))
        for nid in parity_nodes:
            d = group.omega.sample(rng)
            nbrs = rng.choice(n, size=d, replace=False)
            payload = np.bitwise_xor.reduce(intermediates[np.sort(nbrs)], axis=0)
            self._store_block(
                self.nodes[nid],
                group,
                CodedBlock(payload, frozenset(int(i) for i in nbrs), group.seq),
            )

    def join_node(
        self,
        rng: np.random.Generator,
        epoch: int,
        unencoded_blocks: int,
        eps_schedule=EPS_SCHEDULE,
    ) -> NodeState:
        """Full join: copy the un-encoded chain, then encode one coded block
        per encoded group, repairing or falling back to a group decode when
        intermediates are missing."""
        node = self.add_node()
        pool_bytes = unencoded_blocks * self.block_bytes
        self.bytes_pool_total += pool_bytes
        self.events.append(
            epoch, "join", node.id, POOL_COPY_GROUP, unencoded_blocks, pool_bytes
        )
        for seq in sorted(self.groups):
            self._join_group(node, self.groups[seq], rng, epoch, eps_schedule)
        self.joins_total += 1
        return node

    def _fetch_intermediate(self, group: GroupState, index: int) -> np.ndarray:
        holder_id = group.claimed[index]
        blk = self.serve_block(holder_id, group.seq)
        if blk is None or blk.degree != 1:  # pragma: no cover - registry invariant
            raise RuntimeError(f"claim registry out of sync for index {index}")
        return blk.payload

    def _join_group(self, node, group, rng, epoch, eps_schedule) -> None:
        d = group.omega.sample(rng)
        nbrs = frozenset(int(i) for i in rng.choice(group.n, size=d, replace=False))
        missing = {i for i in nbrs if i not in group.claimed}
        if not missing:
            payload = None
            for i in sorted(nbrs):
                vec = self._fetch_intermediate(group, i)
                payload = vec.copy() if payload is None else payload ^ vec
            self._store_block(node, group, CodedBlock(payload, nbrs, group.seq))
            transfers = len(nbrs)
        else:
            session = RepairSession(group.seq, set(missing))
            session.availability = {i: i in group.claimed for i in nbrs}
            repaired = self._repair_intermediate(node, group, session, rng)
            if repaired is None:
                self.fallbacks_total += 1
                self.events.append(epoch, "fallback", node.id, group.seq, 0, 0)
                ok = self._group_decode_fallback(node, group, session, rng, eps_schedule)
                if not ok:
                    if group.seq not in self.groups_lost:
                        logger.warning("group %d lost: fallback decode failed", group.seq)
                    self.groups_lost.add(group.seq)
            else:
                self.events.append(epoch, "repair", node.id, group.seq, 0, 0)
            transfers = session.transfers
        coded_bytes = transfers * self.block_bytes
        self.bytes_coded_total += coded_bytes
        self.events.append(epoch, "join", node.id, group.seq, transfers, coded_bytes)

    def _repair_intermediate(self, node, group, session, rng):
        """Try to repair one missing intermediate, expanding the missing set
        as unreachable neighbors are discovered.  Returns the repaired index,
        or None when every candidate is a dead end (fallback needed)."""
        while True:
            candidates = sorted(session.missing - session.dead_ends)
            if not candidates:
                return None
            i = int(rng.choice(np.array(candidates)))
            responders = [
                x
                for x in group.edge_candidates(i)
                if self.serve_edge_query(x, group.seq, i) is not None
            ]
            session.discovered_edges[i] = responders
            expanded = set()
            repaired = False
            for x in responders:
                edge_blk = self.nodes[x].stored[group.seq]
                others = edge_blk.neighbors - {i}
                absent = {o for o in others if o not in group.claimed}
                for o in others:
                    session.availability[o] = o not in absent
                if not absent:
                    payload_map = {o: self._fetch_intermediate(group, o) for o in others}
                    session.transfers += 1 + len(others)
                    payload = repair_from_edge(i, edge_blk, payload_map)
                    self._store_block(
                        node, group, CodedBlock(payload, frozenset({i}), group.seq)
                    )
                    repaired = True
                    break
                expanded |= absent
            if repaired:
                return i
            session.missing |= expanded
            session.dead_ends.add(i)

    def _group_decode_fallback(self, node, group, session, rng, eps_schedule) -> bool:
        """Collect (1+eps)k coded blocks, decode the whole group, and store
        one formerly-missing intermediate.  Escalates eps until the schedule
        or the set of holders is exhausted."""
        holders = sorted(
            nid
            for nid in self._alive
            if nid != node.id and group.seq in self.nodes[nid].stored
        )
        if len(holders) < group.k:
            return False
        for eps in eps_schedule:
            want = math.ceil((1 + eps) * group.k)
            take = min(want, len(holders))
            picked = rng.choice(len(holders), size=take, replace=False)
            blocks = [self.nodes[holders[j]].stored[group.seq] for j in sorted(picked)]
            session.transfers += take
            result = raptor_decode(blocks, group.generator)
            if result.ok:
                target = int(rng.choice(np.array(sorted(session.missing))))
                payload = encode_column(group.generator, result.originals, target)
                self._store_block(
                    node, group, CodedBlock(payload, frozenset({target}), group.seq)
                )
                return True
            if take == len(holders):
                break
        return False

    # churn ---------------------------------------------------------------

    def churn_step(
        self,
        churn: ChurnModel,
        rng: np.random.Generator,
        epoch: int,
        unencoded_blocks: int,
        counts=None,
        eps_schedule=EPS_SCHEDULE,
    ):
        """One epoch of churn: leaves first, then joins.

        `counts` overrides the Poisson draws with explicit (leaves, joins),
        which is how trace-driven scenarios feed real churn data in.
        """
        if counts is None:
            leaves = int(rng.poisson(churn.lambda_leave))
            joins = int(rng.poisson(churn.lambda_join))
        else:
            leaves, joins = counts
        if leaves >= self.alive_count:
            for nid in list(self._alive):
                self.events.append(epoch, "leave", nid, -1, 0, 0)
                self.remove_node(nid)
            raise NetworkDiedError(f"all nodes left at epoch {epoch}")
        if leaves > 0:
            positions = rng.choice(self.alive_count, size=leaves, replace=False)
            ids = [self._alive[j] for j in sorted(positions.tolist())]
            for nid in ids:
                self.events.append(epoch, "leave", nid, -1, 0, 0)
                self.remove_node(nid)
        for _ in range(joins):
            self.join_node(rng, epoch, unencoded_blocks, eps_schedule)
        return leaves, joins
