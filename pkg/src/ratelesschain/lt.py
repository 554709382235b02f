"""Rateless layer: LT encoding of intermediate blocks, peeling decoder,
single-block repair, and the combined two-stage decode.

Intermediate indices are 0-based throughout (0..n-1).  A coded block is the
XOR of the intermediate blocks named by its neighbor set; a degree-1 coded
block is a verbatim copy of one intermediate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field as dc_field
from typing import Collection, Iterable, Mapping

import numpy as np

from .degree import DegreeDistribution
from .precode import GeneratorMatrix, InsufficientSymbolsError, precode_decode


class MissingIntermediateError(KeyError):
    """An LT draw referenced intermediates absent from the supplied map."""

    def __init__(self, missing: Collection[int]):
        self.missing = frozenset(missing)
        super().__init__(f"missing intermediate blocks: {sorted(self.missing)}")


class MissingNeighborsError(KeyError):
    """A repair lacked some of the edge block's other neighbors."""

    def __init__(self, missing: Collection[int]):
        self.missing = frozenset(missing)
        super().__init__(f"missing neighbor blocks: {sorted(self.missing)}")


@dataclass(frozen=True)
class CodedBlock:
    """XOR of the intermediate blocks in `neighbors`, tagged with its group."""

    payload: np.ndarray
    neighbors: frozenset
    group_seq: int = -1

    def __post_init__(self):
        if not self.neighbors:
            raise ValueError("a coded block needs at least one neighbor")
        object.__setattr__(self, "neighbors", frozenset(int(i) for i in self.neighbors))

    @property
    def degree(self) -> int:
        return len(self.neighbors)


def draw_neighbors(omega: DegreeDistribution, rng: np.random.Generator) -> frozenset:
    """Draw d ~ omega, then d distinct indices uniformly from 0..support-1."""
    d = omega.sample(rng)
    idx = rng.choice(omega.support, size=d, replace=False)
    return frozenset(int(i) for i in idx)


def encode_from_neighbors(
    intermediates: Mapping[int, np.ndarray],
    neighbors: Collection[int],
    group_seq: int = -1,
) -> CodedBlock:
    """XOR the named intermediates into a coded block."""
    nset = frozenset(int(i) for i in neighbors)
    missing = [i for i in nset if i not in intermediates]
    if missing:
        raise MissingIntermediateError(missing)
    it = iter(sorted(nset))
    first = next(it)
    payload = np.array(intermediates[first], copy=True)
    for i in it:
        payload ^= intermediates[i]
    return CodedBlock(payload, nset, group_seq)


def lt_encode(
    intermediates: Mapping[int, np.ndarray],
    omega: DegreeDistribution,
    rng: np.random.Generator,
    group_seq: int = -1,
) -> CodedBlock:
    """Draw a fresh coded block from the encoding distribution."""
    return encode_from_neighbors(intermediates, draw_neighbors(omega, rng), group_seq)


@dataclass
class PeelResult:
    decoded: dict
    undecoded: frozenset

    @property
    def count(self) -> int:
        return len(self.decoded)


def peel_decode(
    coded: Iterable[CodedBlock], n: int, stop_after: int | None = None
) -> PeelResult:
    """Iteratively resolve degree-one blocks and subtract them everywhere.

    Returns the decoded index->payload map plus the still-missing index set.
    Without `stop_after` the decoded set is maximal for the input; with it,
    peeling stops early once that many intermediates are known.
    """
    payloads = []
    residual = []
    adj: dict[int, list[int]] = {}
    for blk in coded:
        sid = len(payloads)
        nset = set(blk.neighbors)
        if any(i < 0 or i >= n for i in nset):
            raise ValueError("coded block neighbor index out of range")
        payloads.append(np.array(blk.payload, copy=True))
        residual.append(nset)
        for i in nset:
            adj.setdefault(i, []).append(sid)

    decoded: dict[int, np.ndarray] = {}
    ripple = deque(sid for sid, nset in enumerate(residual) if len(nset) == 1)
    while ripple:
        if stop_after is not None and len(decoded) >= stop_after:
            break
        sid = ripple.popleft()
        nset = residual[sid]
        if len(nset) != 1:
            continue
        (i,) = nset
        if i in decoded:
            continue
        decoded[i] = payloads[sid]
        for other in adj.get(i, ()):
            oset = residual[other]
            if i in oset:
                oset.discard(i)
                if other != sid:
                    payloads[other] ^= decoded[i]
                if len(oset) == 1:
                    ripple.append(other)
        residual[sid] = set()
    return PeelResult(decoded, frozenset(set(range(n)) - decoded.keys()))


def peel_coverage(
    neighbor_sets: Iterable[Collection[int]], n: int, stop_after: int | None = None
) -> set:
    """Index-only peeling: which intermediates are recoverable, no payloads.

    Decodability is purely structural for an erasure code, so this twin of
    peel_decode drives the Monte Carlo failure estimates cheaply.
    """
    residual = []
    adj: dict[int, list[int]] = {}
    for nbrs in neighbor_sets:
        sid = len(residual)
        nset = set(nbrs)
        residual.append(nset)
        for i in nset:
            adj.setdefault(i, []).append(sid)

    decoded: set[int] = set()
    ripple = deque(sid for sid, nset in enumerate(residual) if len(nset) == 1)
    while ripple:
        if stop_after is not None and len(decoded) >= stop_after:
            break
        sid = ripple.popleft()
        nset = residual[sid]
        if len(nset) != 1:
            continue
        (i,) = nset
        if i in decoded:
            continue
        decoded.add(i)
        for other in adj.get(i, ()):
            oset = residual[other]
            if i in oset:
                oset.discard(i)
                if len(oset) == 1:
                    ripple.append(other)
        residual[sid] = set()
    return decoded


def repair_from_edge(
    target: int, edge: CodedBlock, others: Mapping[int, np.ndarray]
) -> np.ndarray:
    """Recover one intermediate from an edge block and its other neighbors."""
    if target not in edge.neighbors:
        raise ValueError(f"index {target} is not a neighbor of the edge block")
    rest = edge.neighbors - {target}
    missing = [i for i in rest if i not in others]
    if missing:
        raise MissingNeighborsError(missing)
    payload = np.array(edge.payload, copy=True)
    for i in sorted(rest):
        payload ^= others[i]
    return payload


@dataclass
class RaptorResult:
    ok: bool
    originals: np.ndarray | None
    intermediates_recovered: int


def raptor_decode(coded: Iterable[CodedBlock], g: GeneratorMatrix) -> RaptorResult:
    """Peel the LT layer, then finish with the pre-code erasure decoder.

    Succeeds whenever peeling recovers at least k distinct intermediates;
    failure is a normal return carrying the recovered count.
    """
    res = peel_decode(coded, g.n, stop_after=g.k)
    if len(res.decoded) < g.k:
        return RaptorResult(False, None, len(res.decoded))
    try:
        originals = precode_decode(res.decoded, g)
    except InsufficientSymbolsError:  # pragma: no cover - guarded above
        return RaptorResult(False, None, len(res.decoded))
    return RaptorResult(True, originals, len(res.decoded))
