"""Chain data model: block headers, enhanced headers carrying coding
parameters, confirmation depth, block pools, and the mining/verification
rules for enhanced blocks.

Proof-of-work is abstracted away: the simulator's scheduler picks miners, so
headers carry no nonce and "mining" here is the coding-parameter assembly.
Block data is opaque; the simulator synthesises deterministic payloads.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .gf import field
from .precode import (
    GeneratorMatrix,
    build_systematic_generator,
    precode_encode,
    serialize_generator,
)

HASH_LEN = 32
GENESIS_HASH = bytes(HASH_LEN)


class NotReadyError(RuntimeError):
    """The block pool is smaller than the next group size."""


class PoolConsistencyError(ValueError):
    """A group update referenced heights outside the pool."""


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int


def header_bytes(h: BlockHeader) -> bytes:
    return (
        struct.pack("<Q", h.height)
        + h.prev_hash
        + h.merkle_root
        + struct.pack("<Q", h.timestamp)
    )


def block_hash(h: BlockHeader) -> bytes:
    return hashlib.sha256(header_bytes(h)).digest()


@dataclass(frozen=True)
class EnhancedBlockHeader:
    """Ordinary header plus the consensus-carried coding parameters."""

    base: BlockHeader
    group_seq: int
    group_indices: tuple  # sorted block heights forming the group
    generator: GeneratorMatrix
    nonsys_hashes: tuple  # digests of the n-k non-systematic intermediates

    @property
    def k(self) -> int:
        return len(self.group_indices)

    @property
    def n(self) -> int:
        return self.generator.n


def enhanced_header_bytes(h: EnhancedBlockHeader) -> bytes:
    parts = [
        header_bytes(h.base),
        struct.pack("<I", h.group_seq),
        struct.pack(f"<{len(h.group_indices)}I", *h.group_indices),
        serialize_generator(h.generator),
    ]
    parts.extend(h.nonsys_hashes)
    return b"".join(parts)


def enhanced_block_hash(h: EnhancedBlockHeader) -> bytes:
    return hashlib.sha256(enhanced_header_bytes(h)).digest()


@dataclass(frozen=True)
class ChainConfig:
    alpha: int  # confirmation depth
    beta: int  # blocks per epoch
    precode_rate: float
    reencode_factor: float

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("confirmation depth must be >= 1")
        if self.beta < 1:
            raise ValueError("blocks per epoch must be >= 1")
        if not 0 < self.precode_rate <= 1:
            raise ValueError("pre-code rate must lie in (0, 1]")
        if not 0 < self.reencode_factor <= 1:
            raise ValueError("re-encode factor must lie in (0, 1]")


def group_length(k: int, precode_rate: float) -> int:
    """Intermediate count n for a group of k blocks."""
    return int(round(k / precode_rate))


class BlockPool:
    """Confirmed-but-unencoded block heights."""

    def __init__(self, heights=()):
        self._heights = set(int(h) for h in heights)

    def __len__(self) -> int:
        return len(self._heights)

    def __contains__(self, height: int) -> bool:
        return height in self._heights

    def add(self, height: int) -> None:
        self._heights.add(int(height))

    def heights(self) -> tuple:
        return tuple(sorted(self._heights))

    def oldest(self, count: int) -> tuple:
        if count > len(self._heights):
            raise NotReadyError(
                f"pool holds {len(self._heights)} heights, need {count}"
            )
        return tuple(sorted(self._heights)[:count])

    def contains_all(self, heights) -> bool:
        return self._heights.issuperset(heights)

    def remove_group(self, heights) -> None:
        group = set(heights)
        if not self._heights.issuperset(group):
            raise PoolConsistencyError(
                f"pool is missing heights {sorted(group - self._heights)}"
            )
        self._heights -= group


def update_pool(pool: BlockPool, group_heights) -> BlockPool:
    """Drop a freshly grouped set of heights from the pool."""
    pool.remove_group(group_heights)
    return pool


class BlockStore:
    """Deterministic synthetic block payloads keyed by height.

    Payloads are s field symbols drawn from a per-height seeded stream, so
    every run with the same scenario seed sees identical chain data.
    """

    def __init__(self, seed: int, p: int, s: int):
        self.gf = field(p)
        self.s = s
        self._seed = seed
        self._payloads: dict[int, np.ndarray] = {}
        self._roots: dict[int, bytes] = {}

    def payload(self, height: int) -> np.ndarray:
        arr = self._payloads.get(height)
        if arr is None:
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=self._seed, spawn_key=(0xB10C, height))
            )
            arr = rng.integers(0, self.gf.q, size=self.s).astype(self.gf.dtype)
            arr.setflags(write=False)
            self._payloads[height] = arr
        return arr

    def payload_matrix(self, heights) -> np.ndarray:
        return np.stack([self.payload(h) for h in heights])

    def merkle_root(self, height: int) -> bytes:
        root = self._roots.get(height)
        if root is None:
            root = hashlib.sha256(self.gf.to_bytes(self.payload(height))).digest()
            self._roots[height] = root
        return root


def hash_intermediate(gf, payload: np.ndarray) -> bytes:
    return hashlib.sha256(gf.to_bytes(payload)).digest()


def mine_enhanced_block(
    pool: BlockPool,
    k_next: int,
    tip: BlockHeader,
    store: BlockStore,
    cfg: ChainConfig,
    group_seq: int,
    timestamp: int,
):
    """Assemble the next enhanced block from the k oldest pool heights.

    Returns the header together with the freshly computed intermediate
    blocks (n x s).  Nonce search is out of scope; the scheduler already
    elected this miner.
    """
    if len(pool) < k_next:
        raise NotReadyError(
            f"pool holds {len(pool)} heights, need {k_next} to mine"
        )
    heights = pool.oldest(k_next)
    n = group_length(k_next, cfg.precode_rate)
    gen = build_systematic_generator(k_next, n, store.gf.p)
    originals = store.payload_matrix(heights)
    intermediates = precode_encode(originals, gen)
    nonsys = tuple(
        hash_intermediate(store.gf, intermediates[i]) for i in range(k_next, n)
    )
    base = BlockHeader(
        height=tip.height + 1,
        prev_hash=block_hash(tip),
        merkle_root=store.merkle_root(tip.height + 1),
        timestamp=timestamp,
    )
    header = EnhancedBlockHeader(base, group_seq, heights, gen, nonsys)
    return header, intermediates


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    reason: str | None = None


def verify_enhanced_block(
    candidate: EnhancedBlockHeader,
    pool: BlockPool,
    store: BlockStore,
    cfg: ChainConfig,
) -> VerifyResult:
    """Structural, pool, and intermediate-hash checks for a mined header."""
    k = candidate.k
    idx = candidate.group_indices
    n = group_length(k, cfg.precode_rate)
    if (
        k < 1
        or list(idx) != sorted(set(idx))
        or any(h >= candidate.base.height for h in idx)
        or candidate.generator.k != k
        or candidate.generator.n != n
        or len(candidate.nonsys_hashes) != n - k
    ):
        return VerifyResult(False, "malformed")
    if len(pool) < k:
        return VerifyResult(False, "pool-too-small")
    if not pool.contains_all(idx):
        return VerifyResult(False, "unknown-group-member")
    originals = store.payload_matrix(idx)
    intermediates = precode_encode(originals, candidate.generator)
    for offset, i in enumerate(range(k, n)):
        if hash_intermediate(store.gf, intermediates[i]) != candidate.nonsys_hashes[offset]:
            return VerifyResult(False, "hash-mismatch")
    return VerifyResult(True)


def confirmation_check(enhanced: EnhancedBlockHeader, tip_height: int, alpha: int) -> bool:
    """Buried at least alpha deep: the trigger for group encoding."""
    return tip_height - enhanced.base.height >= alpha


def remine_decision(
    current_nodes: int, nodes_at_encoding: int, cfg: ChainConfig
) -> bool:
    """True when the network shrank enough that the group must re-encode."""
    return current_nodes < cfg.reencode_factor * nodes_at_encoding
