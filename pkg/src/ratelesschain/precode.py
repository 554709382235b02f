"""Systematic MDS pre-code: generator construction, encode, erasure decode.

The code is Reed-Solomon evaluated at the distinct points alpha^0..alpha^{n-1}
of GF(2^p): message symbols are the codeword values at the first k points and
parity symbols the values at the remaining n-k.  That view gives the
row-reduced systematic generator [I | P] in closed form (Lagrange basis
evaluations), so only the k x (n-k) parity part is ever materialised.

Erasure decoding is exact interpolation from any k received coordinates.
There is no error detection: corrupted symbols decode to wrong blocks, and
callers are expected to catch that through hash checks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .gf import GF, field

_COL_CHUNK = 64


class FieldTooSmallError(ValueError):
    """Requested code length exceeds the number of distinct field points."""


class InsufficientSymbolsError(ValueError):
    """Fewer than k distinct coordinates are available for decoding."""


@dataclass(frozen=True)
class GeneratorMatrix:
    """Systematic generator [I | parity] of an [n, k] MDS code over GF(2^p)."""

    k: int
    n: int
    p: int
    parity: np.ndarray  # k x (n-k), field dtype, read-only

    @property
    def gf(self) -> GF:
        return field(self.p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeneratorMatrix):
            return NotImplemented
        return (
            self.k == other.k
            and self.n == other.n
            and self.p == other.p
            and np.array_equal(self.parity, other.parity)
        )

    def __hash__(self) -> int:
        return hash((self.k, self.n, self.p, self.parity.tobytes()))


def build_systematic_generator(k: int, n: int, p: int) -> GeneratorMatrix:
    """Deterministic systematic MDS generator for given (k, n, p)."""
    gf = field(p)
    if k < 1 or n < k:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n > gf.order:
        raise FieldTooSmallError(
            f"code length {n} exceeds 2^{p} - 1 = {gf.order} distinct points"
        )
    if n == k:
        parity = np.zeros((k, 0), dtype=gf.dtype)
        parity.setflags(write=False)
        return GeneratorMatrix(k, n, p, parity)

    pts = gf.exp[:n].astype(np.int64)
    xs, ys = pts[:k], pts[k:]
    order = gf.order

    # Lagrange denominators at the message points.  The diagonal XOR is zero;
    # filling it with 1 contributes log(1) = 0 to the row sums.
    dxx = xs[:, None] ^ xs[None, :]
    np.fill_diagonal(dxx, 1)
    log_den = gf.log[dxx].astype(np.int64).sum(axis=1) % order

    dyx = ys[:, None] ^ xs[None, :]  # (n-k) x k, all nonzero
    log_dyx = gf.log[dyx].astype(np.int64)
    log_num = log_dyx.sum(axis=1) % order

    log_parity = (log_num[None, :] - log_dyx.T - log_den[:, None]) % order
    parity = gf.exp[log_parity].astype(gf.dtype)
    parity.setflags(write=False)
    return GeneratorMatrix(k, n, p, parity)


def _as_block_matrix(blocks, k: int, gf: GF) -> np.ndarray:
    try:
        mat = np.asarray(blocks, dtype=gf.dtype)
    except (ValueError, TypeError) as exc:
        raise ValueError("blocks must share a common symbol length") from exc
    if mat.ndim != 2 or mat.shape[0] != k or mat.shape[1] < 1:
        raise ValueError(
            f"expected {k} blocks of equal positive length, got shape {mat.shape}"
        )
    return mat


def precode_encode(originals, g: GeneratorMatrix) -> np.ndarray:
    """Encode k original blocks into n intermediate blocks (rows).

    The first k output rows equal the inputs; parity rows are the generator
    columns applied symbol-row-wise.
    """
    gf = g.gf
    blocks = _as_block_matrix(originals, g.k, gf)
    s = blocks.shape[1]
    out = np.empty((g.n, s), dtype=gf.dtype)
    out[: g.k] = blocks
    for j0 in range(0, g.n - g.k, _COL_CHUNK):
        cols = g.parity[:, j0 : j0 + _COL_CHUNK]  # k x c
        prod = gf.mul_arrays(blocks[:, None, :], cols[:, :, None])
        out[g.k + j0 : g.k + j0 + cols.shape[1]] = np.bitwise_xor.reduce(prod, axis=0)
    return out


def encode_column(g: GeneratorMatrix, originals: np.ndarray, index: int) -> np.ndarray:
    """Single intermediate block u_index from the original block matrix."""
    if not 0 <= index < g.n:
        raise ValueError(f"intermediate index {index} out of range 0..{g.n - 1}")
    gf = g.gf
    blocks = _as_block_matrix(originals, g.k, gf)
    if index < g.k:
        return blocks[index].copy()
    col = g.parity[:, index - g.k]
    prod = gf.mul_arrays(blocks, col[:, None])
    return np.bitwise_xor.reduce(prod, axis=0)


def precode_decode(available: Mapping[int, np.ndarray], g: GeneratorMatrix) -> np.ndarray:
    """Recover the k original blocks from any >= k intermediate blocks.

    Exact erasure decoding: systematic coordinates are read off, missing ones
    are interpolated from k available coordinates.
    """
    gf = g.gf
    idxs = sorted(available)
    if any(i < 0 or i >= g.n for i in idxs):
        raise ValueError("intermediate index out of range")
    if len(idxs) < g.k:
        raise InsufficientSymbolsError(
            f"need {g.k} intermediate blocks, have {len(idxs)}"
        )

    first = np.asarray(available[idxs[0]])
    s = first.shape[0]
    out = np.zeros((g.k, s), dtype=gf.dtype)

    have_sys = [i for i in idxs if i < g.k]
    for i in have_sys:
        vec = np.asarray(available[i], dtype=gf.dtype)
        if vec.shape != (s,):
            raise ValueError("blocks must share a common symbol length")
        out[i] = vec
    missing = sorted(set(range(g.k)) - set(have_sys))
    if not missing:
        return out

    chosen = have_sys + [i for i in idxs if i >= g.k][: g.k - len(have_sys)]
    if len(chosen) < g.k:
        raise InsufficientSymbolsError(
            f"need {g.k} distinct intermediate blocks, have {len(idxs)}"
        )
    pts = gf.exp[: g.n].astype(np.int64)
    z = pts[chosen]
    vals = np.stack([np.asarray(available[i], dtype=gf.dtype) for i in chosen])
    if vals.shape[1] != s:
        raise ValueError("blocks must share a common symbol length")
    order = gf.order

    dzz = z[:, None] ^ z[None, :]
    np.fill_diagonal(dzz, 1)
    log_w = gf.log[dzz].astype(np.int64).sum(axis=1) % order

    xm = pts[np.array(missing)]
    dxz = xm[:, None] ^ z[None, :]  # e x k, nonzero (missing points not chosen)
    log_dxz = gf.log[dxz].astype(np.int64)
    log_numer = log_dxz.sum(axis=1) % order
    log_coef = (log_numer[:, None] - log_dxz - log_w[None, :]) % order
    coef = gf.exp[log_coef]  # e x k scalar interpolation weights

    for r0 in range(0, len(missing), 32):
        rows = coef[r0 : r0 + 32]
        prod = gf.mul_arrays(vals[None, :, :], rows[:, :, None])
        out[missing[r0 : r0 + 32]] = np.bitwise_xor.reduce(prod, axis=1)
    return out


def serialize_generator(g: GeneratorMatrix) -> bytes:
    """Wire layout: k, n, p as 32-bit LE, then parity row-major, LE symbols."""
    wire = np.dtype("<u2") if g.gf.bytes_per_symbol == 2 else np.uint8
    return struct.pack("<III", g.k, g.n, g.p) + np.ascontiguousarray(
        g.parity
    ).astype(wire).tobytes()


def deserialize_generator(raw: bytes) -> GeneratorMatrix:
    k, n, p = struct.unpack_from("<III", raw, 0)
    gf = field(p)
    wire = np.dtype("<u2") if gf.bytes_per_symbol == 2 else np.uint8
    parity = (
        np.frombuffer(raw, dtype=wire, offset=12)
        .astype(gf.dtype)
        .reshape(k, n - k)
    )
    parity.setflags(write=False)
    return GeneratorMatrix(k, n, p, parity)
