"""Pre-code checks: exhaustive MDS oracles, roundtrips, serialization."""

from itertools import combinations

import numpy as np
import pytest

from ratelesschain.gf import field
from ratelesschain.precode import (
    FieldTooSmallError,
    InsufficientSymbolsError,
    build_systematic_generator,
    deserialize_generator,
    encode_column,
    precode_decode,
    precode_encode,
    serialize_generator,
)


def full_matrix(g):
    """Dense [I | parity] for oracle checks."""
    full = np.zeros((g.k, g.n), dtype=np.int64)
    full[:, : g.k] = np.eye(g.k, dtype=np.int64)
    full[:, g.k :] = g.parity
    return full


def gaussian_rank(mat, gf):
    """Textbook elimination over the field; independent of the decoder path."""
    m = [[int(x) for x in row] for row in mat]
    rows, cols = len(m), len(m[0])
    rank = 0
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if m[r][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        inv = gf.inv(m[rank][col])
        m[rank] = [gf.mul(inv, x) for x in m[rank]]
        for r in range(rows):
            if r != rank and m[r][col] != 0:
                factor = m[r][col]
                m[r] = [x ^ gf.mul(factor, y) for x, y in zip(m[r], m[rank])]
        rank += 1
        if rank == rows:
            break
    return rank


def random_blocks(rng, k, s, gf):
    return rng.integers(0, gf.q, size=(k, s)).astype(gf.dtype)


def test_rate_one_code_is_identity_only():
    g = build_systematic_generator(3, 3, 8)
    assert g.parity.shape == (3, 0)
    blocks = random_blocks(np.random.default_rng(0), 3, 4, field(8))
    assert np.array_equal(precode_encode(blocks, g), blocks)


def test_k2_n3_every_column_pair_independent():
    g = build_systematic_generator(2, 3, 8)
    gf = field(8)
    full = full_matrix(g)
    for cols in combinations(range(3), 2):
        sub = full[:, cols]
        # 2x2 determinant over the field
        det = gf.mul(int(sub[0, 0]), int(sub[1, 1])) ^ gf.mul(
            int(sub[0, 1]), int(sub[1, 0])
        )
        assert det != 0, f"columns {cols} are dependent"


def test_k4_n6_all_submatrices_invertible():
    g = build_systematic_generator(4, 6, 16)
    gf = field(16)
    full = full_matrix(g)
    for cols in combinations(range(6), 4):
        assert gaussian_rank(full[:, cols].T, gf) == 4


def test_encode_systematic_prefix_and_repetition():
    gf = field(8)
    rng = np.random.default_rng(1)
    g = build_systematic_generator(4, 7, 8)
    blocks = random_blocks(rng, 4, 6, gf)
    out = precode_encode(blocks, g)
    assert np.array_equal(out[:4], blocks)

    g1 = build_systematic_generator(1, 2, 8)
    one = random_blocks(rng, 1, 5, gf)
    rep = precode_encode(one, g1)
    assert np.array_equal(rep[0], one[0])
    assert np.array_equal(rep[1], one[0])  # [1 1] repetition


def test_encode_matches_naive_double_loop_oracle():
    gf = field(8)
    rng = np.random.default_rng(2)
    g = build_systematic_generator(2, 3, 8)
    blocks = random_blocks(rng, 2, 4, gf)
    out = precode_encode(blocks, g)
    full = full_matrix(g)
    for j in range(g.n):
        for h in range(4):
            acc = 0
            for i in range(g.k):
                acc ^= gf.mul(int(blocks[i, h]), int(full[i, j]))
            assert acc == int(out[j, h])


def test_mismatched_block_lengths_rejected():
    g = build_systematic_generator(2, 3, 8)
    with pytest.raises(ValueError):
        precode_encode([np.zeros(3, np.uint8), np.zeros(4, np.uint8)], g)


def test_decode_reads_off_when_everything_present():
    gf = field(16)
    rng = np.random.default_rng(3)
    g = build_systematic_generator(3, 5, 16)
    blocks = random_blocks(rng, 3, 4, gf)
    out = precode_encode(blocks, g)
    decoded = precode_decode({i: out[i] for i in range(5)}, g)
    assert np.array_equal(decoded, blocks)


def test_every_survivor_subset_roundtrips_k4_n6():
    gf = field(16)
    rng = np.random.default_rng(4)
    g = build_systematic_generator(4, 6, 16)
    blocks = random_blocks(rng, 4, 3, gf)
    out = precode_encode(blocks, g)
    for cols in combinations(range(6), 4):
        decoded = precode_decode({i: out[i] for i in cols}, g)
        assert np.array_equal(decoded, blocks), f"subset {cols} failed"


def test_insufficient_symbols_raises():
    g = build_systematic_generator(4, 6, 16)
    blocks = random_blocks(np.random.default_rng(5), 4, 3, field(16))
    out = precode_encode(blocks, g)
    with pytest.raises(InsufficientSymbolsError):
        precode_decode({i: out[i] for i in range(3)}, g)


def test_corrupted_symbol_decodes_wrong_without_detection():
    # erasure decoding has no error detection; callers must hash-check
    gf = field(16)
    g = build_systematic_generator(4, 6, 16)
    blocks = random_blocks(np.random.default_rng(6), 4, 3, gf)
    out = precode_encode(blocks, g)
    tampered = out[4].copy()
    tampered[0] ^= 1
    decoded = precode_decode({0: out[0], 1: out[1], 2: out[2], 4: tampered}, g)
    assert not np.array_equal(decoded, blocks)


def test_field_too_small():
    with pytest.raises(FieldTooSmallError):
        build_systematic_generator(100, 300, 8)


def test_generator_deterministic_and_serializable():
    a = build_systematic_generator(4, 6, 16)
    b = build_systematic_generator(4, 6, 16)
    assert a == b
    raw = serialize_generator(a)
    assert raw[:12] == (4).to_bytes(4, "little") + (6).to_bytes(4, "little") + (
        16
    ).to_bytes(4, "little")
    assert len(raw) == 12 + 4 * 2 * 2  # k*(n-k) symbols, 2 bytes each
    assert deserialize_generator(raw) == a


def test_encode_column_matches_full_encode():
    gf = field(16)
    g = build_systematic_generator(5, 8, 16)
    blocks = random_blocks(np.random.default_rng(7), 5, 4, gf)
    out = precode_encode(blocks, g)
    for i in range(8):
        assert np.array_equal(encode_column(g, blocks, i), out[i])
