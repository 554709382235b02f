"""Rateless layer: encode identities, peeling fixtures, repair, raptor decode."""

import numpy as np
import pytest
from scipy import stats

from ratelesschain.degree import DegreeDistribution, encoding_distribution
from ratelesschain.gf import field
from ratelesschain.lt import (
    CodedBlock,
    MissingIntermediateError,
    MissingNeighborsError,
    draw_neighbors,
    encode_from_neighbors,
    lt_encode,
    peel_coverage,
    peel_decode,
    raptor_decode,
    repair_from_edge,
)
from ratelesschain.precode import build_systematic_generator, precode_encode

# Five-block reference code over four intermediates (0-based neighbor sets).
FIVE_BLOCK_NEIGHBORS = [{0}, {0, 2}, {1, 2, 3}, {1, 3}, {2, 3}]


def four_intermediates():
    return {i: np.array([i + 1, 17 * (i + 1)], dtype=np.uint16) for i in range(4)}


def five_block_code(inter=None):
    inter = inter if inter is not None else four_intermediates()
    return [encode_from_neighbors(inter, s) for s in FIVE_BLOCK_NEIGHBORS]


def test_degree_one_encode_copies_intermediate():
    inter = four_intermediates()
    blk = encode_from_neighbors(inter, {2})
    assert blk.degree == 1
    assert np.array_equal(blk.payload, inter[2])


def test_pairwise_encode_is_xor():
    inter = four_intermediates()
    blk = encode_from_neighbors(inter, {0, 2})
    assert np.array_equal(blk.payload, inter[0] ^ inter[2])


def test_encode_xor_identity_random_draws():
    inter = {i: np.array([3 * i, i + 9], dtype=np.uint16) for i in range(30)}
    omega = encoding_distribution(30, 0.1, 0.5)
    rng = np.random.default_rng(11)
    for _ in range(50):
        blk = lt_encode(inter, omega, rng)
        acc = blk.payload.copy()
        for i in blk.neighbors:
            acc ^= inter[i]
        assert not acc.any()


def test_missing_intermediate_reported_with_indices():
    inter = four_intermediates()
    del inter[1]
    with pytest.raises(MissingIntermediateError) as err:
        encode_from_neighbors(inter, {1, 2})
    assert err.value.missing == {1}


def test_peel_five_block_partial_then_full():
    inter = four_intermediates()
    coded = five_block_code(inter)
    partial = peel_decode(coded[:4], 4)
    assert sorted(partial.decoded) == [0, 2]
    assert partial.undecoded == frozenset({1, 3})
    for i in (0, 2):
        assert np.array_equal(partial.decoded[i], inter[i])
    complete = peel_decode(coded, 4)
    assert sorted(complete.decoded) == [0, 1, 2, 3]
    for i in range(4):
        assert np.array_equal(complete.decoded[i], inter[i])


def test_peel_handles_systematic_reception():
    inter = {i: np.array([i, i + 1], dtype=np.uint16) for i in range(6)}
    coded = [encode_from_neighbors(inter, {i}) for i in range(6)]
    res = peel_decode(coded, 6)
    assert len(res.decoded) == 6 and not res.undecoded


def test_peel_decoded_set_is_order_invariant():
    inter = {i: np.array([5 * i + 1], dtype=np.uint16) for i in range(12)}
    omega = encoding_distribution(12, 0.1, 0.5)
    rng = np.random.default_rng(23)
    coded = [encode_from_neighbors(inter, {i}) for i in range(0, 12, 3)]
    coded += [lt_encode(inter, omega, rng) for _ in range(10)]
    baseline = peel_decode(coded, 12)
    for shuffle_seed in range(8):
        order = np.random.default_rng(shuffle_seed).permutation(len(coded))
        res = peel_decode([coded[i] for i in order], 12)
        assert set(res.decoded) == set(baseline.decoded)
        for i, payload in res.decoded.items():
            assert np.array_equal(payload, baseline.decoded[i])


def test_peel_coverage_agrees_with_payload_peel():
    omega = encoding_distribution(25, 0.1, 0.5)
    inter = {i: np.array([i + 2], dtype=np.uint16) for i in range(25)}
    for seed in range(10):
        rng = np.random.default_rng(seed)
        coded = [encode_from_neighbors(inter, {i}) for i in range(0, 25, 4)]
        coded += [lt_encode(inter, omega, rng) for _ in range(22)]
        with_payloads = peel_decode(coded, 25)
        structural = peel_coverage([b.neighbors for b in coded], 25)
        assert structural == set(with_payloads.decoded)


def test_neighbor_index_validation():
    blk = CodedBlock(np.zeros(2, np.uint16), frozenset({7}))
    with pytest.raises(ValueError):
        peel_decode([blk], 4)


def test_empty_neighbor_set_rejected():
    with pytest.raises(ValueError):
        CodedBlock(np.zeros(2, np.uint16), frozenset())


def test_draw_neighbors_distinct_and_in_range():
    omega = encoding_distribution(40, 0.1, 0.5)
    rng = np.random.default_rng(2)
    for _ in range(100):
        nbrs = draw_neighbors(omega, rng)
        assert 2 <= len(nbrs) <= 40
        assert all(0 <= i < 40 for i in nbrs)


def test_degree_histogram_matches_distribution():
    omega = encoding_distribution(60, 0.1, 0.5)
    rng = np.random.default_rng(99)
    draws = omega.sample_many(rng, 100_000)
    counts = np.bincount(draws, minlength=61)[1:]
    expected = omega.pmf[1:] * draws.size
    # merge bins until every expected count is at least 5
    obs_bins, exp_bins = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            acc_o = acc_e = 0.0
    obs_bins[-1] += acc_o
    exp_bins[-1] += acc_e
    result = stats.chisquare(obs_bins, exp_bins)
    assert result.pvalue > 0.001


def test_repair_degree_one_edge_returns_payload():
    inter = four_intermediates()
    edge = encode_from_neighbors(inter, {3})
    out = repair_from_edge(3, edge, {})
    assert np.array_equal(out, inter[3])


def test_repair_degree_four_edge():
    # degree-4 edge block: recover one neighbor given the other three
    inter = {i: np.array([11 * i + 5, i], dtype=np.uint16) for i in range(8)}
    edge = encode_from_neighbors(inter, {2, 4, 5, 7})
    others = {4: inter[4], 5: inter[5], 7: inter[7]}
    assert np.array_equal(repair_from_edge(2, edge, others), inter[2])


def test_repair_reports_missing_neighbors():
    inter = four_intermediates()
    edge = encode_from_neighbors(inter, {0, 1, 2})
    with pytest.raises(MissingNeighborsError) as err:
        repair_from_edge(0, edge, {1: inter[1]})
    assert err.value.missing == {2}


def test_repair_roundtrip_after_precode():
    gf = field(16)
    g = build_systematic_generator(6, 9, 16)
    rng = np.random.default_rng(8)
    blocks = rng.integers(0, gf.q, size=(6, 5)).astype(gf.dtype)
    inter = precode_encode(blocks, g)
    imap = dict(enumerate(inter))
    omega = encoding_distribution(9, 0.1, 0.5)
    for _ in range(25):
        blk = lt_encode(imap, omega, rng)
        target = sorted(blk.neighbors)[0]
        others = {i: imap[i] for i in blk.neighbors if i != target}
        assert np.array_equal(repair_from_edge(target, blk, others), inter[target])


def _encoded_population(rng, inter, omega, n_nodes):
    n = len(inter)
    pop = [CodedBlock(inter[i].copy(), frozenset({i})) for i in range(n)]
    imap = dict(enumerate(inter))
    for _ in range(n_nodes - n):
        pop.append(lt_encode(imap, omega, rng))
    return pop


def test_raptor_all_systematic_succeeds():
    g = build_systematic_generator(5, 7, 16)
    blocks = np.arange(35, dtype=np.uint16).reshape(5, 7)
    inter = precode_encode(blocks, g)
    coded = [CodedBlock(inter[i].copy(), frozenset({i})) for i in range(7)]
    res = raptor_decode(coded, g)
    assert res.ok and np.array_equal(res.originals, blocks)


def test_raptor_succeeds_when_k_intermediates_present_despite_stall():
    # k systematic blocks plus useless high-degree parity: no ripple needed
    g = build_systematic_generator(4, 6, 16)
    blocks = np.arange(12, dtype=np.uint16).reshape(4, 3)
    inter = precode_encode(blocks, g)
    coded = [CodedBlock(inter[i].copy(), frozenset({i})) for i in range(4)]
    coded.append(encode_from_neighbors(dict(enumerate(inter)), {4, 5}))
    res = raptor_decode(coded, g)
    assert res.ok and np.array_equal(res.originals, blocks)


def test_raptor_below_k_blocks_always_fails():
    g = build_systematic_generator(5, 7, 16)
    blocks = np.arange(10, dtype=np.uint16).reshape(5, 2)
    inter = precode_encode(blocks, g)
    coded = [CodedBlock(inter[i].copy(), frozenset({i})) for i in range(4)]
    res = raptor_decode(coded, g)
    assert not res.ok
    assert res.intermediates_recovered == 4


# Frozen over 1000 seeded trials at first build: collection of (1+0.3)k blocks
# from a freshly encoded 30-node population around a [25, 20] pre-code.
RAPTOR_RATE_FIXTURE = 1.0


def test_raptor_success_rate_regression():
    g = build_systematic_generator(20, 25, 16)
    rng = np.random.default_rng(7)
    blocks = rng.integers(0, 65536, size=(20, 4)).astype(np.uint16)
    inter = precode_encode(blocks, g)
    omega = encoding_distribution(25, 0.1, 0.5)
    ok = 0
    trials = 1000
    for t in range(trials):
        trng = np.random.default_rng((7, 30, t))
        pop = _encoded_population(trng, inter, omega, 30)
        pick = trng.choice(len(pop), size=26, replace=False)  # (1 + 0.3) * 20
        res = raptor_decode([pop[int(j)] for j in pick], g)
        if res.ok and np.array_equal(res.originals, blocks):
            ok += 1
    rate = ok / trials
    assert rate > 0.9
    assert rate == pytest.approx(RAPTOR_RATE_FIXTURE, abs=1e-12)
