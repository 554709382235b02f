"""Field arithmetic checks against an independent long-multiplication oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratelesschain.gf import GF, field

AES_POLY = 0x11B


def slow_gf_mul(a: int, b: int, p: int, poly: int) -> int:
    """Bitwise long multiplication with explicit polynomial reduction."""
    prod = 0
    for bit in range(p):
        if (b >> bit) & 1:
            prod ^= a << bit
    for bit in range(2 * p - 2, p - 1, -1):
        if (prod >> bit) & 1:
            prod ^= poly << (bit - p)
    return prod


def test_conventional_p8_vector():
    gf = field(8)
    assert gf.poly == AES_POLY
    assert gf.mul(0x02, 0x80) == 0x1B


@pytest.mark.parametrize("p", [2, 4, 8])
def test_mul_matches_long_multiplication_oracle(p):
    gf = field(p)
    rng = np.random.default_rng(p)
    for _ in range(300):
        a = int(rng.integers(0, gf.q))
        b = int(rng.integers(0, gf.q))
        assert gf.mul(a, b) == slow_gf_mul(a, b, p, gf.poly)


def test_mul_matches_oracle_p16_sampled():
    gf = field(16)
    rng = np.random.default_rng(16)
    for _ in range(500):
        a = int(rng.integers(0, gf.q))
        b = int(rng.integers(0, gf.q))
        assert gf.mul(a, b) == slow_gf_mul(a, b, 16, gf.poly)


@given(x=st.integers(min_value=0, max_value=(1 << 16) - 1))
def test_add_self_cancels(x):
    gf = field(16)
    assert gf.add(x, x) == 0


@given(x=st.integers(min_value=0, max_value=(1 << 16) - 1))
def test_multiplicative_identity(x):
    gf = field(16)
    assert gf.mul(1, x) == x


@settings(max_examples=200)
@given(
    a=st.integers(min_value=0, max_value=255),
    b=st.integers(min_value=0, max_value=255),
    c=st.integers(min_value=0, max_value=255),
)
def test_field_axioms_p8(a, b, c):
    gf = field(8)
    assert gf.mul(a, b) == gf.mul(b, a)
    assert gf.mul(a, gf.mul(b, c)) == gf.mul(gf.mul(a, b), c)
    assert gf.mul(a, gf.add(b, c)) == gf.add(gf.mul(a, b), gf.mul(a, c))


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16])
def test_inverses_all_widths(p):
    gf = field(p)
    rng = np.random.default_rng(p + 100)
    samples = range(1, gf.q) if gf.q <= 1 << 8 else (
        int(rng.integers(1, gf.q)) for _ in range(64)
    )
    for a in samples:
        assert gf.mul(a, gf.inv(a)) == 1
    with pytest.raises(ZeroDivisionError):
        gf.inv(0)


def test_pow_and_div():
    gf = field(8)
    assert gf.pow(3, 0) == 1
    assert gf.pow(0, 5) == 0
    x = 0x57
    acc = 1
    for e in range(1, 6):
        acc = gf.mul(acc, x)
        assert gf.pow(x, e) == acc
    assert gf.div(gf.mul(7, 9), 9) == 7


def test_mul_vec_matches_scalar():
    gf = field(16)
    rng = np.random.default_rng(5)
    vec = rng.integers(0, gf.q, size=50).astype(gf.dtype)
    vec[0] = 0
    for scalar in (0, 1, 0x1234):
        out = gf.mul_vec(vec, scalar)
        assert out.dtype == gf.dtype
        for i in range(len(vec)):
            assert int(out[i]) == gf.mul(int(vec[i]), scalar)


def test_mul_arrays_broadcasting():
    gf = field(8)
    rng = np.random.default_rng(6)
    a = rng.integers(0, 256, size=(4, 5)).astype(gf.dtype)
    b = rng.integers(0, 256, size=(4, 1)).astype(gf.dtype)
    out = gf.mul_arrays(a, b)
    for i in range(4):
        for j in range(5):
            assert int(out[i, j]) == gf.mul(int(a[i, j]), int(b[i, 0]))


def test_byte_roundtrip():
    for p in (8, 16):
        gf = field(p)
        rng = np.random.default_rng(p)
        vec = rng.integers(0, gf.q, size=33).astype(gf.dtype)
        raw = gf.to_bytes(vec)
        assert len(raw) == 33 * gf.bytes_per_symbol
        assert np.array_equal(gf.from_bytes(raw), vec)


def test_generator_covers_all_nonzero_elements():
    for p in (4, 8):
        gf = field(p)
        assert sorted(int(x) for x in gf.exp[: gf.order]) == list(range(1, gf.q))


def test_rejects_bad_width():
    with pytest.raises(ValueError):
        GF(0)
    with pytest.raises(ValueError):
        GF(17)
