"""Finite-field arithmetic over GF(2^p) backed by log/antilog tables.

Field elements are plain integers in [0, 2^p).  Addition is bitwise XOR
(characteristic 2), so subtraction coincides with addition.  Multiplication
goes through exp/log tables built once per field; block payloads are numpy
arrays of the field dtype and the vectorised helpers operate on those
directly.
"""

from __future__ import annotations

import functools

import numpy as np

# Irreducible polynomials by extension degree, encoded with bit i as the
# coefficient of x^i.  p=8 is the conventional x^8+x^4+x^3+x+1; p=16 is
# x^16+x^12+x^3+x+1.  The table generator does not require the polynomial
# to be primitive; a generator element is searched for at build time.
_IRREDUCIBLE = {
    1: 0b11,
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0b100011011,
    9: 0b1000010001,
    10: 0b10000001001,
    11: 0b100000000101,
    12: 0b1000001010011,
    13: 0b10000000011011,
    14: 0b100010001000011,
    15: 0b1000000000000011,
    16: 0b10001000000001011,
}


class GF:
    """Arithmetic over GF(2^p) for 1 <= p <= 16."""

    def __init__(self, p: int, poly: int | None = None):
        if not 1 <= p <= 16:
            raise ValueError(f"symbol width must be in 1..16, got {p}")
        self.p = p
        self.q = 1 << p
        self.order = self.q - 1
        self.poly = _IRREDUCIBLE[p] if poly is None else poly
        if not (self.poly >> p) & 1:
            raise ValueError(f"reduction polynomial must have degree {p}")
        self.dtype = np.uint8 if p <= 8 else np.uint16
        self.bytes_per_symbol = (p + 7) // 8
        self._build_tables()

    def _poly_mul(self, a: int, b: int) -> int:
        """Carry-less multiply of a by b, reduced by the field polynomial."""
        acc = 0
        while b:
            if b & 1:
                acc ^= a
            b >>= 1
            a <<= 1
            if a & self.q:
                a ^= self.poly
        return acc

    def _build_tables(self) -> None:
        if self.q == 2:
            exp_seq = [1]
            self.generator = 1
        else:
            exp_seq = None
            for g in range(2, self.q):
                seq = [1]
                x = g
                while x != 1 and x != 0 and len(seq) <= self.order:
                    seq.append(x)
                    x = self._poly_mul(x, g)
                if x == 1 and len(seq) == self.order:
                    exp_seq = seq
                    self.generator = g
                    break
            if exp_seq is None:
                raise ValueError(
                    f"no generator found for polynomial 0x{self.poly:X}; "
                    f"it is probably not irreducible"
                )
        base = np.array(exp_seq, dtype=np.int32)
        # Doubled exp table lets a single log addition index without a mod.
        self.exp = np.concatenate([base, base])
        log = np.zeros(self.q, dtype=np.int32)
        log[base] = np.arange(self.order, dtype=np.int32)
        self.log = log  # log[0] stays 0 and is meaningless; callers mask zeros

    # scalar operations -------------------------------------------------

    def add(self, a: int, b: int) -> int:
        return a ^ b

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return int(self.exp[self.log[a] + self.log[b]])

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no inverse in GF(2^p)")
        return int(self.exp[self.order - self.log[a]])

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow(self, a: int, e: int) -> int:
        if e < 0:
            return self.pow(self.inv(a), -e)
        if e == 0:
            return 1
        if a == 0:
            return 0
        return int(self.exp[(int(self.log[a]) * e) % self.order])

    # vector operations --------------------------------------------------

    def mul_vec(self, vec: np.ndarray, scalar: int) -> np.ndarray:
        """Elementwise product of a symbol vector by one scalar."""
        if scalar == 0:
            return np.zeros_like(vec)
        out = self.exp[self.log[vec] + int(self.log[scalar])]
        out[vec == 0] = 0
        return out.astype(self.dtype, copy=False)

    def mul_arrays(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Broadcasting elementwise product of two symbol arrays."""
        out = self.exp[self.log[a] + self.log[b]]
        zero = (a == 0) | (b == 0)
        if zero.shape != out.shape:
            zero = np.broadcast_to(zero, out.shape)
        out[zero] = 0
        return out.astype(self.dtype, copy=False)

    # serialization -------------------------------------------------------

    def to_bytes(self, vec: np.ndarray) -> bytes:
        """Little-endian symbol bytes, bytes_per_symbol each."""
        wire = np.dtype("<u2") if self.bytes_per_symbol == 2 else np.uint8
        return np.ascontiguousarray(vec).astype(wire).tobytes()

    def from_bytes(self, raw: bytes) -> np.ndarray:
        wire = np.dtype("<u2") if self.bytes_per_symbol == 2 else np.uint8
        return np.frombuffer(raw, dtype=wire).astype(self.dtype)

    def __repr__(self) -> str:
        return f"GF(p={self.p}, poly=0x{self.poly:X})"


@functools.lru_cache(maxsize=None)
def field(p: int) -> GF:
    """Shared per-process field instance (tables are built once)."""
    return GF(p)
