"""Bit strings over GF(2), Toeplitz hashing and LFSR-Toeplitz authentication.

Bit 0 of a :class:`BitString` is the first transmitted bit. Internally the
bits are packed into a Python int with bit 0 as the most significant bit,
which makes XOR, concatenation and Toeplitz row products cheap.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


class BitString:
    __slots__ = ("_v", "_n")

    def __init__(self, value: int = 0, length: int = 0):
        if length < 0:
            raise ValueError("length must be non-negative")
        if value < 0 or value >> length:
            raise ValueError("value does not fit in length bits")
        self._v = value
        self._n = length

    # construction
    @classmethod
    def zeros(cls, n: int) -> "BitString":
        return cls(0, n)

    @classmethod
    def ones(cls, n: int) -> "BitString":
        return cls((1 << n) - 1, n)

    @classmethod
    def from_bits(cls, bits) -> "BitString":
        if isinstance(bits, np.ndarray):
            return cls._from_array(bits)
        bits = list(bits)
        v = 0
        for b in bits:
            if b not in (0, 1, True, False):
                raise ValueError(f"not a bit: {b!r}")
            v = (v << 1) | int(b)
        return cls(v, len(bits))

    @classmethod
    def _from_array(cls, arr: np.ndarray) -> "BitString":
        arr = arr.ravel()
        n = len(arr)
        if n == 0:
            return cls(0, 0)
        if arr.dtype != bool and ((arr != 0) & (arr != 1)).any():
            raise ValueError("not a bit array")
        packed = np.packbits(arr.astype(np.uint8))
        return cls(int.from_bytes(packed.tobytes(), "big") >> (8 * len(packed) - n), n)

    @classmethod
    def from_str(cls, s: str) -> "BitString":
        return cls.from_bits(int(c) for c in s)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "BitString":
        if n == 0:
            return cls(0, 0)
        nbytes = (n + 7) // 8
        v = int.from_bytes(rng.bytes(nbytes), "big") >> (8 * nbytes - n)
        return cls(v, n)

    # accessors
    @property
    def value(self) -> int:
        return self._v

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            start, stop, step = idx.indices(self._n)
            if step != 1:
                return BitString.from_bits(self[i] for i in range(start, stop, step))
            m = max(stop - start, 0)
            return BitString((self._v >> (self._n - start - m)) & ((1 << m) - 1), m)
        if idx < 0:
            idx += self._n
        if not 0 <= idx < self._n:
            raise IndexError("bit index out of range")
        return (self._v >> (self._n - 1 - idx)) & 1

    def __iter__(self):
        if self._n <= 64:
            return ((self._v >> (self._n - 1 - i)) & 1 for i in range(self._n))
        return iter(self.to_numpy().tolist())

    def to_list(self) -> list[int]:
        return list(self)

    def to_numpy(self) -> np.ndarray:
        if self._n == 0:
            return np.zeros(0, dtype=np.uint8)
        nbytes = (self._n + 7) // 8
        raw = np.frombuffer((self._v << (8 * nbytes - self._n)).to_bytes(nbytes, "big"), dtype=np.uint8)
        return np.unpackbits(raw)[:self._n]

    def weight(self) -> int:
        return self._v.bit_count()

    # algebra
    def __xor__(self, other: "BitString") -> "BitString":
        a, b = self, other
        if a._n < b._n:
            a, b = b, a
        return BitString(a._v ^ (b._v << (a._n - b._n)), a._n)

    def __add__(self, other: "BitString") -> "BitString":
        """Concatenation."""
        return BitString((self._v << other._n) | other._v, self._n + other._n)

    def __eq__(self, other) -> bool:
        return isinstance(other, BitString) and self._n == other._n and self._v == other._v

    def __hash__(self) -> int:
        return hash((self._v, self._n))

    def flip(self, i: int) -> "BitString":
        return BitString(self._v ^ (1 << (self._n - 1 - i)), self._n)

    def select(self, indices) -> "BitString":
        """Projection onto the given positions, in the given order."""
        idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=np.int64)
        if len(idx) and (idx.min() < 0 or idx.max() >= self._n):
            raise IndexError("selection index out of range")
        return BitString._from_array(self.to_numpy()[idx])

    @staticmethod
    def concat(parts) -> "BitString":
        out = BitString()
        for p in parts:
            out = out + p
        return out

    # serialization
    def to_bytes(self) -> bytes:
        if self._n == 0:
            return b""
        return np.packbits(self.to_numpy(), bitorder="little").tobytes()

    def to_hex(self) -> str:
        return f"{self._n}:{self.to_bytes().hex()}"

    @classmethod
    def from_hex(cls, s: str) -> "BitString":
        n_str, _, payload = s.partition(":")
        n = int(n_str)
        raw = np.frombuffer(bytes.fromhex(payload), dtype=np.uint8)
        bits = np.unpackbits(raw, bitorder="little")[:n]
        if len(bits) != n:
            raise ValueError("payload shorter than declared length")
        return cls.from_bits(int(b) for b in bits)

    def __repr__(self) -> str:
        body = "".join(map(str, self)) if self._n <= 64 else self.to_hex()
        return f"BitString('{body}')"


def xor(a: BitString, b: BitString) -> BitString:
    return a ^ b


class ToeplitzHash:
    """Toeplitz matrix T with T[r, c] = seed[c - r + output_len - 1]."""

    def __init__(self, seed: BitString, input_len: int, output_len: int):
        if len(seed) != input_len + output_len - 1:
            raise ValueError(
                f"seed must have {input_len + output_len - 1} bits, got {len(seed)}"
            )
        self.seed = seed
        self.input_len = input_len
        self.output_len = output_len

    @classmethod
    def random(cls, input_len: int, output_len: int, rng) -> "ToeplitzHash":
        return cls(BitString.random(input_len + output_len - 1, rng), input_len, output_len)

    def row(self, r: int) -> int:
        start = self.output_len - 1 - r
        n = self.input_len
        return (self.seed.value >> (len(self.seed) - start - n)) & ((1 << n) - 1)

    def matrix(self) -> np.ndarray:
        out = np.zeros((self.output_len, self.input_len), dtype=np.uint8)
        for r in range(self.output_len):
            for c in range(self.input_len):
                out[r, c] = self.seed[c - r + self.output_len - 1]
        return out

    def __call__(self, m: BitString) -> BitString:
        return toeplitz_apply(self, m)


def toeplitz_apply(h: ToeplitzHash, m: BitString) -> BitString:
    if len(m) != h.input_len:
        raise ValueError(f"message length {len(m)} != hash input length {h.input_len}")
    mv = m.value
    out = 0
    for r in range(h.output_len):
        out = (out << 1) | ((h.row(r) & mv).bit_count() & 1)
    return BitString(out, h.output_len)


# GF(2)[x] polynomials as ints, bit i = coefficient of x^i.

def _pmulmod(a: int, b: int, f: int, deg: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if (a >> deg) & 1:
            a ^= f
    return r


_SPREAD = [int(bin(b)[2:].replace("", "0")[:-1] or "0", 2) for b in range(256)]


def _psqmod(a: int, f: int, deg: int) -> int:
    """a^2 mod f; squaring over GF(2) interleaves zeros between the bits."""
    r, shift = 0, 0
    while a:
        r |= _SPREAD[a & 0xFF] << shift
        a >>= 8
        shift += 16
    n = r.bit_length() - 1
    while n >= deg:
        r ^= f << (n - deg)
        n = r.bit_length() - 1
    return r


def _pgcd(a: int, b: int) -> int:
    while b:
        while a and a.bit_length() >= b.bit_length():
            a ^= b << (a.bit_length() - b.bit_length())
        a, b = b, a
    return a


@lru_cache(maxsize=65536)
def is_irreducible(f: int) -> bool:
    """Ben-Or's test: no factor of degree i divides x^(2^i) - x, for i <= k/2."""
    k = f.bit_length() - 1
    if k < 1:
        return False
    if k == 1:
        return True
    if not f & 1:
        return False
    x = 2
    for _ in range(k // 2):
        x = _psqmod(x, f, k)
        if _pgcd(f, x ^ 2) != 1:
            return False
    return True


def irreducible_from_seed(seed: int, k: int) -> int:
    """First irreducible degree-k polynomial at or after x^k + seed (odd part)."""
    low = (seed & ((1 << k) - 1)) | 1
    span = 1 << k
    for step in range(0, span, 2):
        f = (1 << k) | ((low + step) % span | 1)
        if is_irreducible(f):
            return f
    raise RuntimeError(f"no irreducible polynomial of degree {k}")  # unreachable


class InsufficientKeyError(RuntimeError):
    """Raised when an authentication key pool runs out of bits."""


class KeyPool:
    """Pre-shared key bits consumed through a monotone cursor.

    Bits handed back with :meth:`reallocate` are appended to the tail of the
    stream; positions already read are never read again.
    """

    def __init__(self, bits: BitString):
        self._stream = bits
        self.cursor = 0
        self.consumed = 0

    @property
    def remaining(self) -> int:
        return len(self._stream) - self.cursor

    def draw(self, n: int) -> BitString:
        if n > self.remaining:
            raise InsufficientKeyError(f"need {n} key bits, pool has {self.remaining}")
        out = self._stream[self.cursor:self.cursor + n]
        self.cursor += n
        self.consumed += n
        return out

    def reallocate(self, bits: BitString) -> None:
        self._stream = self._stream + bits
        self.consumed -= len(bits)

    def copy(self) -> "KeyPool":
        c = KeyPool(self._stream)
        c.cursor, c.consumed = self.cursor, self.consumed
        return c


class AuthTag:
    __slots__ = ("tag", "message_len", "error_bound")

    def __init__(self, tag: BitString, message_len: int, error_bound: float):
        self.tag = tag
        self.message_len = message_len
        self.error_bound = error_bound

    def __eq__(self, other) -> bool:
        return isinstance(other, AuthTag) and self.tag == other.tag and self.message_len == other.message_len

    def __repr__(self) -> str:
        return f"AuthTag({self.tag!r}, message_len={self.message_len})"


def auth_key_bits(message_len: int, gamma_au: float) -> int:
    """Tag length k = ceil(log2(2|m|/gamma)); empty messages count as one bit."""
    return math.ceil(math.log2(2 * max(message_len, 1) / gamma_au))


def _pmod(a: int, f: int, deg: int) -> int:
    """a mod f, reducing 32 bits at a time from the top."""
    n = a.bit_length()
    if n <= deg:
        return a
    top = n - n % 32 if n % 32 else n - 32
    r = a >> top
    while True:
        while r.bit_length() > deg:
            r ^= f << (r.bit_length() - 1 - deg)
        if top == 0:
            return r
        top -= 32
        r = (r << 32) | ((a >> top) & 0xFFFFFFFF)


def lfsr_toeplitz_hash(m: BitString, poly: int, state: int, k: int) -> int:
    """XOR of the LFSR states s_i for every set bit m_i.

    The LFSR steps multiply by x modulo poly, so s_i = x^i s_0 and the sum
    collapses to (m(x) mod poly) * s_0 mod poly with m(x) = sum m_i x^i.
    """
    s = state or 1
    n = len(m)
    if n == 0:
        return 0
    mx = int(format(m.value, f"0{n}b")[::-1], 2)
    return _pmulmod(_pmod(mx, poly, k), s, poly, k)


def _tag_value(pool: KeyPool, m: BitString, k: int) -> int:
    construction = pool.draw(2 * k)
    pad = pool.draw(k)
    poly = irreducible_from_seed(construction[:k].value, k)
    tag = lfsr_toeplitz_hash(m, poly, construction[k:].value, k) ^ pad.value
    pool.reallocate(construction)
    return tag


def auth_tag(pool: KeyPool, m: BitString, gamma_au: float) -> tuple[AuthTag, int]:
    k = auth_key_bits(len(m), gamma_au)
    if pool.remaining < 3 * k:
        raise InsufficientKeyError(f"authentication needs {3 * k} pool bits, {pool.remaining} left")
    before = pool.consumed
    value = _tag_value(pool, m, k)
    return AuthTag(BitString(value, k), len(m), gamma_au), pool.consumed - before


def auth_verify(pool: KeyPool, m: BitString, tag: AuthTag) -> bool:
    k = len(tag.tag)
    if len(m) != tag.message_len or k != auth_key_bits(len(m), tag.error_bound):
        return False
    if pool.remaining < 3 * k:
        return False
    return _tag_value(pool, m, k) == tag.tag.value
