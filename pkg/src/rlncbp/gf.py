"""Arithmetic in GF(2^p) for 1 <= p <= 8.

Field elements are plain integers in ``[0, q)`` whose bits are polynomial
coefficients over GF(2).  :class:`FieldSpec` holds the reduction polynomial
and the lookup tables; every array-level routine in the package takes a
``FieldSpec`` and works on ``uint8``/``int64`` numpy arrays of such integers.
:class:`FieldElement` is a thin checked wrapper for scalar use.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "FieldSpec",
    "FieldElement",
    "FieldMismatchError",
    "add",
    "mul",
    "inv",
    "poly_mulmod",
    "is_irreducible",
    "default_poly",
    "get_field",
]


class FieldMismatchError(ValueError):
    """Operands belong to different fields."""


def _degree(a: int) -> int:
    return a.bit_length() - 1


def _poly_mod(a: int, m: int) -> int:
    dm = _degree(m)
    while a and _degree(a) >= dm:
        a ^= m << (_degree(a) - dm)
    return a


def poly_mulmod(a: int, b: int, poly: int) -> int:
    """Carry-less product of ``a`` and ``b`` reduced modulo ``poly``."""
    p = _degree(poly)
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> p & 1:
            a ^= poly
    return out


def is_irreducible(poly: int) -> bool:
    """Exhaustive trial division by every polynomial of degree 1..deg/2."""
    d = _degree(poly)
    if d < 1:
        return False
    for cand in range(2, 1 << (d // 2 + 1)):
        if _poly_mod(poly, cand) == 0:
            return False
    return True


@lru_cache(maxsize=None)
def default_poly(p: int) -> int:
    """Smallest irreducible polynomial of degree ``p`` (as a bit mask)."""
    for poly in range(1 << p, 1 << (p + 1)):
        if is_irreducible(poly):
            return poly
    raise AssertionError("unreachable: irreducibles exist for every degree")


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """GF(2^p) with a fixed reduction polynomial.

    Parameters
    ----------
    p : int
        Extension degree, 1..8.
    poly : int, optional
        Degree-``p`` irreducible polynomial as a bit mask
        (``0b10011`` is x^4 + x + 1).  Defaults to the smallest one.

    The log/antilog tables use the smallest primitive element as generator,
    so they are valid even when ``poly`` itself is not primitive
    (e.g. the default degree-8 polynomial 0x11B).
    """

    p: int
    poly: int | None = None
    q: int = field(init=False)
    generator: int = field(init=False)
    exp_table: np.ndarray = field(init=False, repr=False)
    log_table: np.ndarray = field(init=False, repr=False)
    mul_table: np.ndarray = field(init=False, repr=False)
    inv_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or not 1 <= self.p <= 8:
            raise ValueError(f"field exponent must be in 1..8, got {self.p!r}")
        p = int(self.p)
        poly = default_poly(p) if self.poly is None else int(self.poly)
        if _degree(poly) != p:
            raise ValueError(f"reduction polynomial {poly:#x} has degree {_degree(poly)}, expected {p}")
        if not is_irreducible(poly):
            raise ValueError(f"reduction polynomial {poly:#x} is reducible")
        q = 1 << p
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "poly", poly)
        object.__setattr__(self, "q", q)

        if p >= 4:
            gen, exp_t = self._find_generator(poly, q)
            log_t = np.zeros(q, dtype=np.int64)
            log_t[exp_t[: q - 1]] = np.arange(q - 1)
            # doubled antilog table avoids a modulo in the lookup
            exp2 = np.concatenate([exp_t, exp_t])
            logs = log_t[1:]
            mt = np.zeros((q, q), dtype=np.uint8)
            mt[1:, 1:] = exp2[logs[:, None] + logs[None, :]]
        else:
            gen, exp_t, log_t = 0, np.zeros(0, np.int64), np.zeros(0, np.int64)
            mt = np.array(
                [[poly_mulmod(a, b, poly) for b in range(q)] for a in range(q)],
                dtype=np.uint8,
            )
        inv_t = np.zeros(q, dtype=np.uint8)
        for a in range(1, q):
            inv_t[a] = int(np.flatnonzero(mt[a] == 1)[0])
        for arr in (exp_t, log_t, mt, inv_t):
            arr.setflags(write=False)
        object.__setattr__(self, "generator", gen)
        object.__setattr__(self, "exp_table", exp_t)
        object.__setattr__(self, "log_table", log_t)
        object.__setattr__(self, "mul_table", mt)
        object.__setattr__(self, "inv_table", inv_t)

    @staticmethod
    def _find_generator(poly: int, q: int) -> tuple[int, np.ndarray]:
        for g in range(2, q):
            seq = np.empty(q - 1, dtype=np.int64)
            x = 1
            for i in range(q - 1):
                seq[i] = x
                x = poly_mulmod(x, g, poly)
            if x == 1 and len(set(seq.tolist())) == q - 1:
                return g, seq
        # GF(2) has no element >= 2; p >= 4 never reaches here
        raise AssertionError("no primitive element found")

    def __eq__(self, other):
        return isinstance(other, FieldSpec) and (self.p, self.poly) == (other.p, other.poly)

    def __hash__(self):
        return hash((self.p, self.poly))

    def __repr__(self):
        return f"FieldSpec(p={self.p}, poly={self.poly:#x})"

    # scalar arithmetic on raw integers

    def _check(self, a) -> int:
        a = int(a)
        if not 0 <= a < self.q:
            raise ValueError(f"{a} is not an element of GF({self.q})")
        return a

    def add(self, a, b) -> int:
        return self._check(a) ^ self._check(b)

    def mul(self, a, b) -> int:
        a, b = self._check(a), self._check(b)
        if self.p >= 4:
            if a == 0 or b == 0:
                return 0
            return int(self.exp_table[(self.log_table[a] + self.log_table[b]) % (self.q - 1)])
        return poly_mulmod(a, b, self.poly)

    def inv(self, a) -> int:
        a = self._check(a)
        if a == 0:
            raise ZeroDivisionError("0 has no multiplicative inverse")
        return int(self.inv_table[a])

    def div(self, a, b) -> int:
        return self.mul(a, self.inv(b))

    # vectorised helpers

    def mul_arr(self, a, b) -> np.ndarray:
        return self.mul_table[np.asarray(a, dtype=np.intp), np.asarray(b, dtype=np.intp)]

    def matvec(self, A, x) -> np.ndarray:
        """``A @ x`` over the field for an (L, N) matrix and length-N vector."""
        A = np.asarray(A, dtype=np.intp)
        x = np.asarray(x, dtype=np.intp)
        if A.shape[-1] != x.shape[0]:
            raise ValueError(f"dimension mismatch: A is {A.shape}, x has length {x.shape[0]}")
        if A.shape[0] == 0:
            return np.zeros(0, dtype=np.uint8)
        prods = self.mul_table[A, x[None, :]]
        return np.bitwise_xor.reduce(prods, axis=1).astype(np.uint8)

    def element(self, value) -> "FieldElement":
        return FieldElement(self._check(value), self)


@lru_cache(maxsize=None)
def get_field(q: int, poly: int | None = None) -> FieldSpec:
    """Cached :class:`FieldSpec` for a field of size ``q``."""
    if q < 2 or q & (q - 1):
        raise ValueError(f"field size must be a power of two >= 2, got {q}")
    return FieldSpec(q.bit_length() - 1, poly)


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: FieldSpec

    def __post_init__(self):
        if not 0 <= self.value < self.field.q:
            raise ValueError(f"{self.value} is not an element of GF({self.field.q})")

    def _other(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise FieldMismatchError(f"{self.field!r} vs {other.field!r}")
            return other.value
        return self.field._check(other)

    def __add__(self, other):
        return FieldElement(self.value ^ self._other(other), self.field)

    __radd__ = __add__
    __sub__ = __add__
    __rsub__ = __add__

    def __mul__(self, other):
        return FieldElement(self.field.mul(self.value, self._other(other)), self.field)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return FieldElement(self.field.div(self.value, self._other(other)), self.field)

    def inverse(self) -> "FieldElement":
        return FieldElement(self.field.inv(self.value), self.field)

    def __int__(self):
        return self.value

    def __index__(self):
        return self.value


def add(a: FieldElement, b: FieldElement) -> FieldElement:
    return a + b


def mul(a: FieldElement, b: FieldElement) -> FieldElement:
    return a * b


def inv(a: FieldElement) -> FieldElement:
    return a.inverse()
