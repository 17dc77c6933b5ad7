"""Prime field arithmetic and fixed-point quantization.

Field elements are plain Python ints kept in [0, P).  The modulus is the
order of the Ristretto255 group so the same scalars drive commitments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_FLOOR, Decimal

P = 2**252 + 27742317777372353535851937790883648493
BYTES = 32


class FieldError(ValueError):
    pass


class QuantOverflow(OverflowError):
    """A fixed-point value left its permitted bit range."""


def add(a: int, b: int) -> int:
    return (a + b) % P


def sub(a: int, b: int) -> int:
    return (a - b) % P


def mul(a: int, b: int) -> int:
    return a * b % P


def neg(a: int) -> int:
    return -a % P


def inv(a: int) -> int:
    a %= P
    if a == 0:
        raise ZeroDivisionError("inverse of zero field element")
    return pow(a, P - 2, P)


def batch_inv(values: list[int]) -> list[int]:
    """Montgomery's trick; every input must be nonzero."""
    prefix = [1] * (len(values) + 1)
    for i, v in enumerate(values):
        if v % P == 0:
            raise ZeroDivisionError("inverse of zero field element")
        prefix[i + 1] = prefix[i] * v % P
    acc = inv(prefix[-1])
    out = [0] * len(values)
    for i in range(len(values) - 1, -1, -1):
        out[i] = acc * prefix[i] % P
        acc = acc * values[i] % P
    return out


def to_bytes(a: int) -> bytes:
    return (a % P).to_bytes(BYTES, "little")


def from_bytes(data: bytes) -> int:
    if len(data) != BYTES:
        raise FieldError(f"field element needs {BYTES} bytes, got {len(data)}")
    v = int.from_bytes(data, "little")
    if v >= P:
        raise FieldError("non-canonical field encoding")
    return v


def from_uniform_bytes(data: bytes) -> int:
    # used for challenges; 64 bytes keeps the reduction bias negligible
    return int.from_bytes(data, "little") % P


class FieldElement:
    """Thin wrapper for callers that prefer operators over int helpers."""

    __slots__ = ("v",)

    def __init__(self, v: int):
        self.v = v % P

    def __add__(self, o):
        return FieldElement(self.v + _val(o))

    __radd__ = __add__

    def __sub__(self, o):
        return FieldElement(self.v - _val(o))

    def __rsub__(self, o):
        return FieldElement(_val(o) - self.v)

    def __mul__(self, o):
        return FieldElement(self.v * _val(o))

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(-self.v)

    def __truediv__(self, o):
        return FieldElement(self.v * inv(_val(o)))

    def inv(self) -> "FieldElement":
        return FieldElement(inv(self.v))

    def __eq__(self, o):
        if isinstance(o, (FieldElement, int)):
            return self.v == _val(o) % P
        return NotImplemented

    def __hash__(self):
        return hash(self.v)

    def __int__(self):
        return self.v

    def __repr__(self):
        return f"FieldElement({self.v})"

    def to_bytes(self) -> bytes:
        return to_bytes(self.v)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FieldElement":
        return cls(from_bytes(data))


def _val(o) -> int:
    return o.v if isinstance(o, FieldElement) else o


# fixed point -----------------------------------------------------------

@dataclass(frozen=True)
class QuantParams:
    """R fractional bits, Q further bits; Q + R is the signed width."""

    q_bits: int = 16
    r_bits: int = 16

    def __post_init__(self):
        if self.q_bits < 1 or self.r_bits < 1:
            raise ValueError("q_bits and r_bits must be positive")
        if self.q_bits + self.r_bits > 62:
            raise ValueError("q_bits + r_bits must not exceed 62")

    @property
    def width(self) -> int:
        return self.q_bits + self.r_bits

    @property
    def bound(self) -> int:
        return 1 << (self.width - 1)

    def check(self, v: int, what: str = "value") -> int:
        if not -self.bound <= v < self.bound:
            raise QuantOverflow(
                f"{what}={v} outside signed {self.width}-bit range")
        return v


def embed(v: int, width: int | None = None) -> int:
    """Signed integer to field element (negatives wrap to P - |v|)."""
    if width is not None and not -(1 << width) < v < (1 << width):
        raise QuantOverflow(f"{v} does not fit in {width} bits")
    return v % P


def lift(a: int) -> int:
    """Inverse of embed for elements that encode small signed integers."""
    a %= P
    return a if a <= P // 2 else a - P


def quantize(x: float, r_bits: int, width: int | None = None) -> int:
    """round(x * 2^r) with ties away from minus infinity (half-up)."""
    if not math.isfinite(x):
        raise QuantOverflow(f"cannot quantize {x}")
    scaled = Decimal(x) * (1 << r_bits)
    v = int((scaled + Decimal("0.5")).to_integral_value(rounding=ROUND_FLOOR))
    if width is not None and not -(1 << (width - 1)) <= v < (1 << (width - 1)):
        raise QuantOverflow(f"quantize({x}) = {v} overflows {width} bits")
    return v


def dequantize(v: int, r_bits: int) -> float:
    return v / (1 << r_bits)


def round_shift(v: int, shift: int) -> int:
    """floor(v / 2^shift + 1/2)."""
    if shift == 0:
        return v
    return (v + (1 << (shift - 1))) >> shift


def round_rescale(v: int, shift: int) -> tuple[int, int]:
    """Split v = 2^shift * q + rem with rem in [-2^(shift-1), 2^(shift-1))."""
    q = round_shift(v, shift)
    return q, v - (q << shift)


__all__ = [
    "P", "BYTES", "FieldError", "QuantOverflow", "FieldElement", "QuantParams",
    "add", "sub", "mul", "neg", "inv", "batch_inv", "to_bytes", "from_bytes",
    "from_uniform_bytes", "embed", "lift", "quantize", "dequantize",
    "round_shift", "round_rescale",
]
