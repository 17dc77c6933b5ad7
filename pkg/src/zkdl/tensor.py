"""Dense tensors over the field and their multilinear extensions.

A tensor with power-of-two dims (d_0, ..., d_k) is read as a function on
the boolean hypercube of log2(d_0) + ... + log2(d_k) variables.  Flat
row-major index bits are the variables, most significant bit first, so
the first variable splits the flat table into its two halves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .field import P


def next_pow2(n: int) -> int:
    if n < 1:
        raise ValueError("dimension must be positive")
    return 1 << (n - 1).bit_length()


def log2_exact(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"{n} is not a power of two")
    return n.bit_length() - 1


def index_bits(idx: int, nvars: int) -> list[int]:
    return [(idx >> (nvars - 1 - k)) & 1 for k in range(nvars)]


def beta_eval(a: Sequence[int], b: Sequence[int]) -> int:
    """Equality kernel prod_k (a_k b_k + (1 - a_k)(1 - b_k))."""
    if len(a) != len(b):
        raise ValueError("beta arguments differ in length")
    acc = 1
    for x, y in zip(a, b):
        acc = acc * (2 * x * y - x - y + 1) % P
    return acc


def beta_table(point: Sequence[int]) -> list[int]:
    """All values beta(point, x) for x on the hypercube, flat MSB-first."""
    table = [1]
    for u in point:
        u %= P
        nxt = [0] * (2 * len(table))
        for i, t in enumerate(table):
            hi = t * u % P
            nxt[2 * i] = (t - hi) % P
            nxt[2 * i + 1] = hi
        table = nxt
    return table


def fold_first_var(table: Sequence[int], r: int) -> list[int]:
    """(1 - r) * t(0, b) + r * t(1, b)."""
    n = len(table)
    if n < 2:
        raise ValueError("cannot fold a table with no variables")
    half = n // 2
    r %= P
    return [(lo + r * (hi - lo)) % P for lo, hi in zip(table[:half], table[half:])]


def mle_eval(table: Sequence[int], point: Sequence[int]) -> int:
    if len(table) != 1 << len(point):
        raise ValueError(f"table of size {len(table)} needs "
                         f"{log2_exact(len(table))} coordinates, got {len(point)}")
    t = list(table)
    for r in point:
        t = fold_first_var(t, r)
    return t[0] % P


def fix_variables(table: Sequence[int], nvars: int,
                  fixed: dict[int, int]) -> list[int]:
    """Bind the variables at the given positions; the rest keep their order."""
    if len(table) != 1 << nvars:
        raise ValueError("table size does not match variable count")
    t = list(table)
    # bind from the last position backwards so earlier positions stay valid
    for pos in sorted(fixed, reverse=True):
        r = fixed[pos] % P
        k = nvars - 1 - pos  # bit index inside the flat index
        low = 1 << k
        out = []
        for base in range(0, len(t), 2 * low):
            for off in range(low):
                lo = t[base + off]
                hi = t[base + low + off]
                out.append((lo + r * (hi - lo)) % P)
        t = out
        nvars -= 1
    return t


class DenseTensor:
    """Field tensor zero-padded to power-of-two dims."""

    __slots__ = ("data", "shape", "orig_shape")

    def __init__(self, data: list[int], shape: Sequence[int],
                 orig_shape: Sequence[int] | None = None):
        shape = tuple(shape)
        for d in shape:
            log2_exact(d)
        size = 1
        for d in shape:
            size *= d
        if len(data) != size:
            raise ValueError(f"data has {len(data)} entries, shape {shape} needs {size}")
        self.data = data
        self.shape = shape
        self.orig_shape = tuple(orig_shape) if orig_shape is not None else shape

    @classmethod
    def from_ints(cls, values, shape: Sequence[int] | None = None) -> "DenseTensor":
        """Build from nested sequences (or a numpy array) of signed ints."""
        if shape is None:
            shape = _infer_shape(values)
        shape = tuple(shape)
        flat = list(_flatten(values, len(shape)))
        padded = tuple(next_pow2(d) for d in shape)
        out = [0] * _prod(padded)
        strides = _strides(padded)
        for src, vals in enumerate(flat):
            idx = 0
            rem = src
            for dim in range(len(shape) - 1, -1, -1):
                rem, c = divmod(rem, shape[dim])
                idx += c * strides[dim]
            out[idx] = int(vals) % P
        return cls(out, padded, shape)

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "DenseTensor":
        padded = tuple(next_pow2(d) for d in shape)
        return cls([0] * _prod(padded), padded, shape)

    @property
    def nvars(self) -> int:
        return sum(log2_exact(d) for d in self.shape)

    @property
    def size(self) -> int:
        return len(self.data)

    def mle(self, point: Sequence[int]) -> int:
        return mle_eval(self.data, point)

    def get(self, *idx: int) -> int:
        flat = 0
        for i, d in zip(idx, self.shape):
            flat = flat * d + i
        return self.data[flat]

    def __eq__(self, other):
        return (isinstance(other, DenseTensor) and self.shape == other.shape
                and self.data == other.data)

    def __repr__(self):
        return f"DenseTensor(shape={self.orig_shape})"


class StackedTensor(DenseTensor):
    """N tensors of one shape stacked on a new leading axis (padded to 2^k)."""

    __slots__ = ("count",)

    def __init__(self, data, shape, orig_shape=None, count: int | None = None):
        super().__init__(data, shape, orig_shape)
        self.count = shape[0] if count is None else count

    @property
    def stack_vars(self) -> int:
        return log2_exact(self.shape[0])

    def slice(self, i: int) -> DenseTensor:
        inner = _prod(self.shape[1:])
        return DenseTensor(self.data[i * inner:(i + 1) * inner], self.shape[1:],
                           self.orig_shape[1:])


def stack(tensors: Sequence[DenseTensor]) -> StackedTensor:
    if not tensors:
        raise ValueError("cannot stack an empty list")
    shape = tensors[0].shape
    orig = tensors[0].orig_shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ValueError(f"shape mismatch in stack: {t.shape} vs {shape}")
    n = next_pow2(len(tensors))
    inner = _prod(shape)
    data: list[int] = []
    for t in tensors:
        data.extend(t.data)
    data.extend([0] * ((n - len(tensors)) * inner))
    return StackedTensor(data, (n,) + shape, (len(tensors),) + orig, len(tensors))


@dataclass
class EvalClaim:
    """Claim that the tensor named by target evaluates to value at point."""

    point: list[int]
    value: int
    target: str = ""
    meta: dict = field(default_factory=dict, compare=False)


def _prod(xs: Iterable[int]) -> int:
    out = 1
    for x in xs:
        out *= x
    return out


def _strides(shape: Sequence[int]) -> list[int]:
    out = [1] * len(shape)
    for i in range(len(shape) - 2, -1, -1):
        out[i] = out[i + 1] * shape[i + 1]
    return out


def _infer_shape(values) -> tuple[int, ...]:
    if hasattr(values, "shape"):
        return tuple(values.shape)
    shape = []
    v = values
    while isinstance(v, (list, tuple)):
        shape.append(len(v))
        v = v[0] if len(v) else None
    return tuple(shape)


def _flatten(values, depth: int):
    if hasattr(values, "ravel"):
        yield from values.ravel().tolist()
        return
    if depth == 0:
        yield values
        return
    for v in values:
        yield from _flatten(v, depth - 1)
