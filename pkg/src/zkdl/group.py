"""Ristretto255 group elements as 32-byte canonical encodings (via rbcl).

Only encodings that pass the canonical decode check are ever accepted
from outside; the identity is the all-zero encoding.
"""
from __future__ import annotations

import hashlib
from collections import Counter
from typing import Sequence

import rbcl

from .field import P

IDENTITY = bytes(32)
POINT_BYTES = 32

# running tally of group operations, read by the scaling tests
OPS: Counter = Counter()


class GroupError(ValueError):
    pass


def reset_ops() -> None:
    OPS.clear()


def is_valid(data: bytes) -> bool:
    return len(data) == POINT_BYTES and bool(
        rbcl.crypto_core_ristretto255_is_valid_point(bytes(data)))


def decode(data: bytes) -> bytes:
    data = bytes(data)
    if not is_valid(data):
        raise GroupError("invalid group element encoding")
    return data


def add(a: bytes, b: bytes) -> bytes:
    OPS["add"] += 1
    if a == IDENTITY:
        return b
    if b == IDENTITY:
        return a
    return rbcl.crypto_core_ristretto255_add(a, b)


def sub(a: bytes, b: bytes) -> bytes:
    OPS["add"] += 1
    if b == IDENTITY:
        return a
    return rbcl.crypto_core_ristretto255_sub(a, b)


def neg(a: bytes) -> bytes:
    return sub(IDENTITY, a) if a != IDENTITY else a


def smul(s: int, pt: bytes) -> bytes:
    s %= P
    if s == 0 or pt == IDENTITY:
        return IDENTITY
    OPS["exp"] += 1
    if s == 1:
        return pt
    return rbcl.crypto_scalarmult_ristretto255_allow_scalar_zero(
        s.to_bytes(32, "little"), pt)


def msm(scalars: Sequence[int], points: Sequence[bytes]) -> bytes:
    if len(scalars) != len(points):
        raise ValueError("msm length mismatch")
    acc = IDENTITY
    for s, pt in zip(scalars, points):
        s %= P
        if s == 0:
            continue
        acc = add(acc, smul(s, pt))
    return acc


def small_msm(values: Sequence[int], points: Sequence[bytes]) -> bytes:
    """Multi-scalar product for signed small-integer scalars (given mod P)."""
    acc = IDENTITY
    for v, pt in zip(values, points):
        if v == 0:
            continue
        if v == 1:
            acc = add(acc, pt)
        elif v == P - 1:
            acc = sub(acc, pt)
        elif v > P // 2:
            acc = sub(acc, smul(P - v, pt))
        else:
            acc = add(acc, smul(v, pt))
    return acc


def hash_to_group(data: bytes) -> bytes:
    pt = rbcl.crypto_core_ristretto255_from_hash(hashlib.sha512(data).digest())
    return pt


class SubsetSums:
    """Precomputed sums of every subset of 8 consecutive generators.

    Committing a 0/1 row then costs one lookup per 8 entries.
    """

    CHUNK = 8

    def __init__(self, gens: Sequence[bytes]):
        self.tables: list[list[bytes]] = []
        for start in range(0, len(gens), self.CHUNK):
            chunk = gens[start:start + self.CHUNK]
            table = [IDENTITY] * (1 << len(chunk))
            for mask in range(1, len(table)):
                low = mask & -mask
                table[mask] = add(table[mask ^ low], chunk[low.bit_length() - 1])
            self.tables.append(table)

    def bit_row(self, bits: Sequence[int]) -> bytes:
        acc = IDENTITY
        c = self.CHUNK
        for k, table in enumerate(self.tables):
            mask = 0
            for off, b in enumerate(bits[k * c:(k + 1) * c]):
                if b:
                    mask |= 1 << off
            if mask:
                acc = add(acc, table[mask])
        return acc
