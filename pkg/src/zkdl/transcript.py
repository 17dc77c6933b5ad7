"""Fiat-Shamir transcript over SHA-256.

Every absorb frames its label and payload with 8-byte big-endian lengths,
so concatenated payloads cannot collide with split ones.  A challenge
hashes the state, expands to 64 bytes, reduces mod P, and is absorbed
back so consecutive challenges differ.
"""
from __future__ import annotations

import hashlib

from . import field

PREFIX = "zkdl/v1/"
MAX_LABEL = 32


def _check_label(label: str) -> bytes:
    if not label.startswith(PREFIX):
        label = PREFIX + label
    raw = label.encode("ascii")
    if len(raw) > MAX_LABEL:
        raise ValueError(f"transcript label longer than {MAX_LABEL} bytes: {label!r}")
    return raw


def _frame(data: bytes) -> bytes:
    return len(data).to_bytes(8, "big") + data


class Transcript:
    def __init__(self, domain: str = "main"):
        self._h = hashlib.sha256()
        self._h.update(_frame(_check_label(domain)))

    def absorb(self, label: str, data: bytes) -> None:
        self._h.update(b"A" + _frame(_check_label(label)) + _frame(bytes(data)))

    def absorb_field(self, label: str, value: int) -> None:
        self.absorb(label, field.to_bytes(value))

    def absorb_fields(self, label: str, values) -> None:
        self.absorb(label, b"".join(field.to_bytes(v) for v in values))

    def challenge_bytes(self, label: str, n: int = 64) -> bytes:
        self._h.update(b"C" + _frame(_check_label(label)))
        seed = self._h.digest()
        out = b""
        counter = 0
        while len(out) < n:
            out += hashlib.sha256(seed + counter.to_bytes(4, "big")).digest()
            counter += 1
        out = out[:n]
        self._h.update(_frame(out))
        return out

    def challenge_field(self, label: str) -> int:
        return field.from_uniform_bytes(self.challenge_bytes(label, 64))

    def challenge_vector(self, label: str, n: int) -> list[int]:
        return [self.challenge_field(f"{label}/{i}") for i in range(n)]

    def state_digest(self) -> bytes:
        return self._h.copy().digest()

    def fork(self) -> "Transcript":
        t = Transcript.__new__(Transcript)
        t._h = self._h.copy()
        return t
