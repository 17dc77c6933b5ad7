"""Binary encoding helpers and the verification error hierarchy."""
from __future__ import annotations

import struct

from . import field, group


class VerificationError(Exception):
    kind = "reject"


class MalformedProof(VerificationError):
    kind = "malformed"


class TranscriptMismatch(VerificationError):
    kind = "transcript-mismatch"


class SumcheckReject(VerificationError):
    kind = "sumcheck-reject"


class EvaluationReject(VerificationError):
    kind = "evaluation-reject"


class Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u8(self, v: int):
        self.parts.append(struct.pack(">B", v))

    def u16(self, v: int):
        self.parts.append(struct.pack(">H", v))

    def u32(self, v: int):
        self.parts.append(struct.pack(">I", v))

    def raw(self, b: bytes):
        self.parts.append(bytes(b))

    def blob(self, b: bytes):
        self.u32(len(b))
        self.raw(b)

    def fe(self, v: int):
        self.parts.append(field.to_bytes(v))

    def fes(self, vs):
        self.u32(len(vs))
        for v in vs:
            self.fe(v)

    def point(self, pt: bytes):
        self.raw(pt)

    def points(self, pts):
        self.u32(len(pts))
        for p in pts:
            self.raw(p)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class Reader:
    def __init__(self, data: bytes, what: str = "proof"):
        self.data = memoryview(bytes(data))
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedProof(
                f"truncated {self.what}: need {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}")
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def fe(self) -> int:
        try:
            return field.from_bytes(self.take(field.BYTES))
        except field.FieldError as e:
            raise MalformedProof(f"{self.what}: {e} at offset {self.pos - 32}") from None

    def fes(self, limit: int = 1 << 20) -> list[int]:
        n = self.u32()
        if n > limit or n * field.BYTES > self.remaining():
            raise MalformedProof(f"{self.what}: bad element count {n}")
        return [self.fe() for _ in range(n)]

    def point(self) -> bytes:
        raw = self.take(group.POINT_BYTES)
        if not group.is_valid(raw):
            raise MalformedProof(f"{self.what}: invalid group element at offset {self.pos - 32}")
        return raw

    def points(self, limit: int = 1 << 20) -> list[bytes]:
        n = self.u32()
        if n > limit or n * group.POINT_BYTES > self.remaining():
            raise MalformedProof(f"{self.what}: bad point count {n}")
        return [self.point() for _ in range(n)]

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def done(self):
        if self.remaining():
            raise MalformedProof(f"{self.what}: {self.remaining()} trailing bytes")
