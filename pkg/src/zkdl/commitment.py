"""Square-root tensor commitments with a log-size evaluation argument.

A table of 2^v field elements is laid out as a matrix with 2^ceil(v/2)
rows and 2^floor(v/2) columns; each row gets its own Pedersen
commitment.  The first ceil(v/2) MLE coordinates select the row.

To open the MLE at u the verifier folds the row commitments with the
row-part beta weights, leaving a commitment to one combined row; an
inner-product argument then shows that row dotted with the column-part
beta weights equals the claimed value.
"""
from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from . import field, group
from .field import P
from .tensor import beta_table, log2_exact
from .transcript import Transcript
from .wire import EvaluationReject, MalformedProof, Reader, Writer


class BlindingRng:
    """Deterministic scalar stream from a seed; fresh OS randomness without one."""

    def __init__(self, seed: bytes | int | None = None):
        if seed is None:
            seed = secrets.token_bytes(32)
        elif isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=True)
        self._seed = hashlib.sha256(b"zkdl/v1/blinding" + seed).digest()
        self._ctr = 0

    def scalar(self) -> int:
        self._ctr += 1
        block = hashlib.sha512(self._seed + self._ctr.to_bytes(8, "big")).digest()
        return int.from_bytes(block, "little") % P

    def child(self, label: str) -> "BlindingRng":
        return BlindingRng(self._seed + label.encode())


class CommitKey:
    """Generators g_0..g_{n-1}, h, u derived from a public seed."""

    def __init__(self, seed: bytes, size: int):
        self.seed = bytes(seed)
        self.size = size
        self.gens = [_gen(self.seed, b"g", i) for i in range(size)]
        self.h = _gen(self.seed, b"h", 0)
        self.u = _gen(self.seed, b"u", 0)
        self._subsets: dict[int, group.SubsetSums] = {}

    @classmethod
    def derive(cls, seed: bytes, size: int) -> "CommitKey":
        return _cached_key(bytes(seed), size)

    def subset_sums(self, cols: int) -> group.SubsetSums:
        if cols not in self._subsets:
            self._subsets[cols] = group.SubsetSums(self.gens[:cols])
        return self._subsets[cols]


def _gen(seed: bytes, tag: bytes, i: int) -> bytes:
    return group.hash_to_group(b"zkdl/v1/generator" + tag + seed + i.to_bytes(8, "big"))


@lru_cache(maxsize=8)
def _cached_key(seed: bytes, size: int) -> CommitKey:
    return CommitKey(seed, size)


def layout(nvars: int) -> tuple[int, int]:
    """(row variables, column variables)."""
    return (nvars + 1) // 2, nvars // 2


@dataclass
class TensorCommitment:
    nvars: int
    rows: list[bytes]

    def to_bytes(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    def write(self, w: Writer):
        w.u8(self.nvars)
        for r in self.rows:
            w.point(r)

    @classmethod
    def read(cls, r: Reader) -> "TensorCommitment":
        nvars = r.u8()
        if nvars > 40:
            raise MalformedProof(f"commitment with {nvars} variables")
        n_rows = 1 << layout(nvars)[0]
        return cls(nvars, [r.point() for _ in range(n_rows)])

    def __add__(self, other: "TensorCommitment") -> "TensorCommitment":
        if self.nvars != other.nvars:
            raise ValueError("adding commitments of different shapes")
        return TensorCommitment(self.nvars, [group.add(a, b) for a, b in zip(self.rows, other.rows)])

    @property
    def n_bytes(self) -> int:
        return len(self.rows) * group.POINT_BYTES


@dataclass
class Opening:
    """Prover-side secret: the table and the per-row blinders."""

    table: list[int]
    blinders: list[int]

    def __add__(self, other: "Opening") -> "Opening":
        return Opening([(a + b) % P for a, b in zip(self.table, other.table)],
                       [(a + b) % P for a, b in zip(self.blinders, other.blinders)])


def commit(key: CommitKey, table: Sequence[int], rng: BlindingRng | None = None,
           hiding: bool = True) -> tuple[TensorCommitment, Opening]:
    nvars = log2_exact(len(table))
    row_vars, col_vars = layout(nvars)
    cols = 1 << col_vars
    if cols > key.size:
        raise ValueError(f"commit key has {key.size} generators, need {cols}")
    rng = rng or BlindingRng()
    gens = key.gens[:cols]
    is_bits = all(v == 0 or v == 1 for v in table)
    subsets = key.subset_sums(cols) if is_bits and cols >= 8 else None
    rows, blinders = [], []
    for r in range(1 << row_vars):
        row = table[r * cols:(r + 1) * cols]
        if subsets is not None:
            c = subsets.bit_row(row)
        else:
            c = group.small_msm(row, gens)
        rho = rng.scalar() if hiding else 0
        if rho:
            c = group.add(c, group.smul(rho, key.h))
        rows.append(c)
        blinders.append(rho)
    return TensorCommitment(nvars, rows), Opening(list(table), blinders)


@dataclass
class EvalProof:
    lefts: list[bytes]
    rights: list[bytes]
    nonce_commit: bytes
    z_value: int
    z_blind: int

    def write(self, w: Writer):
        w.u8(len(self.lefts))
        for a, b in zip(self.lefts, self.rights):
            w.point(a)
            w.point(b)
        w.point(self.nonce_commit)
        w.fe(self.z_value)
        w.fe(self.z_blind)

    @classmethod
    def read(cls, r: Reader) -> "EvalProof":
        n = r.u8()
        if n > 32:
            raise MalformedProof(f"evaluation proof with {n} rounds")
        lefts, rights = [], []
        for _ in range(n):
            lefts.append(r.point())
            rights.append(r.point())
        return cls(lefts, rights, r.point(), r.fe(), r.fe())

    def to_bytes(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "EvalProof":
        r = Reader(data, "evaluation proof")
        out = cls.read(r)
        r.done()
        return out

    @property
    def n_group_elements(self) -> int:
        return 2 * len(self.lefts) + 1


def _absorb_claim(tr: Transcript, com: TensorCommitment, point, value):
    tr.absorb("eval/com", com.to_bytes())
    tr.absorb_fields("eval/point", point)
    tr.absorb_field("eval/value", value)


def prove_eval(key: CommitKey, com: TensorCommitment, opening: Opening,
               point: Sequence[int], value: int, transcript: Transcript,
               rng: BlindingRng | None = None, hiding: bool = True) -> EvalProof:
    nvars = com.nvars
    if len(point) != nvars:
        raise ValueError(f"point has {len(point)} coordinates, commitment has {nvars}")
    row_vars, col_vars = layout(nvars)
    cols = 1 << col_vars
    rng = rng or BlindingRng()
    _absorb_claim(transcript, com, point, value)

    row_w = beta_table(point[:row_vars])
    a = [0] * cols
    table = opening.table
    for r, wr in enumerate(row_w):
        if wr == 0:
            continue
        base = r * cols
        for c in range(cols):
            v = table[base + c]
            if v:
                a[c] += wr * v
    a = [x % P for x in a]
    blind = sum(wr * rho for wr, rho in zip(row_w, opening.blinders)) % P
    b = beta_table(point[row_vars:])
    gens = list(key.gens[:cols])

    x0 = transcript.challenge_field("eval/x0")
    u = group.smul(x0, key.u)
    lefts, rights = [], []
    while len(a) > 1:
        half = len(a) // 2
        a_lo, a_hi = a[:half], a[half:]
        b_lo, b_hi = b[:half], b[half:]
        g_lo, g_hi = gens[:half], gens[half:]
        lam_l = rng.scalar() if hiding else 0
        lam_r = rng.scalar() if hiding else 0
        cl = sum(x * y for x, y in zip(a_lo, b_hi)) % P
        cr = sum(x * y for x, y in zip(a_hi, b_lo)) % P
        left = group.msm(a_lo + [cl, lam_l], g_hi + [u, key.h])
        right = group.msm(a_hi + [cr, lam_r], g_lo + [u, key.h])
        transcript.absorb("eval/lr", left + right)
        x = transcript.challenge_field("eval/x")
        if x == 0:
            raise ValueError("zero folding challenge")
        xi = field.inv(x)
        a = [(p * x + q * xi) % P for p, q in zip(a_lo, a_hi)]
        b = [(p * xi + q * x) % P for p, q in zip(b_lo, b_hi)]
        gens = [group.add(group.smul(xi, p), group.smul(x, q)) for p, q in zip(g_lo, g_hi)]
        blind = (blind + lam_l * x * x + lam_r * xi * xi) % P
        lefts.append(left)
        rights.append(right)

    # Schnorr proof of knowledge for the final scalar and blinder
    base = group.add(gens[0], group.smul(b[0], u))
    k1 = rng.scalar() if hiding else 0
    k2 = rng.scalar() if hiding else 0
    nonce = group.msm([k1, k2], [base, key.h])
    transcript.absorb("eval/nonce", nonce)
    e = transcript.challenge_field("eval/e")
    return EvalProof(lefts, rights, nonce, (k1 + e * a[0]) % P, (k2 + e * blind) % P)


def verify_eval(key: CommitKey, com: TensorCommitment, point: Sequence[int],
                value: int, proof: EvalProof, transcript: Transcript) -> bool:
    try:
        check_eval(key, com, point, value, proof, transcript)
    except EvaluationReject:
        return False
    return True


def check_eval(key: CommitKey, com: TensorCommitment, point: Sequence[int],
               value: int, proof: EvalProof, transcript: Transcript) -> None:
    nvars = com.nvars
    if len(point) != nvars:
        raise EvaluationReject("evaluation point has wrong dimension")
    row_vars, col_vars = layout(nvars)
    if len(com.rows) != 1 << row_vars:
        raise EvaluationReject("commitment row count does not match its shape")
    if len(proof.lefts) != col_vars or len(proof.rights) != col_vars:
        raise EvaluationReject("evaluation proof has wrong round count")
    cols = 1 << col_vars
    _absorb_claim(transcript, com, point, value)
    x0 = transcript.challenge_field("eval/x0")
    xs = []
    for left, right in zip(proof.lefts, proof.rights):
        transcript.absorb("eval/lr", left + right)
        x = transcript.challenge_field("eval/x")
        if x == 0:
            raise EvaluationReject("zero folding challenge")
        xs.append(x)
    transcript.absorb("eval/nonce", proof.nonce_commit)
    e = transcript.challenge_field("eval/e")

    xis = field.batch_inv(xs) if xs else []
    # s_i = prod_j x_j or x_j^-1 depending on bit j (MSB first) of i
    s = [1]
    for x, xi in zip(xs, xis):
        nxt = []
        for v in s:
            nxt.append(v * xi % P)
            nxt.append(v * x % P)
        s = nxt
    b = beta_table(point[row_vars:])
    b_final = sum(si * bi for si, bi in zip(s, b)) % P
    z1, z2 = proof.z_value, proof.z_blind

    scalars = [z1 * si % P for si in s]
    points = list(key.gens[:cols])
    scalars.append((z1 * b_final - e * value) * x0 % P)
    points.append(key.u)
    scalars.append(z2)
    points.append(key.h)
    row_w = beta_table(point[:row_vars])
    for wr, c in zip(row_w, com.rows):
        scalars.append(-e * wr % P)
        points.append(c)
    for x, xi, left, right in zip(xs, xis, proof.lefts, proof.rights):
        scalars.append(-e * x * x % P)
        points.append(left)
        scalars.append(-e * xi * xi % P)
        points.append(right)
    if group.msm(scalars, points) != proof.nonce_commit:
        raise EvaluationReject("evaluation proof does not verify")
