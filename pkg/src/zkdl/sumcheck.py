"""Sumcheck over products of multilinear tables.

The prover holds tables over a common hypercube and a claimed sum of
sum_t c_t * prod_{k in term t} table_k.  Each round it sends the round
univariate as coefficients with the linear coefficient left out; the
verifier restores it from the running claim, so a degree-d round costs
d field elements.

An optional equality prefix beta(w, x_0..x_{m-1}) over the first
variables is never put in a table.  For those rounds the prover sends
f_t with g_t(X) = beta(w_t, X) * f_t(X), and the verifier applies the
beta factor itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

from . import field
from .field import P
from .tensor import beta_eval, beta_table
from .transcript import Transcript
from .wire import MalformedProof, Reader, SumcheckReject, Writer

CHUNK = 2048
MAX_DEGREE = 16


@dataclass
class RoundPolynomial:
    """Round univariate; `sent` holds c_0, c_2, ..., c_d."""

    degree: int
    sent: list[int]

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[int]) -> "RoundPolynomial":
        d = len(coeffs) - 1
        return cls(d, [coeffs[0]] + list(coeffs[2:]))

    def coeffs(self, claim: int, eq_w: int | None = None) -> list[int]:
        c0 = self.sent[0]
        rest = self.sent[1:]
        tail = sum(rest) % P
        if eq_w is None:
            c1 = (claim - 2 * c0 - tail) % P
        else:
            # (1 - w) g(0) + w g(1) = claim
            if eq_w % P == 0:
                raise SumcheckReject("degenerate equality challenge")
            c1 = ((claim - c0) * field.inv(eq_w) - tail) % P
        return [c0, c1] + rest


def evaluate(coeffs: Sequence[int], x: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % P
    return acc


@dataclass
class SumcheckProof:
    rounds: list[RoundPolynomial]
    terminal: list[int] = dc_field(default_factory=list)

    def write(self, w: Writer):
        w.u16(len(self.rounds))
        for rp in self.rounds:
            w.u8(rp.degree)
            for c in rp.sent:
                w.fe(c)
        w.u16(len(self.terminal))
        for v in self.terminal:
            w.fe(v)

    @classmethod
    def read(cls, r: Reader) -> "SumcheckProof":
        n = r.u16()
        rounds = []
        for _ in range(n):
            d = r.u8()
            if d < 1 or d > MAX_DEGREE:
                raise MalformedProof(f"round polynomial of degree {d}")
            rounds.append(RoundPolynomial(d, [r.fe() for _ in range(d)]))
        m = r.u16()
        return cls(rounds, [r.fe() for _ in range(m)])

    def to_bytes(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SumcheckProof":
        r = Reader(data, "sumcheck proof")
        out = cls.read(r)
        r.done()
        return out

    @property
    def n_field_elements(self) -> int:
        return sum(len(rp.sent) for rp in self.rounds) + len(self.terminal)


@lru_cache(maxsize=None)
def _interp_matrix(d: int) -> tuple[tuple[int, ...], ...]:
    """Rows map evaluations at 0..d to the coefficient of x^row."""
    # invert the Vandermonde matrix exactly over the rationals
    n = d + 1
    mat = [[Fraction(x) ** k for k in range(n)] + [Fraction(int(i == x)) for i in range(n)]
           for x in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if mat[r][col] != 0)
        mat[col], mat[piv] = mat[piv], mat[col]
        pv = mat[col][col]
        mat[col] = [v / pv for v in mat[col]]
        for r in range(n):
            if r != col and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [a - f * b for a, b in zip(mat[r], mat[col])]
    out = []
    for k in range(n):
        row = []
        for x in range(n):
            fr = mat[k][n + x]
            row.append(fr.numerator * field.inv(fr.denominator) % P)
        out.append(tuple(row))
    return tuple(out)


def evals_to_coeffs(evals: Sequence[int]) -> list[int]:
    m = _interp_matrix(len(evals) - 1)
    return [sum(a * e for a, e in zip(row, evals)) % P for row in m]


# prover ----------------------------------------------------------------

Term = tuple[int, Sequence[int]]


def _round_evals(tables: list[list[int]], terms: Sequence[Term], degree: int,
                 eq_rest: list[int] | None, eq_shift: int) -> list[int]:
    half = len(tables[0]) // 2
    used = sorted({k for _, ks in terms for k in ks})
    totals = [0] * (degree + 1)
    for start in range(0, half, CHUNK):
        stop = min(half, start + CHUNK)
        ext: dict[int, list[list[int]]] = {}
        for k in used:
            t = tables[k]
            lo = t[start:stop]
            hi = t[half + start:half + stop]
            diff = [h - l for l, h in zip(lo, hi)]
            vals = [lo, hi]
            for _ in range(2, degree + 1):
                vals.append([c + d for c, d in zip(vals[-1], diff)])
            ext[k] = vals
        weight = None
        if eq_rest is not None:
            weight = [eq_rest[p >> eq_shift] for p in range(start, stop)]
        for x in range(degree + 1):
            acc = 0
            for coef, ks in terms:
                if not ks:
                    s = (stop - start) if weight is None else sum(weight)
                    acc += coef * s
                    continue
                cols = [ext[k][x] for k in ks]
                if weight is not None:
                    cols.append(weight)
                if len(cols) == 1:
                    s = sum(cols[0])
                elif len(cols) == 2:
                    s = sum(map(int.__mul__, cols[0], cols[1]))
                else:
                    prod = [a * b % P for a, b in zip(cols[0], cols[1])]
                    for c in cols[2:-1]:
                        prod = [a * b % P for a, b in zip(prod, c)]
                    s = sum(map(int.__mul__, prod, cols[-1]))
                acc += coef * s
            totals[x] = (totals[x] + acc) % P
    return totals


def fold_tables(tables: list[list[int]], r: int) -> list[list[int]]:
    out = []
    for t in tables:
        half = len(t) // 2
        out.append([(lo + r * (hi - lo)) % P for lo, hi in zip(t[:half], t[half:])])
    return out


def prove_product(tables: list[list[int]], terms: Sequence[Term], degrees: Sequence[int],
                  transcript: Transcript, label: str = "sc",
                  eq_point: Sequence[int] = ()) -> tuple[list[RoundPolynomial], list[int], list[int]]:
    """Run all rounds; returns (round polys, challenge point, final table values)."""
    nvars = len(degrees)
    if any(len(t) != 1 << nvars for t in tables):
        raise ValueError("tables do not match the variable count")
    tables = [list(t) for t in tables]
    rounds, point = [], []
    m = len(eq_point)
    for rnd in range(nvars):
        d = degrees[rnd]
        if rnd < m:
            eq_rest = beta_table(eq_point[rnd + 1:])
            shift = nvars - m
        else:
            eq_rest, shift = None, 0
        evals = _round_evals(tables, terms, d, eq_rest, shift)
        rp = RoundPolynomial.from_coeffs(evals_to_coeffs(evals))
        transcript.absorb_fields(f"{label}/round", rp.sent)
        r = transcript.challenge_field(f"{label}/r")
        point.append(r)
        rounds.append(rp)
        tables = fold_tables(tables, r)
    return rounds, point, [t[0] for t in tables]


def verify_rounds(rounds: Sequence[RoundPolynomial], claim: int, degrees: Sequence[int],
                  transcript: Transcript, label: str = "sc",
                  eq_point: Sequence[int] = ()) -> tuple[list[int], int]:
    """Replay the rounds; returns (challenge point, final claim) still to be checked."""
    if len(rounds) != len(degrees):
        raise SumcheckReject(f"expected {len(degrees)} rounds, got {len(rounds)}")
    point = []
    for rnd, (rp, d) in enumerate(zip(rounds, degrees)):
        if rp.degree != d or len(rp.sent) != d:
            raise SumcheckReject(f"round {rnd}: degree {rp.degree} where {d} expected")
        w = eq_point[rnd] if rnd < len(eq_point) else None
        coeffs = rp.coeffs(claim, w)
        transcript.absorb_fields(f"{label}/round", rp.sent)
        r = transcript.challenge_field(f"{label}/r")
        point.append(r)
        claim = evaluate(coeffs, r)
    return point, claim


def term_degrees(nvars: int, depends: Sequence[Sequence[bool]], terms: Sequence[Term]) -> list[int]:
    """Per-variable degree bound from which tables depend on which variable."""
    out = []
    for v in range(nvars):
        d = 1
        for _, ks in terms:
            d = max(d, sum(1 for k in ks if depends[k][v]))
        out.append(d)
    return out


# plain sumcheck over one table ----------------------------------------------

def prove_sumcheck(table: Sequence[int], claim: int, transcript: Transcript,
                   label: str = "sc") -> SumcheckProof:
    """Prove sum_x f(x) = claim; the proof ends with the claimed f(r)."""
    nvars = (len(table) - 1).bit_length()
    if len(table) != 1 << nvars:
        raise ValueError("table size must be a power of two")
    transcript.absorb_field(f"{label}/claim", claim)
    rounds, _, finals = prove_product([list(table)], [(1, [0])], [1] * nvars, transcript, label)
    return SumcheckProof(rounds, finals)


def verify_sumcheck(claim: int, proof: SumcheckProof, nvars: int, transcript: Transcript,
                    degree: int = 1, label: str = "sc") -> tuple[list[int], int]:
    """Check the rounds; returns (terminal point, terminal value f(r)).

    The caller still has to check the terminal value against the table.
    """
    if len(proof.terminal) != 1:
        raise SumcheckReject("plain sumcheck carries one terminal value")
    transcript.absorb_field(f"{label}/claim", claim)
    point, final = verify_rounds(proof.rounds, claim, [degree] * nvars, transcript, label)
    if final != proof.terminal[0]:
        raise SumcheckReject("terminal value does not match the last round")
    return point, proof.terminal[0]


__all__ = [
    "RoundPolynomial", "SumcheckProof", "evaluate", "evals_to_coeffs", "prove_product",
    "verify_rounds", "term_degrees", "prove_sumcheck", "verify_sumcheck", "fold_tables",
    "beta_eval",
]
