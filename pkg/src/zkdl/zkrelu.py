"""Bit-decomposition gadgets: zkReLU, and the plain rescale used elsewhere.

For each entry of a (Q+R)-bit signed tensor V the prover commits its two's
complement bits.  Three linear forms of those bits give back

    V         = bits . s_B
    round(V/2^k) = bits . s'_k       (half-up rounding)

and a booleanity check pins the bits to {0, 1}.  zkReLU uses two slices
(preactivation Z and incoming gradient G_A) and gates both rounded
outputs with the sign bit of Z.  The same code with one ungated slice
proves a rescale whose result feeds another relation.

Sumcheck variables: first the entry index i (stack axis included), then
the bit index j padded to a power of two.  Padding bits carry zero
weight.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .field import P, QuantOverflow, QuantParams
from .sumcheck import (RoundPolynomial, SumcheckProof, evaluate, evals_to_coeffs,
                       prove_product, verify_rounds)
from .tensor import EvalClaim, beta_eval, beta_table, index_bits, log2_exact, next_pow2
from .transcript import Transcript
from .wire import MalformedProof, Reader, SumcheckReject, Writer


# plain fixed-point semantics -------------------------------------------------

def relu_forward(z, r_bits: int):
    """1{z >= 0} * round(z / 2^r), elementwise for ints or numpy arrays."""
    half = 1 << (r_bits - 1)
    if isinstance(z, np.ndarray):
        return np.where(z >= 0, (z + half) >> r_bits, 0).astype(object)
    return (z + half) >> r_bits if z >= 0 else 0


def relu_backward(z, g_a, r_bits: int):
    """1{z >= 0} * round(g_a / 2^r)."""
    half = 1 << (r_bits - 1)
    if isinstance(z, np.ndarray):
        return np.where(z >= 0, (g_a + half) >> r_bits, 0).astype(object)
    return (g_a + half) >> r_bits if z >= 0 else 0


def decompose(v: int, width: int) -> list[int]:
    """Two's complement bits, least significant first."""
    if not -(1 << (width - 1)) <= v < (1 << (width - 1)):
        raise QuantOverflow(f"{v} does not fit in {width} signed bits")
    u = v & ((1 << width) - 1)
    return [(u >> k) & 1 for k in range(width)]


def value_weights(width: int, pad: int | None = None) -> list[int]:
    """s_B = (1, 2, ..., 2^(B-2), -2^(B-1)) as field elements."""
    pad = pad or width
    w = [(1 << k) for k in range(width - 1)] + [-(1 << (width - 1))]
    return [x % P for x in w] + [0] * (pad - width)


def round_weights(width: int, shift: int, pad: int | None = None) -> list[int]:
    """Weights that read round(V / 2^shift) off the bits of V."""
    if not 1 <= shift < width:
        raise ValueError("rescale shift must lie in [1, width)")
    pad = pad or width
    w = [0] * width
    w[shift - 1] = 1
    for k in range(shift, width - 1):
        w[k] = 1 << (k - shift)
    w[width - 1] = -(1 << (width - 1 - shift))
    return [x % P for x in w] + [0] * (pad - width)


def remainder_weights(shift: int, width: int, pad: int | None = None) -> list[int]:
    """Weights giving the signed remainder V - 2^shift * round(V / 2^shift)."""
    pad = pad or width
    w = [(1 << k) for k in range(shift - 1)] + [-(1 << (shift - 1))]
    return [x % P for x in w] + [0] * (pad - shift)


@dataclass
class AuxTensor:
    """Bits of Z (slice 0) and G_A (slice 1), entries x bits (padded)."""

    bits: list[list[list[int]]]
    width: int

    @property
    def table(self) -> list[int]:
        out: list[int] = []
        for sl in self.bits:
            for row in sl:
                out.extend(row)
        return out


def build_aux(z: Sequence[int], g_a: Sequence[int], qp: QuantParams) -> AuxTensor:
    """Bit tensor for one zkReLU instance; entries padded to a power of two."""
    if len(z) != len(g_a):
        raise ValueError("Z and G_A must have the same number of entries")
    pad = next_pow2(qp.width)
    n = next_pow2(len(z))
    slices = []
    for name, vals in (("Z", z), ("G_A", g_a)):
        rows = []
        for k, v in enumerate(vals):
            try:
                rows.append(decompose(int(v), qp.width) + [0] * (pad - qp.width))
            except QuantOverflow as e:
                raise QuantOverflow(f"{name}[{k}]: {e}") from None
        rows.extend([[0] * pad for _ in range(n - len(vals))])
        slices.append(rows)
    return AuxTensor(slices, qp.width)


def bits_table(values: Sequence[int], width: int) -> list[int]:
    """Flat (entries x padded bits) table for a one-slice rescale."""
    pad = next_pow2(width)
    out: list[int] = []
    for k, v in enumerate(values):
        try:
            out.extend(decompose(int(v), width))
        except QuantOverflow as e:
            raise QuantOverflow(f"entry {k}: {e}") from None
        out.extend([0] * (pad - width))
    return out


# proof ---------------------------------------------------------------------

@dataclass(frozen=True)
class GadgetShape:
    entry_vars: int        # log2 of the stacked entry count
    width: int             # signed bit width B
    shift: int             # rounding shift
    slices: int = 1
    gated: bool = False
    stack_vars: int = 0    # leading stack variables inside entry_vars

    @property
    def bit_vars(self) -> int:
        return log2_exact(next_pow2(self.width))

    @property
    def aux_vars(self) -> int:
        return self.entry_vars + self.bit_vars + (1 if self.slices == 2 else 0)


@dataclass
class GadgetClaim:
    point: list[int]
    value: int


@dataclass
class GadgetProof:
    main: SumcheckProof
    merge: SumcheckProof | None = None

    def write(self, w: Writer):
        self.main.write(w)
        w.u8(1 if self.merge is not None else 0)
        if self.merge is not None:
            self.merge.write(w)

    @classmethod
    def read(cls, r: Reader) -> "GadgetProof":
        main = SumcheckProof.read(r)
        flag = r.u8()
        if flag > 1:
            raise MalformedProof("bad gadget merge flag")
        return cls(main, SumcheckProof.read(r) if flag else None)

    def to_bytes(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GadgetProof":
        r = Reader(data, "gadget proof")
        out = cls.read(r)
        r.done()
        return out

    @property
    def n_field_elements(self) -> int:
        n = self.main.n_field_elements
        if self.merge is not None:
            n += self.merge.n_field_elements
        return n


def split_slices(aux_table: Sequence[int], shape: GadgetShape) -> list[list[int]]:
    """Aux is laid out (stack, slice, entry, bit); return per-slice (stack, entry, bit)."""
    if shape.slices == 1:
        return [list(aux_table)]
    inner = 1 << (shape.entry_vars - shape.stack_vars + shape.bit_vars)
    out = [[], []]
    for n in range(1 << shape.stack_vars):
        base = 2 * n * inner
        out[0].extend(aux_table[base:base + inner])
        out[1].extend(aux_table[base + inner:base + 2 * inner])
    return out


def _absorb_inputs(tr: Transcript, label: str, values: Sequence[GadgetClaim],
                   rounded: Sequence[GadgetClaim]) -> tuple[int, int]:
    for c in list(values) + list(rounded):
        tr.absorb_fields(f"{label}/pt", c.point)
        tr.absorb_field(f"{label}/val", c.value)
    r = tr.challenge_field(f"{label}/w")
    r2 = tr.challenge_field(f"{label}/w2")
    return r, r2


def _statement_coeffs(r: int) -> tuple[int, int]:
    """Weights of the value and rounded statements; booleanity gets 1."""
    return r * r % P, r


def _slice_weights(r2: int, slices: int) -> list[int]:
    return [1, r2][:slices]


def _check_claims(shape: GadgetShape, values, rounded):
    if len(values) != shape.slices or len(rounded) != shape.slices:
        raise ValueError("need one value claim and one rounded claim per slice")
    for c in list(values) + list(rounded):
        if len(c.point) != shape.entry_vars:
            raise ValueError("gadget claim point has the wrong length")


def prove_gadget(shape: GadgetShape, aux_table: Sequence[int],
                 values: Sequence[GadgetClaim], rounded: Sequence[GadgetClaim],
                 transcript: Transcript, label: str = "bits"
                 ) -> tuple[GadgetProof, EvalClaim]:
    _check_claims(shape, values, rounded)
    ni, nj = shape.entry_vars, shape.bit_vars
    bp = 1 << nj
    if len(aux_table) != 1 << shape.aux_vars:
        raise ValueError("aux table does not match the gadget shape")
    r, r2 = _absorb_inputs(transcript, label, values, rounded)
    u_bin = transcript.challenge_vector(f"{label}/ub", ni + nj)
    lam = _slice_weights(r2, shape.slices)
    s_val = value_weights(shape.width, bp)
    s_rnd = round_weights(shape.width, shape.shift, bp)

    auxs = split_slices(aux_table, shape)
    n_entries = 1 << ni
    # per-entry linear forms of the bits
    vals_i, rnds_i = [], []
    for a in auxs:
        vals_i.append([sum(map(int.__mul__, a[e * bp:(e + 1) * bp], s_val)) % P
                       for e in range(n_entries)])
        rnds_i.append([sum(map(int.__mul__, a[e * bp:(e + 1) * bp], s_rnd)) % P
                       for e in range(n_entries)])
    gate = [(1 - auxs[0][e * bp + shape.width - 1]) % P for e in range(n_entries)] \
        if shape.gated else None
    b_val = [beta_table(c.point) for c in values]
    b_rnd = [beta_table(c.point) for c in rounded]
    b_bin_i = beta_table(u_bin[:ni])
    b_bin_j = beta_table(u_bin[ni:])
    cv, cr = _statement_coeffs(r)
    coef_val = [l * cv % P for l in lam]
    coef_rnd = [l * cr % P for l in lam]

    rounds: list[RoundPolynomial] = []
    point: list[int] = []
    for _ in range(ni):
        evals = [0, 0, 0, 0]
        half = len(b_bin_i) // 2
        for s in range(shape.slices):
            _add_linear_products(evals, [b_val[s], vals_i[s]], half, coef_val[s])
            facs = [b_rnd[s], rnds_i[s]] + ([gate] if gate is not None else [])
            _add_linear_products(evals, facs, half, coef_rnd[s])
            _add_booleanity(evals, auxs[s], b_bin_i, b_bin_j, half, bp, lam[s])
        rp = RoundPolynomial.from_coeffs(evals_to_coeffs([e % P for e in evals]))
        transcript.absorb_fields(f"{label}/round", rp.sent)
        x = transcript.challenge_field(f"{label}/r")
        rounds.append(rp)
        point.append(x)
        b_val = [_fold(t, x) for t in b_val]
        b_rnd = [_fold(t, x) for t in b_rnd]
        vals_i = [_fold(t, x) for t in vals_i]
        rnds_i = [_fold(t, x) for t in rnds_i]
        if gate is not None:
            gate = _fold(gate, x)
        b_bin_i = _fold(b_bin_i, x)
        auxs = [_fold(t, x) for t in auxs]

    # second phase over the bit index: tables of length bp
    g = gate[0] if gate is not None else 1
    tables = list(auxs) + [s_val, s_rnd, b_bin_j]
    iv, ir, ib = shape.slices, shape.slices + 1, shape.slices + 2
    terms = []
    for s in range(shape.slices):
        terms.append((coef_val[s] * b_val[s][0] % P, [s, iv]))
        terms.append((coef_rnd[s] * b_rnd[s][0] * g % P, [s, ir]))
        cb = lam[s] * b_bin_i[0] % P
        terms.append((cb, [ib, s, s]))
        terms.append(((-cb) % P, [ib, s]))
    rounds2, point2, finals = prove_product(tables, terms, [3] * nj, transcript, label)
    rounds += rounds2
    point += point2

    terminal = [finals[s] for s in range(shape.slices)]
    if shape.gated:
        terminal.append((1 - g) % P)
    main = SumcheckProof(rounds, terminal)
    v_i, w_j = point[:ni], point[ni:]
    if len(terminal) == 1:
        return GadgetProof(main), EvalClaim(v_i + w_j, terminal[0], "aux")

    # fold the slice/bit evaluations into one claim on the aux tensor
    sign_pt = index_bits(shape.width - 1, nj)
    merge_tab = [v for s in range(shape.slices) for v in auxs[s]]
    if shape.slices == 1:
        merge_tab += [0] * bp
    rho = _merge_challenge(transcript, label, terminal)
    weight = _merge_weights(rho, w_j, sign_pt, nj, shape)
    mrounds, mpoint, mfinals = prove_product([weight, merge_tab], [(1, [0, 1])],
                                             [2] * (nj + 1), transcript, f"{label}/m")
    merge = SumcheckProof(mrounds, [mfinals[1]])
    return GadgetProof(main, merge), EvalClaim(_aux_point(shape, v_i, mpoint), mfinals[1], "aux")


def verify_gadget(shape: GadgetShape, values: Sequence[GadgetClaim],
                  rounded: Sequence[GadgetClaim], proof: GadgetProof,
                  transcript: Transcript, label: str = "bits") -> EvalClaim:
    try:
        _check_claims(shape, values, rounded)
    except ValueError as e:
        raise SumcheckReject(str(e)) from None
    ni, nj = shape.entry_vars, shape.bit_vars
    bp = 1 << nj
    n_term = shape.slices + (1 if shape.gated else 0)
    main = proof.main
    if len(main.terminal) != n_term:
        raise SumcheckReject("gadget proof has the wrong number of terminal values")
    needs_merge = n_term > 1
    if needs_merge != (proof.merge is not None):
        raise SumcheckReject("gadget merge section missing or unexpected")
    r, r2 = _absorb_inputs(transcript, label, values, rounded)
    u_bin = transcript.challenge_vector(f"{label}/ub", ni + nj)
    lam = _slice_weights(r2, shape.slices)
    cv, cr = _statement_coeffs(r)
    claim = 0
    for s in range(shape.slices):
        claim += lam[s] * (cv * values[s].value + cr * rounded[s].value)
    claim %= P
    point, final = verify_rounds(main.rounds, claim, [3] * (ni + nj), transcript, label)
    v_i, w_j = point[:ni], point[ni:]
    s_val = value_weights(shape.width, bp)
    s_rnd = round_weights(shape.width, shape.shift, bp)
    bw = beta_table(w_j)
    sv = sum(a * b for a, b in zip(s_val, bw)) % P
    sr = sum(a * b for a, b in zip(s_rnd, bw)) % P
    bb = beta_eval(u_bin, point)
    g = (1 - main.terminal[-1]) % P if shape.gated else 1
    expected = 0
    for s in range(shape.slices):
        a = main.terminal[s]
        expected += lam[s] * (cv * beta_eval(values[s].point, v_i) * a * sv
                              + cr * beta_eval(rounded[s].point, v_i) * g * a * sr
                              + bb * (a * a - a))
    if expected % P != final:
        raise SumcheckReject("gadget terminal check failed")
    if not needs_merge:
        return EvalClaim(v_i + w_j, main.terminal[0], "aux")

    sign_pt = index_bits(shape.width - 1, nj)
    rho = _merge_challenge(transcript, label, main.terminal)
    rhos = [1, rho, rho * rho % P]
    total = sum(c * t for c, t in zip(rhos, main.terminal)) % P
    mpoint, mfinal = verify_rounds(proof.merge.rounds, total, [2] * (nj + 1),
                                   transcript, f"{label}/m")
    if len(proof.merge.terminal) != 1:
        raise SumcheckReject("merge proof carries one terminal value")
    wgt = _merge_weight_at(rho, w_j, sign_pt, mpoint, shape)
    if wgt * proof.merge.terminal[0] % P != mfinal:
        raise SumcheckReject("aux merge terminal check failed")
    return EvalClaim(_aux_point(shape, v_i, mpoint), proof.merge.terminal[0], "aux")


def _merge_challenge(tr: Transcript, label: str, terminal) -> int:
    tr.absorb_fields(f"{label}/term", terminal)
    return tr.challenge_field(f"{label}/rho")


def _merge_targets(rho: int, w_j, sign_pt, shape):
    """(coefficient, slice, bit point) for each claim being merged."""
    out = [(1, 0, list(w_j))]
    if shape.slices == 2:
        out.append((rho, 1, list(w_j)))
    if shape.gated:
        out.append((rho * rho % P if shape.slices == 2 else rho, 0, list(sign_pt)))
    return out


def _merge_weights(rho, w_j, sign_pt, nj, shape) -> list[int]:
    bp = 1 << nj
    weight = [0] * (2 * bp)
    for c, s, pt in _merge_targets(rho, w_j, sign_pt, shape):
        bt = beta_table(pt)
        for j in range(bp):
            weight[s * bp + j] = (weight[s * bp + j] + c * bt[j]) % P
    return weight


def _merge_weight_at(rho, w_j, sign_pt, mpoint, shape) -> int:
    s_pt, j_pt = mpoint[0], mpoint[1:]
    acc = 0
    for c, s, pt in _merge_targets(rho, w_j, sign_pt, shape):
        sel = s_pt if s == 1 else (1 - s_pt)
        acc += c * sel * beta_eval(pt, j_pt)
    return acc % P


def _aux_point(shape: GadgetShape, v_i, mpoint) -> list[int]:
    """Point on the (stack, slice, entry, bit) aux layout."""
    sv = shape.stack_vars
    return list(v_i[:sv]) + [mpoint[0]] + list(v_i[sv:]) + list(mpoint[1:])


def _fold(t: list[int], r: int) -> list[int]:
    half = len(t) // 2
    return [(lo + r * (hi - lo)) % P for lo, hi in zip(t[:half], t[half:])]


def _add_linear_products(evals: list[int], factors: Sequence[Sequence[int]], half: int,
                         coef: int):
    """evals[x] += coef * sum_p prod_f (lo_f + x (hi_f - lo_f)) for x = 0..3."""
    if coef == 0:
        return
    ext = []
    for f in factors:
        lo, hi = f[:half], f[half:]
        d = [h - l for l, h in zip(lo, hi)]
        v2 = [h + e for h, e in zip(hi, d)]
        v3 = [a + e for a, e in zip(v2, d)]
        ext.append((lo, hi, v2, v3))
    for x in range(4):
        cols = [e[x] for e in ext]
        if len(cols) == 2:
            s = sum(map(int.__mul__, cols[0], cols[1]))
        else:
            prod = [a * b % P for a, b in zip(cols[0], cols[1])]
            s = sum(map(int.__mul__, prod, cols[2]))
        evals[x] += coef * s


def _add_booleanity(evals: list[int], aux: list[int], b_i: list[int], b_j: list[int],
                    half: int, bp: int, coef: int):
    """evals[x] += coef * sum_p b_i(x) sum_j b_j (a(x,j)^2 - a(x,j))."""
    n = half * bp
    lo, hi = aux[:n], aux[n:]
    # per entry: a(x) = lo + x d, a^2 - a = (lo^2 - lo) + x d (2 lo - 1) + x^2 d^2
    d = list(map(int.__sub__, hi, lo))
    e0 = [l * (l - 1) for l in lo]
    e1 = [x * (2 * l - 1) for x, l in zip(d, lo)]
    e2 = [x * x for x in d]
    a0, a1, a2 = ([sum(map(int.__mul__, b_j, e[p * bp:(p + 1) * bp])) % P for p in range(half)]
                  for e in (e0, e1, e2))
    bl, bh = b_i[:half], b_i[half:]
    bd = [h - l for l, h in zip(bl, bh)]
    c0 = sum(map(int.__mul__, bl, a0))
    c1 = sum(map(int.__mul__, bl, a1)) + sum(map(int.__mul__, bd, a0))
    c2 = sum(map(int.__mul__, bl, a2)) + sum(map(int.__mul__, bd, a1))
    c3 = sum(map(int.__mul__, bd, a2))
    coeffs = [c0 % P, c1 % P, c2 % P, c3 % P]
    for x in range(4):
        evals[x] += coef * evaluate(coeffs, x)


# zkReLU wrappers ---------------------------------------------------------

@dataclass
class ReluClaims:
    """Evaluation claims on Z, A, G_A, G_Z over the stacked entry index."""

    z: GadgetClaim
    a: GadgetClaim
    g_a: GadgetClaim
    g_z: GadgetClaim


def relu_shape(entry_vars: int, qp: QuantParams, stack_vars: int = 0) -> GadgetShape:
    return GadgetShape(entry_vars, qp.width, qp.r_bits, slices=2, gated=True,
                       stack_vars=stack_vars)


def prove_zkrelu_sumcheck(aux_table: Sequence[int], claims: ReluClaims, qp: QuantParams,
                          transcript: Transcript, entry_vars: int, stack_vars: int = 0,
                          label: str = "relu") -> tuple[GadgetProof, EvalClaim]:
    shape = relu_shape(entry_vars, qp, stack_vars)
    return prove_gadget(shape, aux_table, [claims.z, claims.g_a], [claims.a, claims.g_z],
                        transcript, label)


def verify_zkrelu_sumcheck(claims: ReluClaims, proof: GadgetProof, qp: QuantParams,
                           transcript: Transcript, entry_vars: int, stack_vars: int = 0,
                           label: str = "relu") -> EvalClaim:
    shape = relu_shape(entry_vars, qp, stack_vars)
    return verify_gadget(shape, [claims.z, claims.g_a], [claims.a, claims.g_z], proof,
                         transcript, label)
