"""Batched tensor-operation sumchecks over stacked tensors.

An operation family is described by OpSpec: output variables i, summed
variables j, and for each input the order of its inner MLE variables:

    Y(n, i) = sum_j  sum_t c_t prod_{k in t} X_k(n, i_{I_k}, j_{J_k})

Every input carries the same leading stack axis n.  Two proof shapes
are offered:

* zero form: the verifier samples (w, u) and the prover shows
  sum_{n,i,j} beta(w,n) beta(u,i) (Y / |j| - f) = 0;
* claim form: given a claim Y(w, u) = y, the prover shows
  y = sum_{n, j'} beta(w,n) beta(u_B, j'_B) f(...), where output
  variables used by a single factor of every term are substituted by
  u directly and the rest (B) are summed against beta.

Both end in one evaluation claim per tensor, returned for discharge.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import field
from .field import P
from .sumcheck import SumcheckProof, prove_product, verify_rounds
from .tensor import EvalClaim, beta_eval, beta_table, log2_exact
from .transcript import Transcript
from .wire import SumcheckReject

Var = tuple[str, int]


@dataclass(frozen=True)
class OpSpec:
    n_out: int
    n_sum: int
    inputs: tuple[tuple[Var, ...], ...]
    terms: tuple[tuple[int, tuple[int, ...]], ...]
    name: str = "op"

    def substitutable(self) -> list[bool]:
        """Output vars that appear in at most one factor of every term."""
        out = []
        for v in range(self.n_out):
            ok = True
            for _, ks in self.terms:
                if sum(1 for k in ks if ("i", v) in self.inputs[k]) > 1:
                    ok = False
            out.append(ok)
        return out

    def input_vars(self, k: int) -> int:
        return len(self.inputs[k])


def matmul_spec(rows: int, inner: int, cols: int, trans_a: bool = False,
                trans_b: bool = False) -> OpSpec:
    """Y = A @ B with A (rows x inner), B (inner x cols); dims are log2 sizes.

    trans_a / trans_b mean the stored tensor is the transpose.
    """
    a_rows = tuple(("i", k) for k in range(rows))
    b_cols = tuple(("i", rows + k) for k in range(cols))
    mid = tuple(("j", k) for k in range(inner))
    a = mid + a_rows if trans_a else a_rows + mid
    b = b_cols + mid if trans_b else mid + b_cols
    return OpSpec(rows + cols, inner, (a, b), ((1, (0, 1)),), "matmul")


def hadamard_spec(nvars: int) -> OpSpec:
    iv = tuple(("i", k) for k in range(nvars))
    return OpSpec(nvars, 0, (iv, iv), ((1, (0, 1)),), "hadamard")


# table plumbing ---------------------------------------------------------

def fix_block(table: Sequence[int], nvars: int, start: int, values: Sequence[int]) -> list[int]:
    """Bind the contiguous variables start..start+len(values)-1."""
    m = len(values)
    if m == 0:
        return list(table)
    bt = beta_table(values)
    low = 1 << (nvars - start - m)
    mid = 1 << m
    if low == 1:
        # trailing block: one inner product per prefix
        return [sum(map(int.__mul__, bt, table[b:b + mid])) % P
                for b in range(0, len(table), mid)]
    out = []
    for hi_base in range(0, len(table), mid * low):
        acc = [0] * low
        for b, wb in enumerate(bt):
            if wb == 0:
                continue
            off = hi_base + b * low
            chunk = table[off:off + low]
            acc = [a + wb * c for a, c in zip(acc, chunk)]
        out.extend(a % P for a in acc)
    return out


def fix_positions(table: Sequence[int], nvars: int, fixed: dict[int, int]) -> list[int]:
    t = list(table)
    # group into maximal contiguous runs, highest positions first
    positions = sorted(fixed)
    runs: list[list[int]] = []
    for p in positions:
        if runs and runs[-1][-1] == p - 1:
            runs[-1].append(p)
        else:
            runs.append([p])
    for run in reversed(runs):
        t = fix_block(t, nvars, run[0], [fixed[p] for p in run])
        nvars -= len(run)
    return t


def remap(table: Sequence[int], src: Sequence, dst: Sequence) -> list[int]:
    """Reorder/broadcast a table over variables src onto variables dst (src within dst)."""
    src, dst = list(src), list(dst)
    if src == dst:
        return list(table)
    pos = {v: k for k, v in enumerate(dst)}
    nd = len(dst)
    shifts = [nd - 1 - pos[v] for v in src]
    ns = len(src)
    out = [0] * (1 << nd)
    for idx in range(1 << nd):
        s = 0
        for k, sh in enumerate(shifts):
            s |= ((idx >> sh) & 1) << (ns - 1 - k)
        out[idx] = table[s]
    return out


def _stack_vars(tables: Sequence[Sequence[int]], spec: OpSpec) -> int:
    n = None
    for k, t in enumerate(tables):
        total = log2_exact(len(t))
        sv = total - spec.input_vars(k)
        if sv < 0 or (n is not None and sv != n):
            raise ValueError("inputs disagree on the stack axis")
        n = sv
    return n


# claim form -------------------------------------------------------------

def _claim_layout(spec: OpSpec):
    subst = spec.substitutable()
    summed: list[Var] = [("i", v) for v in range(spec.n_out) if not subst[v]]
    summed += [("j", j) for j in range(spec.n_sum)]
    coupled = [v for v in range(spec.n_out) if not subst[v]]
    return subst, summed, coupled


def _claim_degrees(spec: OpSpec, n_stack: int, summed: list[Var]) -> list[int]:
    degs = [max(len(ks) for _, ks in spec.terms)] * n_stack
    for var in summed:
        d = 1
        for _, ks in spec.terms:
            c = sum(1 for k in ks if var in spec.inputs[k])
            if var[0] == "i":
                c += 1
            d = max(d, c)
        degs.append(d)
    return degs


def prove_aggregated_from_claim(spec: OpSpec, inputs: Sequence[Sequence[int]],
                                w: Sequence[int], u: Sequence[int], value: int,
                                transcript: Transcript, label: str = "agg"
                                ) -> tuple[SumcheckProof, list[EvalClaim]]:
    n_stack = _stack_vars(inputs, spec)
    if len(w) != n_stack or len(u) != spec.n_out:
        raise ValueError("claim point does not match the operation shape")
    subst, summed, coupled = _claim_layout(spec)
    tables = []
    for k, t in enumerate(inputs):
        vars_k = spec.inputs[k]
        fixed = {n_stack + p: u[v[1]] for p, v in enumerate(vars_k)
                 if v[0] == "i" and subst[v[1]]}
        reduced = fix_positions(t, n_stack + len(vars_k), fixed)
        rest = [v for v in vars_k if not (v[0] == "i" and subst[v[1]])]
        tables.append(_remap_stacked(reduced, n_stack, rest, summed))
    terms = [(c, list(ks)) for c, ks in spec.terms]
    if coupled:
        bt = beta_table([u[v] for v in coupled])
        btab = _remap_stacked(_broadcast_stack(bt, n_stack), n_stack,
                              [("i", v) for v in coupled], summed)
        tables.append(btab)
        terms = [(c, ks + [len(tables) - 1]) for c, ks in terms]
    degrees = _claim_degrees(spec, n_stack, summed)
    _absorb_claim_input(transcript, label, w, u, value)
    rounds, point, finals = prove_product(tables, terms, degrees, transcript, label, w)
    terminal = finals[:len(inputs)]
    proof = SumcheckProof(rounds, terminal)
    return proof, _claim_terminal_claims(spec, n_stack, summed, subst, u, point, terminal)


def verify_aggregated_from_claim(spec: OpSpec, n_stack: int, w: Sequence[int],
                                 u: Sequence[int], value: int, proof: SumcheckProof,
                                 transcript: Transcript, label: str = "agg") -> list[EvalClaim]:
    subst, summed, coupled = _claim_layout(spec)
    if len(proof.terminal) != len(spec.inputs):
        raise SumcheckReject(f"{spec.name}: wrong number of terminal claims")
    if len(w) != n_stack or len(u) != spec.n_out:
        raise SumcheckReject(f"{spec.name}: claim point has the wrong shape")
    degrees = _claim_degrees(spec, n_stack, summed)
    _absorb_claim_input(transcript, label, w, u, value)
    point, final = verify_rounds(proof.rounds, value, degrees, transcript, label, w)
    expected = _combine(spec, proof.terminal)
    if coupled:
        r_summed = point[n_stack:]
        rb = [r_summed[summed.index(("i", v))] for v in coupled]
        expected = expected * beta_eval([u[v] for v in coupled], rb) % P
    if expected != final:
        raise SumcheckReject(f"{spec.name}: terminal check failed")
    return _claim_terminal_claims(spec, n_stack, summed, subst, u, point, proof.terminal)


def _claim_terminal_claims(spec, n_stack, summed, subst, u, point, terminal):
    stack_pt = point[:n_stack]
    rs = dict(zip(summed, point[n_stack:]))
    claims = []
    for k, vars_k in enumerate(spec.inputs):
        inner = []
        for v in vars_k:
            if v[0] == "i" and subst[v[1]]:
                inner.append(u[v[1]])
            else:
                inner.append(rs[v])
        claims.append(EvalClaim(list(stack_pt) + inner, terminal[k], f"X{k}"))
    return claims


def _absorb_claim_input(tr: Transcript, label, w, u, value):
    tr.absorb_fields(f"{label}/w", w)
    tr.absorb_fields(f"{label}/u", u)
    tr.absorb_field(f"{label}/y", value)


def _combine(spec: OpSpec, vals: Sequence[int]) -> int:
    acc = 0
    for c, ks in spec.terms:
        prod = c
        for k in ks:
            prod = prod * vals[k] % P
        acc += prod
    return acc % P


def _broadcast_stack(inner: list[int], n_stack: int) -> list[int]:
    return inner * (1 << n_stack)


def _remap_stacked(table: list[int], n_stack: int, src: list[Var], dst: list[Var]) -> list[int]:
    if list(src) == list(dst):
        return table
    inner_src = 1 << len(src)
    out = []
    for n in range(1 << n_stack):
        out.extend(remap(table[n * inner_src:(n + 1) * inner_src], src, dst))
    return out


# zero form --------------------------------------------------------------

def prove_aggregated_op(spec: OpSpec, inputs: Sequence[Sequence[int]], output: Sequence[int],
                        transcript: Transcript, label: str = "agg0"
                        ) -> tuple[SumcheckProof, list[EvalClaim]]:
    """Zero-statement proof that output matches f(inputs) on every stacked slice."""
    n_stack = _stack_vars(inputs, spec)
    if len(output) != 1 << (n_stack + spec.n_out):
        raise ValueError("output does not match the operation shape")
    w, u = _zero_challenges(transcript, label, n_stack, spec)
    full = [("i", v) for v in range(spec.n_out)] + [("j", j) for j in range(spec.n_sum)]
    tables = [_remap_stacked(list(t), n_stack, list(spec.inputs[k]), full)
              for k, t in enumerate(inputs)]
    out_vars = [("i", v) for v in range(spec.n_out)]
    tables.append(_remap_stacked(list(output), n_stack, out_vars, full))
    bt = _broadcast_stack(beta_table(u), n_stack)
    tables.append(_remap_stacked(bt, n_stack, out_vars, full))
    yk, bk = len(inputs), len(inputs) + 1
    d_inv = field.inv(1 << spec.n_sum)
    terms = [(d_inv, [bk, yk])] + [((-c) % P, list(ks) + [bk]) for c, ks in spec.terms]
    degrees = _zero_degrees(spec, n_stack)
    rounds, point, finals = prove_product(tables, terms, degrees, transcript, label, w)
    terminal = finals[:yk + 1]
    return SumcheckProof(rounds, terminal), _zero_claims(spec, n_stack, point, terminal)


def verify_aggregated_op(spec: OpSpec, n_stack: int, proof: SumcheckProof,
                         transcript: Transcript, label: str = "agg0") -> list[EvalClaim]:
    if len(proof.terminal) != len(spec.inputs) + 1:
        raise SumcheckReject(f"{spec.name}: wrong number of terminal claims")
    w, u = _zero_challenges(transcript, label, n_stack, spec)
    degrees = _zero_degrees(spec, n_stack)
    point, final = verify_rounds(proof.rounds, 0, degrees, transcript, label, w)
    vals = proof.terminal
    y = vals[-1]
    inner = (y * field.inv(1 << spec.n_sum) - _combine(spec, vals[:-1])) % P
    expected = beta_eval(u, point[n_stack:n_stack + spec.n_out]) * inner % P
    if expected != final:
        raise SumcheckReject(f"{spec.name}: terminal check failed")
    return _zero_claims(spec, n_stack, point, vals)


def _zero_challenges(tr: Transcript, label, n_stack, spec):
    w = tr.challenge_vector(f"{label}/w", n_stack)
    u = tr.challenge_vector(f"{label}/u", spec.n_out)
    return w, u


def _zero_degrees(spec: OpSpec, n_stack: int) -> list[int]:
    degs = [max([1] + [len(ks) for _, ks in spec.terms])] * n_stack
    for v in range(spec.n_out):
        d = 2
        for _, ks in spec.terms:
            d = max(d, 1 + sum(1 for k in ks if ("i", v) in spec.inputs[k]))
        degs.append(d)
    for j in range(spec.n_sum):
        d = 1
        for _, ks in spec.terms:
            d = max(d, sum(1 for k in ks if ("j", j) in spec.inputs[k]))
        degs.append(d)
    return degs


def _zero_claims(spec, n_stack, point, vals):
    stack_pt = point[:n_stack]
    ri = point[n_stack:n_stack + spec.n_out]
    rj = point[n_stack + spec.n_out:]
    claims = []
    for k, vars_k in enumerate(spec.inputs):
        inner = [ri[v[1]] if v[0] == "i" else rj[v[1]] for v in vars_k]
        claims.append(EvalClaim(list(stack_pt) + inner, vals[k], f"X{k}"))
    claims.append(EvalClaim(list(stack_pt) + list(ri), vals[-1], "Y"))
    return claims


# convenience wrappers ----------------------------------------------------

def prove_matmul_batched(x0, x1, w, u, value, transcript, dims, label="mm"):
    """dims = (log rows, log inner, log cols)."""
    return prove_aggregated_from_claim(matmul_spec(*dims), [x0, x1], w, u, value, transcript, label)


def verify_matmul_batched(n_stack, w, u, value, proof, transcript, dims, label="mm"):
    return verify_aggregated_from_claim(matmul_spec(*dims), n_stack, w, u, value, proof,
                                        transcript, label)


def prove_hadamard_batched(x0, x1, w, u, value, transcript, nvars, label="hd"):
    return prove_aggregated_from_claim(hadamard_spec(nvars), [x0, x1], w, u, value,
                                       transcript, label)


def verify_hadamard_batched(n_stack, w, u, value, proof, transcript, nvars, label="hd"):
    return verify_aggregated_from_claim(hadamard_spec(nvars), n_stack, w, u, value, proof,
                                        transcript, label)


# re-indexing -------------------------------------------------------------

@dataclass
class ReindexClaim:
    """sum_i weights[i] * X(i, inner) = value, over the stack slots i of X."""

    weights: list[int]
    inner: list[int]
    value: int


def selector_weights(selector: Sequence[int | None], stack_point: Sequence[int],
                     n_slots: int) -> list[int]:
    """Weights of a sub-stack claim X_k(u_k, u): slot selector[j] gets beta(u_k, j).

    selector[j] is the slot of X holding slice j of X_k, or None for padding.
    """
    bt = beta_table(stack_point)
    if len(selector) > len(bt):
        raise ValueError("selector longer than the sub-stack")
    out = [0] * n_slots
    for j, slot in enumerate(selector):
        if slot is not None:
            out[slot] = (out[slot] + bt[j]) % P
    return out


def _reindex_absorb(tr: Transcript, label, claims: Sequence[ReindexClaim]) -> list[int]:
    for c in claims:
        tr.absorb_fields(f"{label}/a", c.weights)
        tr.absorb_fields(f"{label}/u", c.inner)
        tr.absorb_field(f"{label}/v", c.value)
    return tr.challenge_vector(f"{label}/r", len(claims))


def _common_inner(claims: Sequence[ReindexClaim]) -> bool:
    return all(c.inner == claims[0].inner for c in claims)


def prove_reindex(table: Sequence[int], n_stack: int, claims: Sequence[ReindexClaim],
                  transcript: Transcript, label: str = "rx") -> tuple[SumcheckProof, EvalClaim]:
    """Merge claims on slots of one stacked tensor into a single evaluation claim."""
    if not claims:
        raise ValueError("nothing to re-index")
    nvars = log2_exact(len(table))
    n_inner = nvars - n_stack
    for c in claims:
        if len(c.weights) != 1 << n_stack or len(c.inner) != n_inner:
            raise ValueError("re-index claim does not match the tensor shape")
    rs = _reindex_absorb(transcript, label, claims)
    if _common_inner(claims):
        partial = fix_block(table, nvars, n_stack, claims[0].inner)
        weight = [sum(r * c.weights[i] for r, c in zip(rs, claims)) % P
                  for i in range(1 << n_stack)]
        rounds, point, finals = prove_product([weight, partial], [(1, [0, 1])],
                                              [2] * n_stack, transcript, label)
        full_point = point + list(claims[0].inner)
    else:
        inner_size = 1 << n_inner
        weight = [0] * len(table)
        for r, c in zip(rs, claims):
            bt = beta_table(c.inner)
            for i, a in enumerate(c.weights):
                if a == 0:
                    continue
                s = r * a % P
                base = i * inner_size
                for x, b in enumerate(bt):
                    weight[base + x] += s * b
        weight = [v % P for v in weight]
        rounds, point, finals = prove_product([weight, list(table)], [(1, [0, 1])],
                                              [2] * nvars, transcript, label)
        full_point = point
    return SumcheckProof(rounds, [finals[1]]), EvalClaim(full_point, finals[1], "X")


def verify_reindex(n_stack: int, n_inner: int, claims: Sequence[ReindexClaim],
                   proof: SumcheckProof, transcript: Transcript,
                   label: str = "rx") -> EvalClaim:
    if not claims or len(proof.terminal) != 1:
        raise SumcheckReject("malformed re-index proof")
    for c in claims:
        if len(c.weights) != 1 << n_stack or len(c.inner) != n_inner:
            raise SumcheckReject("re-index claim does not match the tensor shape")
    rs = _reindex_absorb(transcript, label, claims)
    total = sum(r * c.value for r, c in zip(rs, claims)) % P
    common = _common_inner(claims)
    nrounds = n_stack if common else n_stack + n_inner
    point, final = verify_rounds(proof.rounds, total, [2] * nrounds, transcript, label)
    zs = point[:n_stack]
    bz = beta_table(zs)
    wz = 0
    for r, c in zip(rs, claims):
        a = sum(x * y for x, y in zip(c.weights, bz)) % P
        if not common:
            a = a * beta_eval(c.inner, point[n_stack:]) % P
        wz += r * a
    if wz % P * proof.terminal[0] % P != final:
        raise SumcheckReject("re-index terminal check failed")
    full_point = point if not common else point + list(claims[0].inner)
    return EvalClaim(full_point, proof.terminal[0], "X")
