"""Proving and verifying a whole training run, window by window.

Each window of T' steps commits eleven stacked tensor families, runs one
claim-driven sumcheck per operation family over every (step, layer)
instance at once, merges all claims that land on a family into a single
evaluation claim, and opens each family once.

Every activation-like tensor is padded to (B_pad, D_pad) and every
matrix to (D_pad, D_pad), where D_pad covers the widest layer.  An
operation sees its inputs as a "virtual stack": instance n maps to a
(family, slot) pair or to nothing (padding, all zeros).

Weight snapshots 0..T' of a window live in the W family at slot
s * L_pad + (l - 1).  Snapshot 0 must equal snapshot T' of the previous
window; the seam proof opens both commitments at one shared point.
"""
from __future__ import annotations

import hashlib
import os
import struct
import time
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from . import field
from .aggregate import (ReindexClaim, matmul_spec, prove_aggregated_from_claim,
                        prove_reindex, verify_aggregated_from_claim, verify_reindex)
from .commitment import (BlindingRng, CommitKey, EvalProof, Opening, TensorCommitment,
                         check_eval, commit, layout, prove_eval)
from .field import P, QuantParams
from .sumcheck import SumcheckProof
from .tensor import beta_table, index_bits, log2_exact, mle_eval, next_pow2
from .trainer import TrainingTrace
from .transcript import Transcript
from .wire import (MalformedProof, Reader, SumcheckReject, TranscriptMismatch,
                   VerificationError, Writer)
from .zkrelu import (GadgetClaim, GadgetProof, GadgetShape, bits_table, build_aux,
                     prove_gadget, verify_gadget)

MAGIC = b"ZKDL"
DEFAULT_KEY_SEED = hashlib.sha256(b"zkdl/v1/default commitment key").digest()
VERSION = 1

FAMILIES = ("W", "X", "Y", "Z", "A", "GZ", "GA", "GW", "aux_relu", "aux_loss", "aux_update")
OPS = ("fwd", "loss", "bwd_a", "bwd_w", "relu", "update")
TAMPER_TARGETS = ("Z", "A", "GZ", "GA", "GW", "W", "aux_relu", "aux_loss", "aux_update")


# configuration ------------------------------------------------------------

@dataclass(frozen=True)
class ProofConfig:
    """Public hyperparameters; the verifier needs nothing else besides the bundle."""

    dims: tuple[int, ...]
    batch: int
    steps: int
    window: int
    q_bits: int = 16
    r_bits: int = 16
    lr_shift: int = 4
    key_seed: bytes = DEFAULT_KEY_SEED
    hiding: bool = True

    def __post_init__(self):
        if len(self.dims) < 2 or any(d < 1 for d in self.dims):
            raise ValueError("layer widths must be positive, at least two of them")
        if self.batch < 1 or self.steps < 1 or self.window < 1:
            raise ValueError("batch, steps and window must be positive")
        if self.window > self.steps:
            raise ValueError("window longer than the run")
        if len(self.key_seed) != 32:
            raise ValueError("commitment key seed must be 32 bytes")
        if not 0 <= self.lr_shift < self.q_bits:
            raise ValueError(f"learning-rate shift must lie in [0, {self.q_bits})")
        QuantParams(self.q_bits, self.r_bits)

    @property
    def qp(self) -> QuantParams:
        return QuantParams(self.q_bits, self.r_bits)

    def encode(self) -> bytes:
        w = Writer()
        w.u8(len(self.dims))
        for d in self.dims:
            w.u32(d)
        for v in (self.batch, self.steps, self.window):
            w.u32(v)
        w.u8(self.q_bits)
        w.u8(self.r_bits)
        w.u8(self.lr_shift)
        w.raw(self.key_seed)
        w.u8(int(self.hiding))
        return w.getvalue()

    def digest(self) -> bytes:
        return hashlib.sha256(b"zkdl/v1/config" + self.encode()).digest()

    @property
    def n_windows(self) -> int:
        return -(-self.steps // self.window)

    def window_steps(self, k: int) -> int:
        return min(self.window, self.steps - k * self.window)


@dataclass(frozen=True)
class FamilyShape:
    slots: int          # padded slot count, a power of two
    inner_vars: int

    @property
    def stack_vars(self) -> int:
        return log2_exact(self.slots)

    @property
    def nvars(self) -> int:
        return self.stack_vars + self.inner_vars

    @property
    def slot_size(self) -> int:
        return 1 << self.inner_vars


class Schema:
    """Family shapes and the instance -> slot maps for one window."""

    def __init__(self, cfg: ProofConfig, n_steps: int | None = None):
        self.cfg = cfg
        self.n = cfg.window if n_steps is None else n_steps   # real steps in the window
        self.L = len(cfg.dims) - 1
        self.H = self.L - 1
        self.bB = log2_exact(next_pow2(cfg.batch))
        self.bD = log2_exact(next_pow2(max(cfg.dims)))
        self.bits = log2_exact(next_pow2(cfg.q_bits + cfg.r_bits))
        self.Tp = next_pow2(cfg.window)
        self.Lp = next_pow2(self.L)
        self.Hp = next_pow2(self.H) if self.H else 0
        self.Sp = next_pow2(cfg.window + 1)
        act = self.bB + self.bD
        mat = 2 * self.bD
        fam = {
            "W": FamilyShape(self.Sp * self.Lp, mat),
            "X": FamilyShape(self.Tp, act),
            "Y": FamilyShape(self.Tp, act),
            "Z": FamilyShape(self.Tp * self.Lp, act),
            "GZ": FamilyShape(self.Tp * self.Lp, act),
            "GW": FamilyShape(self.Tp * self.Lp, mat),
            "aux_loss": FamilyShape(self.Tp, act + self.bits),
            "aux_update": FamilyShape(self.Tp * self.Lp, mat + self.bits),
        }
        if self.H:
            fam["A"] = FamilyShape(self.Tp * self.Hp, act)
            fam["GA"] = FamilyShape(self.Tp * self.Hp, act)
            fam["aux_relu"] = FamilyShape(self.Tp * self.Hp, 1 + act + self.bits)
        self.families = {k: fam[k] for k in FAMILIES if k in fam}
        self.ops = [o for o in OPS if self.H or o not in ("bwd_a", "relu")]

    # slot maps -------------------------------------------------------------
    def layer_slot(self, tau: int, l: int) -> int:
        return tau * self.Lp + l - 1

    def hidden_slot(self, tau: int, l: int) -> int:
        return tau * self.Hp + l - 1

    def w_slot(self, s: int, l: int) -> int:
        return s * self.Lp + l - 1

    def act_in(self, tau: int, l: int):
        """Where A^{l-1} lives."""
        return ("X", tau) if l == 1 else ("A", self.hidden_slot(tau, l - 1))

    def layer_stack(self, fn) -> list:
        out = [None] * (self.Tp * self.Lp)
        for tau in range(self.n):
            for l in range(1, self.L + 1):
                out[self.layer_slot(tau, l)] = fn(tau, l)
        return out

    def hidden_stack(self, fn) -> list:
        out = [None] * (self.Tp * self.Hp)
        for tau in range(self.n):
            for l in range(1, self.H + 1):
                out[self.hidden_slot(tau, l)] = fn(tau, l)
        return out

    def step_stack(self, fn) -> list:
        return [fn(tau) if tau < self.n else None for tau in range(self.Tp)]

    @property
    def qp(self) -> QuantParams:
        return self.cfg.qp

    def key_size(self) -> int:
        return max(1 << layout(f.nvars)[1] for f in self.families.values())


# family tables -------------------------------------------------------------

def _pad_flat(mat: np.ndarray, rows: int, cols: int) -> list[int]:
    out = [0] * (rows * cols)
    r, c = mat.shape
    for i in range(r):
        base = i * cols
        for j, v in enumerate(mat[i]):
            out[base + j] = int(v) % P
    return out


def _pad_signed(mat: np.ndarray, rows: int, cols: int) -> list[int]:
    out = [0] * (rows * cols)
    r, c = mat.shape
    for i in range(r):
        for j in range(c):
            out[i * cols + j] = int(mat[i, j])
    return out


@dataclass(frozen=True)
class AuxTamper:
    family: str
    slot: int
    index: int


def build_tables(schema: Schema, trace: TrainingTrace, t0: int,
                 aux_tamper: AuxTamper | None = None) -> dict[str, list[int]]:
    """Flat field tables for every family of the window starting at step t0."""
    B, D = 1 << schema.bB, 1 << schema.bD
    qp = schema.qp
    steps = trace.steps[t0:t0 + schema.n]
    tabs = {name: [0] * (1 << f.nvars) for name, f in schema.families.items()}

    def put(name, slot, values):
        sz = schema.families[name].slot_size
        tabs[name][slot * sz:(slot + 1) * sz] = values

    for s in range(schema.n + 1):
        ws = trace.weights_at(t0 + s)
        for l in range(1, schema.L + 1):
            put("W", schema.w_slot(s, l), _pad_flat(ws[l - 1], D, D))
    for tau, st in enumerate(steps):
        put("X", tau, _pad_flat(st.x, B, D))
        put("Y", tau, _pad_flat(st.y, B, D))
        for l in range(1, schema.L + 1):
            slot = schema.layer_slot(tau, l)
            put("Z", slot, _pad_flat(st.z[l - 1], B, D))
            put("GZ", slot, _pad_flat(st.gz[l - 1], B, D))
            put("GW", slot, _pad_flat(st.gw[l - 1], D, D))
            put("aux_update", slot,
                bits_table(_pad_signed(st.gw[l - 1], D, D), qp.width))
        put("aux_loss", tau, bits_table(_pad_signed(st.z[-1], B, D), qp.width))
        for l in range(1, schema.H + 1):
            slot = schema.hidden_slot(tau, l)
            put("A", slot, _pad_flat(st.a[l - 1], B, D))
            put("GA", slot, _pad_flat(st.ga[l - 1], B, D))
            aux = build_aux(_pad_signed(st.z[l - 1], B, D), _pad_signed(st.ga[l - 1], B, D), qp)
            put("aux_relu", slot, aux.table)
    if aux_tamper is not None:
        f = schema.families[aux_tamper.family]
        pos = aux_tamper.slot * f.slot_size + aux_tamper.index % f.slot_size
        tabs[aux_tamper.family][pos] ^= 1
    return tabs


# proof objects -------------------------------------------------------------

@dataclass
class OpProof:
    values: list[int]
    proof: SumcheckProof | GadgetProof

    def write(self, w: Writer):
        w.fes(self.values)
        if isinstance(self.proof, GadgetProof):
            w.u8(1)
        else:
            w.u8(0)
        self.proof.write(w)

    @classmethod
    def read(cls, r: Reader) -> "OpProof":
        values = r.fes(limit=256)
        kind = r.u8()
        if kind == 1:
            return cls(values, GadgetProof.read(r))
        if kind == 0:
            return cls(values, SumcheckProof.read(r))
        raise MalformedProof(f"unknown operation proof kind {kind}")


@dataclass
class WindowProof:
    index: int
    first_step: int
    n_steps: int
    commitments: list[TensorCommitment]
    ops: list[OpProof]
    seam_value: int | None
    seam_proof: EvalProof | None
    reindex: list[SumcheckProof]
    evals: list[EvalProof]

    def write(self, w: Writer):
        hdr = Writer()
        hdr.u32(self.index)
        hdr.u32(self.first_step)
        hdr.u32(self.n_steps)
        w.blob(hdr.getvalue())
        cw = Writer()
        cw.u8(len(self.commitments))
        for c in self.commitments:
            c.write(cw)
        w.blob(cw.getvalue())
        ow = Writer()
        ow.u8(len(self.ops))
        for op in self.ops:
            sub = Writer()
            op.write(sub)
            ow.blob(sub.getvalue())
        w.blob(ow.getvalue())
        sw = Writer()
        if self.seam_proof is None:
            sw.u8(0)
        else:
            sw.u8(1)
            sw.fe(self.seam_value)
            self.seam_proof.write(sw)
        w.blob(sw.getvalue())
        rw = Writer()
        rw.u8(len(self.reindex))
        for p in self.reindex:
            p.write(rw)
        w.blob(rw.getvalue())
        ew = Writer()
        ew.u8(len(self.evals))
        for p in self.evals:
            p.write(ew)
        w.blob(ew.getvalue())

    @classmethod
    def read(cls, r: Reader) -> "WindowProof":
        hdr = Reader(r.blob(), "window header")
        index, first, n = hdr.u32(), hdr.u32(), hdr.u32()
        hdr.done()
        cr = Reader(r.blob(), "commitments")
        coms = [TensorCommitment.read(cr) for _ in range(cr.u8())]
        cr.done()
        orr = Reader(r.blob(), "operation proofs")
        ops = []
        for _ in range(orr.u8()):
            sub = Reader(orr.blob(), "operation proof")
            ops.append(OpProof.read(sub))
            sub.done()
        orr.done()
        sr = Reader(r.blob(), "seam")
        flag = sr.u8()
        if flag > 1:
            raise MalformedProof("bad seam flag")
        seam_value = sr.fe() if flag else None
        seam_proof = EvalProof.read(sr) if flag else None
        sr.done()
        rr = Reader(r.blob(), "re-index proofs")
        rx = [SumcheckProof.read(rr) for _ in range(rr.u8())]
        rr.done()
        er = Reader(r.blob(), "evaluation proofs")
        evs = [EvalProof.read(er) for _ in range(er.u8())]
        er.done()
        return cls(index, first, n, coms, ops, seam_value, seam_proof, rx, evs)

    def to_bytes(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    @property
    def commitment_bytes(self) -> int:
        return sum(c.n_bytes for c in self.commitments)


@dataclass
class ProofBundle:
    config_hash: bytes
    windows: list[WindowProof]

    def to_bytes(self) -> bytes:
        w = Writer()
        w.raw(MAGIC)
        w.u16(VERSION)
        w.raw(self.config_hash)
        w.u32(len(self.windows))
        for win in self.windows:
            w.blob(win.to_bytes())
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProofBundle":
        r = Reader(data, "proof bundle")
        if r.take(4) != MAGIC:
            raise MalformedProof("not a proof bundle (bad magic)")
        version = r.u16()
        if version != VERSION:
            raise MalformedProof(f"unsupported bundle version {version}")
        cfg_hash = r.take(32)
        n = r.u32()
        if n > r.remaining():
            raise MalformedProof(f"bundle claims {n} windows")
        wins = []
        for _ in range(n):
            sub = Reader(r.blob(), "window section")
            wins.append(WindowProof.read(sub))
            sub.done()
        r.done()
        return cls(cfg_hash, wins)


def serialize(bundle: ProofBundle) -> bytes:
    return bundle.to_bytes()


def deserialize(data: bytes) -> ProofBundle:
    return ProofBundle.from_bytes(data)


# claim routing -----------------------------------------------------------

def route_weights(vstack: Sequence, stack_point: Sequence[int], schema: Schema
                  ) -> dict[str, list[int]]:
    """Per-family slot weights of a claim on a virtual stack."""
    bt = beta_table(stack_point)
    out: dict[str, list[int]] = {}
    for n, target in enumerate(vstack):
        if target is None:
            continue
        fam, slot = target
        wts = out.setdefault(fam, [0] * schema.families[fam].slots)
        wts[slot] = (wts[slot] + bt[n]) % P
    return dict(sorted(out.items(), key=lambda kv: FAMILIES.index(kv[0])))


class _Ledger:
    """Values sent by the prover plus the claims collected per family."""

    def __init__(self, schema: Schema, tr: Transcript):
        self.schema = schema
        self.tr = tr
        self.claims: dict[str, list[ReindexClaim]] = {f: [] for f in schema.families}
        self.sent: list[int] = []

    def direct(self, fam: str, point: Sequence[int], value: int):
        sv = self.schema.families[fam].stack_vars
        self.claims[fam].append(ReindexClaim(beta_table(point[:sv]), list(point[sv:]), value))


class _ProverLedger(_Ledger):
    def __init__(self, schema, tr, tables):
        super().__init__(schema, tr)
        self.tables = tables

    def send(self, v: int) -> int:
        v %= P
        self.sent.append(v)
        self.tr.absorb_field("op/value", v)
        return v

    def partial(self, fam: str, weights: list[int], inner: Sequence[int]) -> int:
        f = self.schema.families[fam]
        bt = beta_table(inner)
        tab = self.tables[fam]
        acc = 0
        for slot, wt in enumerate(weights):
            if wt:
                sl = tab[slot * f.slot_size:(slot + 1) * f.slot_size]
                acc += wt * (sum(map(int.__mul__, bt, sl)) % P)
        return acc % P

    def evaluate(self, vstack, v, u) -> int:
        """Prover-side value of the virtual-stack MLE; sent to the verifier."""
        total = 0
        for fam, wts in route_weights(vstack, v, self.schema).items():
            total += self.partial(fam, wts, u)
        return self.send(total)

    def route(self, vstack, v, u, total: int):
        routed = route_weights(vstack, v, self.schema)
        fams = list(routed)
        acc = 0
        for k, fam in enumerate(fams):
            if k < len(fams) - 1:
                val = self.send(self.partial(fam, routed[fam], u))
                acc += val
            else:
                val = (total - acc) % P
            self.claims[fam].append(ReindexClaim(routed[fam], list(u), val))

    def virtual_table(self, vstack, fam_size: int) -> list[int]:
        out: list[int] = []
        zeros = [0] * fam_size
        for target in vstack:
            if target is None:
                out.extend(zeros)
            else:
                fam, slot = target
                out.extend(self.tables[fam][slot * fam_size:(slot + 1) * fam_size])
        return out


class _VerifierLedger(_Ledger):
    def __init__(self, schema, tr, values: Sequence[int]):
        super().__init__(schema, tr)
        self.values = list(values)
        self.pos = 0

    def send(self, _unused=None) -> int:
        if self.pos >= len(self.values):
            raise MalformedProof("operation proof is missing opened values")
        v = self.values[self.pos]
        self.pos += 1
        self.tr.absorb_field("op/value", v)
        return v

    def evaluate(self, vstack, v, u) -> int:
        return self.send()

    def route(self, vstack, v, u, total: int):
        routed = route_weights(vstack, v, self.schema)
        fams = list(routed)
        acc = 0
        for k, fam in enumerate(fams):
            if k < len(fams) - 1:
                val = self.send()
                acc += val
            else:
                val = (total - acc) % P
            self.claims[fam].append(ReindexClaim(routed[fam], list(u), val))

    def finish_op(self, name: str):
        if self.pos != len(self.values):
            raise MalformedProof(f"{name}: {len(self.values) - self.pos} unused opened values")
        self.values, self.pos = [], 0


# operation families ---------------------------------------------------------

def _op_stacks(schema: Schema, op: str) -> dict[str, list]:
    s = schema
    if op == "fwd":
        return {"out": s.layer_stack(lambda t, l: ("Z", s.layer_slot(t, l))),
                "a": s.layer_stack(s.act_in),
                "w": s.layer_stack(lambda t, l: ("W", s.w_slot(t, l)))}
    if op == "loss":
        return {"z": s.step_stack(lambda t: ("Z", s.layer_slot(t, s.L))),
                "gz": s.step_stack(lambda t: ("GZ", s.layer_slot(t, s.L))),
                "y": s.step_stack(lambda t: ("Y", t))}
    if op == "bwd_a":
        return {"out": s.hidden_stack(lambda t, l: ("GA", s.hidden_slot(t, l))),
                "gz": s.hidden_stack(lambda t, l: ("GZ", s.layer_slot(t, l + 1))),
                "w": s.hidden_stack(lambda t, l: ("W", s.w_slot(t, l + 1)))}
    if op == "bwd_w":
        return {"out": s.layer_stack(lambda t, l: ("GW", s.layer_slot(t, l))),
                "gz": s.layer_stack(lambda t, l: ("GZ", s.layer_slot(t, l))),
                "a": s.layer_stack(s.act_in)}
    if op == "relu":
        return {"z": s.hidden_stack(lambda t, l: ("Z", s.layer_slot(t, l))),
                "a": s.hidden_stack(lambda t, l: ("A", s.hidden_slot(t, l))),
                "ga": s.hidden_stack(lambda t, l: ("GA", s.hidden_slot(t, l))),
                "gz": s.hidden_stack(lambda t, l: ("GZ", s.layer_slot(t, l)))}
    if op == "update":
        return {"gw": s.layer_stack(lambda t, l: ("GW", s.layer_slot(t, l))),
                "old": s.layer_stack(lambda t, l: ("W", s.w_slot(t, l))),
                "new": s.layer_stack(lambda t, l: ("W", s.w_slot(t + 1, l)))}
    raise ValueError(op)


def _matmul_shape(schema: Schema, op: str):
    bB, bD = schema.bB, schema.bD
    if op == "fwd":
        return matmul_spec(bB, bD, bD), ("a", "w"), bB + bD
    if op == "bwd_a":
        return matmul_spec(bB, bD, bD, trans_b=True), ("gz", "w"), bB + bD
    if op == "bwd_w":
        return matmul_spec(bD, bB, bD, trans_a=True), ("gz", "a"), 2 * bD
    raise ValueError(op)


def _gadget_shape(schema: Schema, op: str) -> GadgetShape:
    qp = schema.qp
    act = schema.bB + schema.bD
    if op == "loss":
        sv = log2_exact(schema.Tp)
        return GadgetShape(sv + act, qp.width, qp.r_bits, stack_vars=sv)
    if op == "relu":
        sv = log2_exact(schema.Tp * schema.Hp)
        return GadgetShape(sv + act, qp.width, qp.r_bits, slices=2, gated=True, stack_vars=sv)
    if op == "update":
        sv = log2_exact(schema.Tp * schema.Lp)
        return GadgetShape(sv + 2 * schema.bD, qp.width, qp.r_bits + schema.cfg.lr_shift,
                           stack_vars=sv)
    raise ValueError(op)


def _transpose_point(u: Sequence[int], bD: int) -> list[int]:
    return list(u[bD:]) + list(u[:bD])


def _run_op(schema: Schema, op: str, led: _Ledger, tr: Transcript, prover: bool,
            proof=None):
    """Shared prover/verifier flow for one operation family; returns the proof (prover)."""
    stacks = _op_stacks(schema, op)
    if op in ("fwd", "bwd_a", "bwd_w"):
        spec, names, n_out = _matmul_shape(schema, op)
        sv = log2_exact(len(stacks["out"]))
        v = tr.challenge_vector(f"{op}/w", sv)
        u = tr.challenge_vector(f"{op}/u", n_out)
        y = led.evaluate(stacks["out"], v, u)
        led.route(stacks["out"], v, u, y)
        if prover:
            ins = []
            for k, nm in enumerate(names):
                size = 1 << spec.input_vars(k)
                ins.append(led.virtual_table(stacks[nm], size))
            proof, claims = prove_aggregated_from_claim(spec, ins, v, u, y, tr, op)
        else:
            if not isinstance(proof, SumcheckProof):
                raise MalformedProof(f"{op}: expected a sumcheck proof")
            claims = verify_aggregated_from_claim(spec, sv, v, u, y, proof, tr, op)
        for c, nm in zip(claims, names):
            led.route(stacks[nm], c.point[:sv], c.point[sv:], c.value)
        return proof

    shape = _gadget_shape(schema, op)
    sv, ev = shape.stack_vars, shape.entry_vars
    aux_name = {"loss": "aux_loss", "relu": "aux_relu", "update": "aux_update"}[op]

    def claim(name, stack, pt=None):
        pt = pt if pt is not None else tr.challenge_vector(f"{op}/{name}", ev)
        val = led.evaluate(stack, pt[:sv], pt[sv:])
        led.route(stack, pt[:sv], pt[sv:], val)
        return GadgetClaim(pt, val)

    if op == "loss":
        values = [claim("z", stacks["z"])]
        pt = tr.challenge_vector("loss/o", ev)
        gz, y = claim("gz", stacks["gz"], pt), claim("y", stacks["y"], pt)
        rounded = [GadgetClaim(pt, (gz.value + y.value) % P)]
    elif op == "relu":
        z, ga = claim("z", stacks["z"]), claim("ga", stacks["ga"])
        a, gz = claim("a", stacks["a"]), claim("gz", stacks["gz"])
        values, rounded = [z, ga], [a, gz]
    else:
        values = [claim("gw", stacks["gw"])]
        pt = tr.challenge_vector("update/o", ev)
        wpt = pt[:sv] + _transpose_point(pt[sv:], schema.bD)
        old, new = claim("old", stacks["old"], wpt), claim("new", stacks["new"], wpt)
        rounded = [GadgetClaim(pt, (old.value - new.value) % P)]

    if prover:
        proof, aux_claim = prove_gadget(shape, led.tables[aux_name], values, rounded, tr, op)
    else:
        if not isinstance(proof, GadgetProof):
            raise MalformedProof(f"{op}: expected a gadget proof")
        aux_claim = verify_gadget(shape, values, rounded, proof, tr, op)
    led.direct(aux_name, aux_claim.point, aux_claim.value)
    return proof


# window prover / verifier ------------------------------------------------

def _window_transcript(cfg: ProofConfig, index: int, first: int, n: int,
                       prev_w: TensorCommitment | None) -> Transcript:
    tr = Transcript("window")
    tr.absorb("config", cfg.digest())
    tr.absorb("window", struct.pack(">III", index, first, n))
    tr.absorb("prev-w", prev_w.to_bytes() if prev_w is not None else b"")
    return tr


def _seam_point(schema: Schema, tr: Transcript) -> tuple[list[int], list[int]]:
    v_l = tr.challenge_vector("seam/l", log2_exact(schema.Lp))
    u = tr.challenge_vector("seam/u", 2 * schema.bD)
    return v_l, u


def _seam_claims(schema: Schema, prev_schema: Schema, v_l, u):
    """(point on the previous W table, weights over the current W slots)."""
    prev_pt = index_bits(prev_schema.n, log2_exact(prev_schema.Sp)) + list(v_l) + list(u)
    bl = beta_table(v_l)
    wts = [0] * schema.families["W"].slots
    for l in range(1, schema.L + 1):
        wts[schema.w_slot(0, l)] = bl[l - 1]
    return prev_pt, wts


@dataclass
class _PrevWindow:
    schema: Schema
    com: TensorCommitment
    opening: Opening | None = None


def commit_window(schema: Schema, key: CommitKey, tables: dict[str, list[int]],
                  rng: BlindingRng):
    coms, opens = {}, {}
    for name in schema.families:
        c, o = commit(key, tables[name], rng.child(f"commit/{name}"), schema.cfg.hiding)
        coms[name], opens[name] = c, o
    return coms, opens


def prove_window(schema: Schema, key: CommitKey, tables: dict[str, list[int]], index: int,
                 first: int, rng: BlindingRng, prev: _PrevWindow | None,
                 committed=None) -> tuple[WindowProof, _PrevWindow]:
    cfg = schema.cfg
    hiding = cfg.hiding
    coms, opens = committed if committed is not None else commit_window(schema, key, tables, rng)
    tr = _window_transcript(cfg, index, first, schema.n, prev.com if prev else None)
    for name in schema.families:
        tr.absorb(f"com/{name}", coms[name].to_bytes())

    led = _ProverLedger(schema, tr, tables)
    ops = []
    for op in schema.ops:
        led.sent = []
        proof = _run_op(schema, op, led, tr, prover=True)
        ops.append(OpProof(led.sent, proof))

    seam_value = seam_proof = None
    if prev is not None:
        v_l, u = _seam_point(schema, tr)
        prev_pt, wts = _seam_claims(schema, prev.schema, v_l, u)
        seam_value = mle_eval(prev.opening.table, prev_pt)
        tr.absorb_field("seam/value", seam_value)
        seam_proof = prove_eval(key, prev.com, prev.opening, prev_pt, seam_value, tr,
                                rng.child("seam"), hiding)
        led.claims["W"].append(ReindexClaim(wts, list(u), seam_value))

    reindex, merged = [], []
    for name, fam in schema.families.items():
        rx, claim = prove_reindex(tables[name], fam.stack_vars, led.claims[name], tr, f"rx/{name}")
        reindex.append(rx)
        merged.append(claim)
    evals = [prove_eval(key, coms[name], opens[name], c.point, c.value, tr,
                        rng.child(f"eval/{name}"), hiding)
             for name, c in zip(schema.families, merged)]
    wp = WindowProof(index, first, schema.n, [coms[n] for n in schema.families], ops,
                     seam_value, seam_proof, reindex, evals)
    return wp, _PrevWindow(schema, coms["W"], opens["W"])


def verify_window(schema: Schema, key: CommitKey, wp: WindowProof, index: int, first: int,
                  prev: _PrevWindow | None) -> _PrevWindow:
    cfg = schema.cfg
    if (wp.index, wp.first_step, wp.n_steps) != (index, first, schema.n):
        raise TranscriptMismatch(f"window {index}: section header does not match the schedule")
    names = list(schema.families)
    if len(wp.commitments) != len(names):
        raise MalformedProof(f"window {index}: {len(wp.commitments)} commitments, "
                             f"expected {len(names)}")
    coms = dict(zip(names, wp.commitments))
    for name, c in coms.items():
        if c.nvars != schema.families[name].nvars:
            raise MalformedProof(f"window {index}: commitment {name} has the wrong shape")
    if len(wp.ops) != len(schema.ops):
        raise MalformedProof(f"window {index}: wrong number of operation proofs")
    if len(wp.reindex) != len(names) or len(wp.evals) != len(names):
        raise MalformedProof(f"window {index}: wrong number of family openings")
    if (prev is None) != (wp.seam_proof is None):
        raise MalformedProof(f"window {index}: seam proof missing or unexpected")

    tr = _window_transcript(cfg, index, first, schema.n, prev.com if prev else None)
    for name in names:
        tr.absorb(f"com/{name}", coms[name].to_bytes())
    led = _VerifierLedger(schema, tr, [])
    for op, opp in zip(schema.ops, wp.ops):
        led.values, led.pos = list(opp.values), 0
        _run_op(schema, op, led, tr, prover=False, proof=opp.proof)
        led.finish_op(op)

    if prev is not None:
        v_l, u = _seam_point(schema, tr)
        prev_pt, wts = _seam_claims(schema, prev.schema, v_l, u)
        tr.absorb_field("seam/value", wp.seam_value)
        check_eval(key, prev.com, prev_pt, wp.seam_value, wp.seam_proof, tr)
        led.claims["W"].append(ReindexClaim(wts, list(u), wp.seam_value))

    merged = [verify_reindex(fam.stack_vars, fam.inner_vars, led.claims[name],
                             wp.reindex[k], tr, f"rx/{name}")
              for k, (name, fam) in enumerate(schema.families.items())]
    for k, (name, c) in enumerate(zip(names, merged)):
        check_eval(key, coms[name], c.point, c.value, wp.evals[k], tr)
    return _PrevWindow(schema, coms["W"])


# whole run --------------------------------------------------------------

@dataclass
class WindowMetrics:
    window: int
    steps: int
    pt_ms: float
    cs_bytes: int
    ps_bytes: int
    vt_ms: float = 0.0

    def per_step(self) -> dict[str, float]:
        return {"pt_ms": self.pt_ms / self.steps, "cs_bytes": self.cs_bytes / self.steps,
                "ps_bytes": self.ps_bytes / self.steps, "vt_ms": self.vt_ms / self.steps}


@dataclass
class ProveResult:
    bundle: ProofBundle
    metrics: list[WindowMetrics] = dc_field(default_factory=list)


def _schedule(cfg: ProofConfig):
    for k in range(cfg.n_windows):
        yield k, k * cfg.window, Schema(cfg, cfg.window_steps(k))


def _check_trace(cfg: ProofConfig, trace: TrainingTrace):
    if list(trace.dims) != list(cfg.dims):
        raise ValueError(f"trace widths {trace.dims} do not match config {list(cfg.dims)}")
    if len(trace.steps) != cfg.steps:
        raise ValueError(f"trace has {len(trace.steps)} steps, config says {cfg.steps}")
    if trace.qp != cfg.qp or trace.lr_shift != cfg.lr_shift:
        raise ValueError("trace quantization or learning rate differs from the config")
    for t, st in enumerate(trace.steps):
        if st.x.shape[0] != cfg.batch:
            raise ValueError(f"step {t}: batch of {st.x.shape[0]} rows, config says {cfg.batch}")


def threads_from_env() -> int:
    try:
        return max(1, int(os.environ.get("ZKDL_THREADS", "1")))
    except ValueError:
        return 1


def _prove_one(args):
    schema, key_seed, key_size, tables, index, first, rng_seed, prev = args
    key = CommitKey.derive(key_seed, key_size)
    t0 = time.perf_counter()
    wp, _ = prove_window(schema, key, tables, index, first,
                         BlindingRng(rng_seed).child(f"window/{index}"), prev)
    return wp, (time.perf_counter() - t0) * 1000


def prove_training(trace: TrainingTrace, cfg: ProofConfig, rng_seed: bytes | int | None = None,
                   aux_tamper: tuple[int, AuxTamper] | None = None,
                   threads: int | None = None) -> ProveResult:
    """Prove every window; aux_tamper = (window, AuxTamper) flips one committed aux bit."""
    _check_trace(cfg, trace)
    threads = threads or threads_from_env()
    key_size = max(Schema(cfg, cfg.window_steps(k)).key_size() for k in range(cfg.n_windows))
    key = CommitKey.derive(cfg.key_seed, key_size)
    if rng_seed is None:
        rng_seed = os.urandom(32)
    root = BlindingRng(rng_seed)
    result = ProveResult(ProofBundle(cfg.digest(), []))
    plan = []
    for k, first, schema in _schedule(cfg):
        t0 = time.perf_counter()
        at = aux_tamper[1] if aux_tamper is not None and aux_tamper[0] == k else None
        plan.append((k, first, schema, build_tables(schema, trace, first, at),
                     (time.perf_counter() - t0) * 1000))

    if threads > 1 and len(plan) > 1:
        from concurrent.futures import ProcessPoolExecutor
        # windows only depend on the previous window's weight commitment
        jobs, prev = [], None
        for k, first, schema, tables, _ in plan:
            com, op = commit(key, tables["W"], root.child(f"window/{k}").child("commit/W"),
                             cfg.hiding)
            jobs.append((schema, cfg.key_seed, key_size, tables, k, first, rng_seed, prev))
            prev = _PrevWindow(schema, com, op)
        with ProcessPoolExecutor(max_workers=threads) as ex:
            outs = list(ex.map(_prove_one, jobs))
        for (k, first, schema, tables, build_ms), (wp, ms) in zip(plan, outs):
            result.bundle.windows.append(wp)
            result.metrics.append(_metrics(k, schema, wp, ms + build_ms))
        return result

    prev = None
    for k, first, schema, tables, build_ms in plan:
        t0 = time.perf_counter()
        wp, prev = prove_window(schema, key, tables, k, first, root.child(f"window/{k}"), prev)
        ms = (time.perf_counter() - t0) * 1000 + build_ms
        result.bundle.windows.append(wp)
        result.metrics.append(_metrics(k, schema, wp, ms))
    return result


def _metrics(k: int, schema: Schema, wp: WindowProof, ms: float) -> WindowMetrics:
    total = len(wp.to_bytes())
    cs = wp.commitment_bytes
    return WindowMetrics(k, schema.n, ms, cs, total - cs)


def verify_training(bundle: ProofBundle | bytes, cfg: ProofConfig,
                    timings: list[float] | None = None) -> None:
    """Raise a VerificationError subclass unless the bundle verifies."""
    if isinstance(bundle, (bytes, bytearray)):
        bundle = ProofBundle.from_bytes(bytes(bundle))
    if bundle.config_hash != cfg.digest():
        raise TranscriptMismatch("bundle was produced under different public parameters")
    if len(bundle.windows) != cfg.n_windows:
        raise MalformedProof(f"bundle has {len(bundle.windows)} windows, "
                             f"config implies {cfg.n_windows}")
    key_size = max(Schema(cfg, cfg.window_steps(k)).key_size() for k in range(cfg.n_windows))
    key = CommitKey.derive(cfg.key_seed, key_size)
    prev = None
    for (k, first, schema), wp in zip(_schedule(cfg), bundle.windows):
        t0 = time.perf_counter()
        prev = verify_window(schema, key, wp, k, first, prev)
        if timings is not None:
            timings.append((time.perf_counter() - t0) * 1000)


def verify_bundle(bundle, cfg: ProofConfig) -> tuple[bool, str]:
    """(accepted, result kind) without raising."""
    try:
        verify_training(bundle, cfg)
    except VerificationError as e:
        return False, f"{e.kind}: {e}"
    return True, "accept"


def measure(result: ProveResult, cfg: ProofConfig, verify: bool = True) -> list[WindowMetrics]:
    """Fill verification times and return per-window PT/CS/PS/VT."""
    if not result.metrics or not result.bundle.windows:
        raise ValueError("no windows to measure")
    if verify:
        times: list[float] = []
        verify_training(result.bundle, cfg, times)
        for m, t in zip(result.metrics, times):
            m.vt_ms = t
    return result.metrics


def per_step_summary(metrics: Sequence[WindowMetrics]) -> dict[str, float]:
    if not metrics:
        raise ValueError("no windows to summarize")
    steps = sum(m.steps for m in metrics)
    return {"pt_ms": sum(m.pt_ms for m in metrics) / steps,
            "cs_bytes": sum(m.cs_bytes for m in metrics) / steps,
            "ps_bytes": sum(m.ps_bytes for m in metrics) / steps,
            "vt_ms": sum(m.vt_ms for m in metrics) / steps}
