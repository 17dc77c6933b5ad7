"""Fixed-point training of a bias-free ReLU MLP with square loss and SGD.

All arithmetic is on exact Python integers held in numpy object arrays,
so results are bit-identical everywhere.  Scales:

* X, A, W, G_Z, Y at 2^R;
* Z and G_A, G_W (products) at 2^2R before rescaling.

One training step, layers 1..L:

    Z^l   = A^{l-1} W^l                 A^l = relu(Z^l)       (l < L)
    G_Z^L = round(Z^L / 2^R) - Y
    G_A^l = G_Z^{l+1} W^{l+1}^T         G_Z^l = relu'(Z^l, G_A^l)
    G_W^l = G_Z^l^T A^{l-1}             W^l  -= round(G_W^l^T / 2^(R+k))
"""
from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .field import QuantOverflow, QuantParams, quantize
from .zkrelu import relu_backward, relu_forward

F32_MAGIC = b"ZKDS"


def _ints(a) -> np.ndarray:
    return np.array(a, dtype=object)


def rshift_round(v: np.ndarray, shift: int) -> np.ndarray:
    """Half-up rounding division by 2^shift, elementwise."""
    return (v + (1 << (shift - 1))) >> shift


def _check_range(t: np.ndarray, width: int, what: str):
    if t.size == 0:
        return
    lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
    mx, mn = max(t.flat), min(t.flat)
    if mx > hi or mn < lo:
        worst = mx if mx > hi else mn
        idx = np.unravel_index(list(t.flat).index(worst), t.shape)
        raise QuantOverflow(
            f"{what}: entry {tuple(int(i) for i in idx)} = {worst} exceeds the "
            f"{width}-bit signed range; shrink the inputs or weights, or raise --q-bits")


@dataclass
class ModelParams:
    weights: list[np.ndarray]
    lr_shift: int

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], self.lr_shift)


def init_params(dims: Sequence[int], qp: QuantParams, lr_shift: int, seed: int) -> ModelParams:
    """Uniform integer weights in [-2^(R-2), 2^(R-2)] from a seeded generator."""
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError("need at least an input and an output width, all positive")
    if not 0 <= lr_shift < qp.q_bits:
        raise ValueError(f"learning-rate shift must lie in [0, {qp.q_bits})")
    rng = np.random.default_rng(seed)
    lim = 1 << (qp.r_bits - 2)
    ws = []
    for a, b in zip(dims[:-1], dims[1:]):
        ws.append(_ints(rng.integers(-lim, lim + 1, size=(a, b)).tolist()))
    return ModelParams(ws, lr_shift)


# single-step pieces -------------------------------------------------------

def _nohook(name: str, layer: int, t: np.ndarray) -> np.ndarray:
    return t


def forward(params: ModelParams, x: np.ndarray, qp: QuantParams, where: str = "",
            hook=_nohook) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pre-activations Z^1..Z^L and hidden activations A^1..A^{L-1}."""
    zs, acts = [], []
    a = x
    for l, w in enumerate(params.weights, start=1):
        z = hook("Z", l, a.dot(w))
        _check_range(z, qp.width, f"{where}Z^{l}")
        zs.append(z)
        if l < params.n_layers:
            a = hook("A", l, relu_forward(z, qp.r_bits))
            acts.append(a)
    return zs, acts


def rescale_top(z_top: np.ndarray, qp: QuantParams) -> tuple[np.ndarray, np.ndarray]:
    """round(Z^L / 2^R) and the remainder Z^L - 2^R * that."""
    q = rshift_round(z_top, qp.r_bits)
    return q, z_top - (q << qp.r_bits)


def loss_grad(z_top_rescaled: np.ndarray, y: np.ndarray) -> np.ndarray:
    if z_top_rescaled.shape != y.shape:
        raise ValueError(f"output shape {z_top_rescaled.shape} vs labels {y.shape}")
    return z_top_rescaled - y


def backward(params: ModelParams, x: np.ndarray, zs: list[np.ndarray], acts: list[np.ndarray],
             gz_top: np.ndarray, qp: QuantParams, where: str = "", hook=_nohook
             ) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """(G_A^1..G_A^{L-1}, G_Z^1..G_Z^L, G_W^1..G_W^L)."""
    n = params.n_layers
    gzs: list = [None] * n
    gas: list = [None] * (n - 1)
    gws: list = [None] * n
    gzs[-1] = gz_top
    for l in range(n, 0, -1):
        a_prev = x if l == 1 else acts[l - 2]
        gw = hook("GW", l, gzs[l - 1].T.dot(a_prev))
        _check_range(gw, qp.width, f"{where}G_W^{l}")
        gws[l - 1] = gw
        if l > 1:
            ga = hook("GA", l - 1, gzs[l - 1].dot(params.weights[l - 1].T))
            _check_range(ga, qp.width, f"{where}G_A^{l - 1}")
            gas[l - 2] = ga
            gzs[l - 2] = hook("GZ", l - 1, relu_backward(zs[l - 2], ga, qp.r_bits))
    return gas, gzs, gws


def sgd_update(w: np.ndarray, gw: np.ndarray, qp: QuantParams, lr_shift: int
               ) -> tuple[np.ndarray, np.ndarray]:
    """W - round(G_W^T / 2^(R+k)); returns (new weights, remainder tensor)."""
    shift = qp.r_bits + lr_shift
    step = rshift_round(gw, shift)
    rem = gw - (step << shift)
    return w - step.T, rem


# trace ------------------------------------------------------------------

@dataclass
class StepTrace:
    x: np.ndarray
    y: np.ndarray
    w: list[np.ndarray]
    z: list[np.ndarray]
    a: list[np.ndarray]
    gz: list[np.ndarray]
    ga: list[np.ndarray]
    gw: list[np.ndarray]
    w_new: list[np.ndarray]
    top_rem: np.ndarray
    update_rem: list[np.ndarray]


@dataclass
class TrainingTrace:
    dims: list[int]
    qp: QuantParams
    lr_shift: int
    steps: list[StepTrace] = dc_field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def weights_at(self, t: int) -> list[np.ndarray]:
        """Weights before step t (t == len(steps) gives the final ones)."""
        if t == len(self.steps):
            return self.steps[-1].w_new
        return self.steps[t].w

    def digest(self) -> bytes:
        h = hashlib.sha256()
        for st in self.steps:
            for t in [st.x, st.y, *st.w, *st.z, *st.a, *st.gz, *st.ga, *st.gw, *st.w_new]:
                h.update(repr(t.shape).encode())
                h.update(",".join(map(str, t.flat)).encode())
        return h.digest()


@dataclass(frozen=True)
class Tamper:
    """Add `delta` to one entry of one trace tensor; everything downstream is
    then recomputed honestly from the altered value.

    tensor is one of Z, A, GZ, GA, GW, W (W: the weights entering `step`).
    """

    tensor: str
    step: int
    layer: int
    index: int
    delta: int = 1

    def apply(self, t: np.ndarray) -> np.ndarray:
        t = t.copy()
        flat = t.reshape(-1)
        flat[self.index % flat.size] += self.delta
        return t


TAMPERABLE = ("Z", "A", "GZ", "GA", "GW", "W")


def train_step(params: ModelParams, x: np.ndarray, y: np.ndarray, qp: QuantParams,
               where: str = "", tamper: Tamper | None = None) -> tuple[ModelParams, StepTrace]:
    def hook(name, layer, t):
        if tamper is not None and tamper.tensor == name and tamper.layer == layer:
            return tamper.apply(t)
        return t

    if tamper is not None and tamper.tensor == "W":
        params = params.copy()
        params.weights[tamper.layer - 1] = tamper.apply(params.weights[tamper.layer - 1])
    for l, w in enumerate(params.weights, start=1):
        _check_range(w, qp.width, f"{where}W^{l}")
    zs, acts = forward(params, x, qp, where, hook)
    z_hat, top_rem = rescale_top(zs[-1], qp)
    gz_top = hook("GZ", params.n_layers, loss_grad(z_hat, y))
    _check_range(gz_top, qp.width, f"{where}G_Z^{params.n_layers}")
    gas, gzs, gws = backward(params, x, zs, acts, gz_top, qp, where, hook)
    new_w, rems = [], []
    for w, gw in zip(params.weights, gws):
        nw, rem = sgd_update(w, gw, qp, params.lr_shift)
        new_w.append(nw)
        rems.append(rem)
    st = StepTrace(x, y, [w.copy() for w in params.weights], zs, acts, gzs, gas, gws,
                   new_w, top_rem, rems)
    return ModelParams(new_w, params.lr_shift), st


def train(params: ModelParams, batches: Sequence[tuple[np.ndarray, np.ndarray]],
          qp: QuantParams, tamper: Tamper | None = None) -> tuple[ModelParams, TrainingTrace]:
    if tamper is not None:
        if tamper.tensor not in TAMPERABLE:
            raise ValueError(f"cannot tamper with {tamper.tensor!r}; choose from {TAMPERABLE}")
        if not 0 <= tamper.step < len(batches) or not 1 <= tamper.layer <= params.n_layers:
            raise ValueError("tamper step or layer out of range")
    trace = TrainingTrace(params.dims, qp, params.lr_shift)
    for t, (x, y) in enumerate(batches):
        if x.shape[1] != params.dims[0] or y.shape[1] != params.dims[-1]:
            raise ValueError(f"batch {t}: shapes {x.shape}, {y.shape} do not fit the model")
        hit = tamper if tamper is not None and tamper.step == t else None
        params, st = train_step(params, x, y, qp, where=f"step {t}: ", tamper=hit)
        trace.steps.append(st)
    return params, trace


def dequantized_loss(weights: Sequence[np.ndarray], x: np.ndarray, y: np.ndarray,
                     r_bits: int) -> float:
    """Float surrogate of the square loss, 0.5 * ||out - y||^2."""
    s = float(1 << r_bits)
    a = np.array(x.tolist(), dtype=float) / s
    for l, w in enumerate(weights, start=1):
        a = a @ (np.array(w.tolist(), dtype=float) / s)
        if l < len(weights):
            a = np.maximum(a, 0.0)
    diff = a - np.array(y.tolist(), dtype=float) / s
    return 0.5 * float((diff * diff).sum())


# data -------------------------------------------------------------------

class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray        # object ints at 2^R
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.features)

    def batches(self, batch: int, steps: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """Seeded reshuffle each epoch; each batch has exactly `batch` rows."""
        if batch < 1 or batch > len(self):
            raise DatasetError(f"batch size {batch} with {len(self)} rows")
        rng = np.random.default_rng(seed)
        out = []
        order: list[int] = []
        while len(out) < steps:
            if len(order) < batch:
                order = order + rng.permutation(len(self)).tolist()
            idx, order = order[:batch], order[batch:]
            out.append((self.features[idx], self.labels[idx]))
        return out


def quantize_rows(rows: list[list[float]], qp: QuantParams) -> np.ndarray:
    return _ints([[quantize(v, qp.r_bits, qp.width) for v in r] for r in rows])


def load_dataset(path: str | Path, fmt: str, n_features: int, n_labels: int,
                 qp: QuantParams) -> Dataset:
    path = Path(path)
    if fmt == "csv":
        feats, labs = _read_csv(path, n_features, n_labels)
    elif fmt == "f32bin":
        feats, labs = _read_f32(path, n_features, n_labels)
    else:
        raise DatasetError(f"unknown dataset format {fmt!r}")
    if not feats:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(quantize_rows(feats, qp), quantize_rows(labs, qp))


def _read_csv(path: Path, nf: int, nl: int):
    feats, labs = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        if len(header) != nf + nl:
            raise DatasetError(f"{path}: line 1: header has {len(header)} columns, "
                               f"expected {nf} features + {nl} labels")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != nf + nl:
                raise DatasetError(f"{path}: line {line}: {len(row)} columns, expected {nf + nl}")
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(f"{path}: line {line}, column {col}: "
                                       f"not a number: {cell!r}") from None
                if not np.isfinite(v):
                    raise DatasetError(f"{path}: line {line}, column {col}: non-finite value")
                vals.append(v)
            feats.append(vals[:nf])
            labs.append(vals[nf:])
    return feats, labs


def _read_f32(path: Path, nf: int, nl: int):
    """Header: magic, u32 rows, u32 features, u32 labels (little endian)."""
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != F32_MAGIC:
        raise DatasetError(f"{path}: missing {F32_MAGIC!r} header")
    rows, f, l = struct.unpack("<III", data[4:16])
    if (f, l) != (nf, nl):
        raise DatasetError(f"{path}: file has {f} features / {l} labels, expected {nf} / {nl}")
    need = 16 + rows * (f + l) * 4
    if len(data) != need:
        raise DatasetError(f"{path}: size {len(data)} bytes, header implies {need}")
    arr = np.frombuffer(data[16:], dtype="<f4").reshape(rows, f + l).astype(float)
    if not np.isfinite(arr).all():
        r = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise DatasetError(f"{path}: row {r}: non-finite value")
    return arr[:, :f].tolist(), arr[:, f:].tolist()


def write_f32(path: str | Path, features, labels):
    feats = np.asarray(features, dtype="<f4")
    labs = np.asarray(labels, dtype="<f4")
    body = np.concatenate([feats, labs], axis=1).astype("<f4").tobytes()
    Path(path).write_bytes(F32_MAGIC + struct.pack("<III", len(feats), feats.shape[1],
                                                   labs.shape[1]) + body)


def write_csv(path: str | Path, features, labels):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        nf, nl = len(features[0]), len(labels[0])
        w.writerow([f"x{i}" for i in range(nf)] + [f"y{i}" for i in range(nl)])
        for f, l in zip(features, labels):
            w.writerow([repr(float(v)) for v in f] + [repr(float(v)) for v in l])


def synthetic(n_rows: int, n_features: int, n_labels: int, seed: int,
              amplitude: float = 1 / 32) -> tuple[list[list[float]], list[list[float]]]:
    """Small-amplitude features with one-hot labels from a random linear teacher.

    The amplitude keeps every 2^2R product inside the default 32-bit range.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-amplitude, amplitude, size=(n_rows, n_features))
    teacher = rng.standard_normal((n_features, n_labels))
    cls = np.argmax(x @ teacher, axis=1)
    y = np.zeros((n_rows, n_labels))
    y[np.arange(n_rows), cls] = 1.0
    # round-trip through float32 so csv and binary files quantize identically
    return (x.astype(np.float32).astype(float).tolist(), y.tolist())


def batch_stream_digest(batches: Sequence[tuple[np.ndarray, np.ndarray]]) -> str:
    h = hashlib.sha256()
    for x, y in batches:
        h.update(",".join(map(str, x.flat)).encode() + b";" + ",".join(map(str, y.flat)).encode())
    return h.hexdigest()
