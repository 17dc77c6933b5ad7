"""Glue: data -> training trace -> proof bundle, shared by the CLI and tests."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .field import QuantParams
from .orchestrator import AuxTamper, ProofConfig, ProveResult, Schema, prove_training
from .trainer import (Dataset, Tamper, TrainingTrace, init_params, load_dataset, quantize_rows,
                      synthetic, train)

AUX_FAMILIES = ("aux_relu", "aux_loss", "aux_update")


@dataclass
class RunSpec:
    cfg: ProofConfig
    seed: int = 0
    data: str | Path | None = None
    fmt: str = "csv"
    synthetic_rows: int = 64


def dataset_for(spec: RunSpec) -> Dataset:
    cfg = spec.cfg
    qp = cfg.qp
    if spec.data is None:
        feats, labs = synthetic(max(spec.synthetic_rows, cfg.batch), cfg.dims[0], cfg.dims[-1],
                                spec.seed)
        return Dataset(quantize_rows(feats, qp), quantize_rows(labs, qp))
    return load_dataset(spec.data, spec.fmt, cfg.dims[0], cfg.dims[-1], qp)


def make_trace(spec: RunSpec, tamper: Tamper | None = None) -> TrainingTrace:
    cfg = spec.cfg
    qp = QuantParams(cfg.q_bits, cfg.r_bits)
    ds = dataset_for(spec)
    params = init_params(cfg.dims, qp, cfg.lr_shift, spec.seed)
    _, trace = train(params, ds.batches(cfg.batch, cfg.steps, spec.seed), qp, tamper)
    return trace


def parse_corruption(text: str) -> dict[str, str]:
    """'family=GW step=3 layer=1 index=5' -> dict; unknown keys are rejected."""
    out = {}
    for part in text.replace(",", " ").split():
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        if k not in ("family", "step", "layer", "index", "delta"):
            raise ValueError(f"unknown corruption key {k!r}")
        out[k] = v
    if "family" not in out:
        raise ValueError("corruption needs family=<name>")
    return out


def prove_corrupted(spec: RunSpec, family: str, step: int, layer: int = 1, index: int = 0,
                    delta: int = 1, rng_seed=None) -> ProveResult:
    """Prove a run whose trace lies in one place; the verifier must reject it."""
    cfg = spec.cfg
    if family in AUX_FAMILIES:
        if not 0 <= step < cfg.steps:
            raise ValueError("step out of range")
        trace = make_trace(spec)
        k, tau = divmod(step, cfg.window)
        schema = Schema(cfg, cfg.window_steps(k))
        if family == "aux_loss":
            slot = tau
        elif family == "aux_relu":
            if schema.H == 0:
                raise ValueError("a one-layer net has no ReLU")
            slot = schema.hidden_slot(tau, min(max(layer, 1), schema.H))
        else:
            slot = schema.layer_slot(tau, min(max(layer, 1), schema.L))
        return prove_training(trace, cfg, rng_seed=spec.seed if rng_seed is None else rng_seed,
                              aux_tamper=(k, AuxTamper(family, slot, index)))
    if family == "W" and step == 0:
        raise ValueError("the initial weights are free; corrupt W at a step >= 1")
    trace = make_trace(spec, Tamper(family, step, layer, index, delta))
    return prove_training(trace, cfg, rng_seed=spec.seed if rng_seed is None else rng_seed)
