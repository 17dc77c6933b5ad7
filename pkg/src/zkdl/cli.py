"""Command-line entry points: train-prove, verify, bench, tamper.

Exit codes: 0 accept/success, 1 proof rejected, 2 usage or configuration
(including missing input files and fixed-point overflow), 3 other I/O
failures, 4 internal errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from .field import QuantOverflow
from .orchestrator import (DEFAULT_KEY_SEED, ProofBundle, ProofConfig, measure,
                           per_step_summary, prove_training, verify_training)
from .pipeline import AUX_FAMILIES, RunSpec, make_trace, parse_corruption, prove_corrupted
from .trainer import TAMPERABLE, DatasetError
from .wire import VerificationError

EXIT_OK, EXIT_REJECT, EXIT_USAGE, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3, 4
METRICS_HEADER = "window,pt_ms,cs_bytes,ps_bytes,vt_ms"


class UsageError(Exception):
    pass


class MissingInput(Exception):
    pass


def parse_layers(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"--layers wants comma-separated integers, got {text!r}") from None
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise UsageError(f"--layers needs at least two positive widths, got {text!r}")
    return dims


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", help="dataset path; a seeded synthetic set is used if omitted")
    p.add_argument("--format", choices=("csv", "f32bin"), default="csv")
    p.add_argument("--layers", default="32,16,4", help="widths including the input, e.g. 32,16,4")
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--window", type=int, default=16, help="aggregation window T'")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--q-bits", type=int, default=16)
    p.add_argument("--r-bits", type=int, default=16)
    p.add_argument("--lr-shift", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--key-seed", help="public commitment key seed, 64 hex digits")
    p.add_argument("--no-hiding", action="store_true", help="zero blinders (debug only)")


def config_from_args(a) -> ProofConfig:
    dims = parse_layers(a.layers)
    key = DEFAULT_KEY_SEED
    if a.key_seed:
        try:
            key = bytes.fromhex(a.key_seed)
        except ValueError:
            raise UsageError("--key-seed must be hex") from None
    try:
        return ProofConfig(dims, a.batch, a.steps, a.window, a.q_bits, a.r_bits, a.lr_shift,
                           key, not a.no_hiding)
    except ValueError as e:
        raise UsageError(str(e)) from None


def config_to_json(cfg: ProofConfig) -> dict:
    return {"layers": list(cfg.dims), "batch": cfg.batch, "steps": cfg.steps,
            "window": cfg.window, "q_bits": cfg.q_bits, "r_bits": cfg.r_bits,
            "lr_shift": cfg.lr_shift, "key_seed": cfg.key_seed.hex(), "hiding": cfg.hiding}


def config_from_json(d: dict) -> ProofConfig:
    try:
        return ProofConfig(tuple(d["layers"]), d["batch"], d["steps"], d["window"], d["q_bits"],
                           d["r_bits"], d["lr_shift"], bytes.fromhex(d["key_seed"]),
                           bool(d["hiding"]))
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"manifest config is invalid: {e}") from None


def _spec(a, cfg: ProofConfig) -> RunSpec:
    if a.data is not None and not Path(a.data).exists():
        raise MissingInput(f"dataset not found: {a.data}")
    return RunSpec(cfg, seed=a.seed, data=a.data, fmt=a.format)


def _write(path: str, data: bytes | str):
    p = Path(path)
    if isinstance(data, str):
        p.write_text(data)
    else:
        p.write_bytes(data)


def manifest_for(cfg: ProofConfig, bundle: ProofBundle, data: bytes) -> dict:
    return {
        "format": "zkdl-manifest/1",
        "config": config_to_json(cfg),
        "config_hash": cfg.digest().hex(),
        "bundle_sha256": hashlib.sha256(data).hexdigest(),
        "windows": [{"window": w.index, "first_step": w.first_step, "steps": w.n_steps,
                     "commitments": {n: [r.hex() for r in c.rows]
                                     for n, c in zip(_family_names(cfg, w), w.commitments)}}
                    for w in bundle.windows],
    }


def _family_names(cfg: ProofConfig, w) -> list[str]:
    from .orchestrator import Schema
    return list(Schema(cfg, w.n_steps).families)


def _metrics_lines(metrics) -> list[str]:
    return [METRICS_HEADER] + [f"{m.window},{m.pt_ms:.1f},{m.cs_bytes},{m.ps_bytes},{m.vt_ms:.1f}"
                               for m in metrics]


# commands -----------------------------------------------------------------

def cmd_train_prove(a) -> int:
    cfg = config_from_args(a)
    spec = _spec(a, cfg)
    trace = make_trace(spec)
    res = prove_training(trace, cfg, rng_seed=a.seed)
    data = res.bundle.to_bytes()
    metrics = measure(res, cfg, verify=not a.skip_self_check)
    _write(a.out, data)
    if a.manifest:
        _write(a.manifest, json.dumps(manifest_for(cfg, res.bundle, data), indent=1))
    print("\n".join(_metrics_lines(metrics)))
    return EXIT_OK


def _load_verify_config(a) -> ProofConfig:
    if a.manifest:
        p = Path(a.manifest)
        if not p.exists():
            raise MissingInput(f"manifest not found: {a.manifest}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise UsageError(f"manifest is not JSON: {e}") from None
        return config_from_json(doc.get("config", {}))
    return config_from_args(a)


def cmd_verify(a) -> int:
    p = Path(a.proof)
    if not p.exists():
        raise MissingInput(f"proof bundle not found: {a.proof}")
    cfg = _load_verify_config(a)
    data = p.read_bytes()
    t0 = time.perf_counter()
    try:
        verify_training(data, cfg)
    except VerificationError as e:
        print(f"REJECT {e.kind}: {e}")
        return EXIT_REJECT
    print(f"ACCEPT in {(time.perf_counter() - t0) * 1000:.0f} ms")
    return EXIT_OK


def parse_sweep(text: str | None) -> tuple[str, list]:
    if not text or "=" not in text:
        raise UsageError("--sweep wants window=1,4,16 or layers=8,4,2/16,8,2")
    key, vals = text.split("=", 1)
    vals = vals.strip()
    if not vals:
        raise UsageError("empty sweep")
    if key == "window":
        try:
            out = [int(v) for v in vals.split(",") if v]
        except ValueError:
            raise UsageError(f"bad window list {vals!r}") from None
    elif key == "layers":
        out = [parse_layers(v) for v in vals.split("/") if v]
    else:
        raise UsageError(f"cannot sweep {key!r}; use window or layers")
    if not out:
        raise UsageError("empty sweep")
    return key, out


def cmd_bench(a) -> int:
    key, values = parse_sweep(a.sweep)
    if key == "window":
        a.window = min(values)
    base = config_from_args(a)
    print("sweep,value,pt_ms,cs_bytes,ps_bytes,vt_ms")
    for v in values:
        fields = dict(config_to_json(base))
        if key == "window":
            fields["window"] = v
        else:
            fields["layers"] = list(v)
        cfg = config_from_json(fields)
        spec = _spec(a, cfg)
        res = prove_training(make_trace(spec), cfg, rng_seed=a.seed)
        s = per_step_summary(measure(res, cfg))
        label = v if key == "window" else "-".join(map(str, v))
        print(f"{key},{label},{s['pt_ms']:.1f},{s['cs_bytes']:.1f},{s['ps_bytes']:.1f},"
              f"{s['vt_ms']:.2f}", flush=True)
    return EXIT_OK


def cmd_tamper(a) -> int:
    if (a.flip_byte is None) == (a.corrupt_tensor is None):
        raise UsageError("give exactly one of --flip-byte or --corrupt-tensor")
    if a.flip_byte is not None:
        if not a.proof:
            raise UsageError("--flip-byte needs --proof")
        p = Path(a.proof)
        if not p.exists():
            raise MissingInput(f"proof bundle not found: {a.proof}")
        data = bytearray(p.read_bytes())
        if not 0 <= a.flip_byte < len(data):
            raise UsageError(f"--flip-byte {a.flip_byte} outside the {len(data)}-byte bundle")
        data[a.flip_byte] ^= 0x01
        _write(a.out, bytes(data))
        print(f"flipped byte {a.flip_byte}; wrote {a.out}")
        return EXIT_OK
    try:
        c = parse_corruption(a.corrupt_tensor)
        fam = c["family"]
        if fam not in TAMPERABLE and fam not in AUX_FAMILIES:
            raise ValueError(f"unknown family {fam!r}; choose from "
                             f"{', '.join(TAMPERABLE + AUX_FAMILIES)}")
        step, layer = int(c.get("step", 0)), int(c.get("layer", 1))
        index, delta = int(c.get("index", 0)), int(c.get("delta", 1))
    except ValueError as e:
        raise UsageError(str(e)) from None
    cfg = config_from_args(a)
    spec = _spec(a, cfg)
    try:
        res = prove_corrupted(spec, fam, step, layer, index, delta, rng_seed=a.seed)
    except ValueError as e:
        raise UsageError(str(e)) from None
    _write(a.out, res.bundle.to_bytes())
    print(f"re-proved with {fam} corrupted at step {step}; wrote {a.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zkdl", description="Provable fixed-point MLP training.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("train-prove", help="train, prove, write the bundle")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="proof bundle output path")
    p.add_argument("--manifest", help="public commitment manifest (JSON) output path")
    p.add_argument("--skip-self-check", action="store_true", help="do not time verification")
    p.set_defaults(fn=cmd_train_prove)

    p = sub.add_parser("verify", help="verify a bundle")
    _add_config_flags(p)
    p.add_argument("--proof", required=True)
    p.add_argument("--manifest", help="read public parameters from this manifest")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bench", help="sweep a parameter, print per-step metrics as CSV")
    _add_config_flags(p)
    p.add_argument("--sweep", help="window=1,4,16 or layers=8,4,2/16,8,2")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("tamper", help="mutate a bundle or re-prove a lying trace")
    _add_config_flags(p)
    p.add_argument("--proof", help="input bundle (for --flip-byte)")
    p.add_argument("--out", required=True)
    p.add_argument("--flip-byte", type=int)
    p.add_argument("--corrupt-tensor", help="e.g. 'family=GW step=3 layer=1 index=0'")
    p.set_defaults(fn=cmd_tamper)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return a.fn(a)
    except (UsageError, MissingInput, DatasetError, ValueError) as e:
        print(f"error (config): {e}", file=sys.stderr)
        return EXIT_USAGE
    except QuantOverflow as e:
        print(f"error (overflow): {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error (io): {e}", file=sys.stderr)
        return EXIT_IO
    except Exception as e:  # pragma: no cover - last resort
        print(f"error (internal): {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
