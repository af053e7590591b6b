"""Desk-scale reproductions of the two evaluation families.

SSH: shuffled summation of ill-conditioned sign-alternating data, run
through three summation units (a float64 chain, an emulated ieee:15:112
chain, and the fused scratchpad unit), reporting mean / RSD /
correct-bits over shuffles.

AI: accumulator sweeps over a fixture network, Top1/Top5 per sweep
point, every product routed through the tailored GEMM.

Report rows are plain dicts with pinned column orders (SSH_FIELDS,
AI_FIELDS) so CSV and JSON emissions are deterministic.
"""

from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import nnet, vectorized
from .accumulator import AccumulatorSpec, AccumulatorState, parse_acc
from .fdp import DotProductConfig, correct_bits, exact_add
from .formats import (
    FLOAT64,
    QUAD,
    FormatSpec,
    decode,
    decoded_from_float,
    decode_to_float,
    encode,
    float64_to_word,
    fraction_to_float,
    make_format,
    word_to_float64,
)
from .gemm import KernelConfig, query_config

__all__ = [
    "AI_FIELDS",
    "SSH_FIELDS",
    "SummationUnit",
    "ai_proxy_experiment",
    "fma64_chain",
    "fma128_chain",
    "fdp_chain",
    "gen_ssh_data",
    "parse_unit",
    "parse_units",
    "report_emit",
    "report_parse",
    "ssh_experiment",
    "sweep_enumerate",
]

SSH_FIELDS = ["unit", "size", "mean", "rsd", "correct_bits", "shuffles"]
AI_FIELDS = ["model", "dataset", "format", "ovf", "msb", "lsb", "top1", "top5"]


# ---------------------------------------------------------------------------
# Data generator.

def gen_ssh_data(n: int, seed: int = 0) -> np.ndarray:
    """Sign-alternating pairs (x, -x) with magnitudes 1e10..1e15 and one
    designated pair perturbed so the exact sum is a small number.

    Every float64 in [2^32, 2^50) is automatically a multiple of 2^-20,
    so no explicit quantization is needed for the bulk values.  The
    designated pair lives in [1e10, 2^34) where the quantum is 2^-19;
    its perturbation delta is drawn on that grid from [0.5, 2.0], making
    the exact sum equal to delta, representable without truncation by
    any scratchpad with lsb <= -20.
    """
    n = int(n)
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    rng = np.random.default_rng([0x55A1, int(seed), n])
    m = n // 2
    mags = np.clip(10.0 ** rng.uniform(10.0, 15.0, size=m), 1.0e10, 1.0e15)
    out = np.empty(n, dtype=np.float64)
    out[0::2] = mags
    out[1::2] = -mags
    d = int(rng.integers(0, m))
    xd = float(rng.uniform(1.0e10, 1.7e10))
    delta = round(float(rng.uniform(0.5, 2.0)) * (1 << 19)) / float(1 << 19)
    out[2 * d] = xd
    out[2 * d + 1] = -(xd - delta)
    return out


# ---------------------------------------------------------------------------
# Summation units.

@dataclass(frozen=True)
class SummationUnit:
    label: str
    kind: str  # fma64 | fma128 | fdp
    spec: Optional[AccumulatorSpec] = None


def parse_unit(text: str) -> SummationUnit:
    low = text.strip().lower()
    if low == "fma64":
        return SummationUnit("fma64", "fma64")
    if low == "fma128":
        return SummationUnit("fma128", "fma128")
    if low.startswith("fdp:"):
        spec = parse_acc(low[4:])
        return SummationUnit(f"fdp:{spec.ovf}:{spec.msb}:{spec.lsb}", "fdp", spec)
    raise ValueError(f"unknown unit {text!r} (want fma64, fma128, or fdp:<ovf>:<msb>:<lsb>)")


def parse_units(text: str) -> list:
    return [parse_unit(part) for part in text.split(",") if part.strip()]


def fma64_chain(values) -> float:
    """Left-to-right float64 accumulation, one rounding per step."""
    s = 0.0
    for v in values:
        s = s + float(v)
    return s


def fma128_chain(values) -> float:
    """Left-to-right emulated ieee:15:112 accumulation, rendered to float64."""
    s = decoded_from_float(0.0)
    for v in values:
        exact = exact_add(s, decoded_from_float(float(v)))
        s = decode(encode(exact, QUAD), QUAD)
    return decode_to_float(encode(s, FLOAT64), FLOAT64)


def fdp_chain(values, spec: AccumulatorSpec) -> float:
    """Scratchpad accumulation of raw float64 terms, rendered to float64."""
    st = AccumulatorState(spec)
    for v in values:
        st.add_value(decoded_from_float(float(v)))
    return decode_to_float(st.render(FLOAT64), FLOAT64)


def _unit_outcomes(unit: SummationUnit, rows: np.ndarray) -> np.ndarray:
    """One outcome per row of shuffled data."""
    if unit.kind == "fma64":
        return vectorized.fma64_rows(rows)
    if unit.kind == "fdp":
        try:
            return vectorized.fdp_rows(rows, unit.spec)
        except vectorized.Ineligible:
            return np.array([fdp_chain(r, unit.spec) for r in rows])
    if unit.kind == "fma128":
        return np.array([fma128_chain(r) for r in rows])
    raise ValueError(f"unknown unit kind {unit.kind!r}")


def _outcome_stats(counter: Counter, total: int, exact: Fraction):
    """(mean, rsd, mean correct_bits) over a multiset of float64 words."""
    vals = [(word_to_float64(w), c) for w, c in counter.items()]
    cb = sum(correct_bits(v, exact) * c for v, c in vals) / total
    if any(not math.isfinite(v) for v, _ in vals):
        return math.nan, math.nan, cb
    mean = sum(Fraction(v) * c for v, c in vals) / total
    if len(vals) == 1 or total < 2:
        rsd = 0.0
    elif mean == 0:
        rsd = math.inf
    else:
        var = sum((Fraction(v) - mean) ** 2 * c for v, c in vals) / (total - 1)
        rsd = math.sqrt(float(var)) / abs(fraction_to_float(mean))
    return fraction_to_float(mean), rsd, cb


_SHUFFLE_CHUNK = 64


def ssh_experiment(sizes: Sequence[int], shuffles: int = 1000,
                   units: Sequence = ("fma64", "fma128", "fdp:30:30:-30"),
                   seed: int = 0, progress=None) -> list:
    """Rows of SSH_FIELDS dicts, one per (size, unit), in listing order.

    All units see the same shuffles.  The ieee:15:112 chain is
    permutation-invariant whenever every partial sum is exactly
    representable; that certificate lets generated datasets skip the
    per-shuffle emulation.
    """
    unit_objs = [u if isinstance(u, SummationUnit) else parse_unit(u) for u in units]
    shuffles = int(shuffles)
    if shuffles < 1:
        raise ValueError("shuffles must be >= 1")
    out_rows = []
    for size in sizes:
        data = gen_ssh_data(size, seed)
        exact = vectorized.exact_sum_fraction(data)
        counters = {u.label: Counter() for u in unit_objs}
        quad_word = None
        if any(u.kind == "fma128" for u in unit_objs) and vectorized.quad_chain_is_exact(data):
            quad_word = float64_to_word(fraction_to_float(exact))
        rng = np.random.default_rng([0x5F17, int(seed), int(size)])
        index = np.arange(size)
        done = 0
        while done < shuffles:
            c = min(_SHUFFLE_CHUNK, shuffles - done)
            perms = rng.permuted(np.broadcast_to(index, (c, size)), axis=1)
            rows = data[perms]
            for u in unit_objs:
                if u.kind == "fma128" and quad_word is not None:
                    counters[u.label][quad_word] += c
                    continue
                for o in _unit_outcomes(u, rows):
                    counters[u.label][float64_to_word(float(o))] += 1
            done += c
            if progress is not None:
                progress(size, done, shuffles)
        for u in unit_objs:
            mean, rsd, cb = _outcome_stats(counters[u.label], shuffles, exact)
            out_rows.append({"unit": u.label, "size": int(size), "mean": mean,
                             "rsd": rsd, "correct_bits": cb, "shuffles": shuffles})
    return out_rows


# ---------------------------------------------------------------------------
# Accumulator sweeps over the fixture network.

_AXES = ("lsb", "msb", "ovf")


def sweep_enumerate(axis: str, base: AccumulatorSpec, values: Sequence[int]) -> list:
    """base with the chosen axis replaced by each value, validity-checked."""
    axis = axis.strip().lower()
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {_AXES}, got {axis!r}")
    out = []
    for v in values:
        v = int(v)
        fields = {"ovf": base.ovf, "msb": base.msb, "lsb": base.lsb}
        fields[axis] = v
        out.append(AccumulatorSpec(**fields))
    return out


def ai_proxy_experiment(model_file, dataset_file, sweep: Sequence,
                        base_config: Optional[KernelConfig] = None,
                        workers: int = 1) -> list:
    """Rows of AI_FIELDS dicts, one per (format, AccumulatorSpec) point."""
    model = nnet.load_model(model_file)
    images, labels = nnet.load_dataset(dataset_file)
    if base_config is None:
        base_config = query_config()
    dataset_id = os.path.splitext(os.path.basename(os.fspath(dataset_file)))[0]
    rows = []
    for fmt, acc in sweep:
        if isinstance(fmt, str):
            fmt = make_format(fmt)
        cfg = KernelConfig(
            DotProductConfig(fmt, acc),
            array_rows=base_config.array_rows,
            array_cols=base_config.array_cols,
            backend=base_config.backend,
            fifo_depth=base_config.fifo_depth,
        )
        scores = nnet.forward(model, images, cfg=cfg, workers=workers)
        top1, top5 = nnet.accuracy(scores, labels, k=5)
        rows.append({"model": model.name, "dataset": dataset_id,
                     "format": fmt.descriptor, "ovf": acc.ovf, "msb": acc.msb,
                     "lsb": acc.lsb, "top1": top1, "top5": top5})
    return rows


# ---------------------------------------------------------------------------
# Report plumbing.

def _schema_for(rows: Sequence) -> list:
    if rows and "unit" in rows[0]:
        return SSH_FIELDS
    if rows and "model" in rows[0]:
        return AI_FIELDS
    raise ValueError("rows do not match a known report schema")


def report_emit(rows: Sequence, path, format: str = "csv",
                fields: Optional[Sequence[str]] = None) -> None:
    fields = list(fields) if fields is not None else _schema_for(rows)
    format = format.lower()
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row[k] for k in fields})
    elif format == "json":
        doc = [{k: row[k] for k in fields} for row in rows]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown report format {format!r}")


_INT_FIELDS = {"size", "shuffles", "ovf", "msb", "lsb"}
_STR_FIELDS = {"unit", "model", "dataset", "format"}


def _coerce(key: str, value):
    if key in _STR_FIELDS:
        return str(value)
    if key in _INT_FIELDS:
        return int(value)
    return float(value)


def report_parse(path) -> list:
    """Read back an emitted CSV or JSON report with typed fields."""
    text_path = os.fspath(path)
    if text_path.endswith(".json"):
        with open(text_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return [{k: _coerce(k, v) for k, v in row.items()} for row in doc]
    with open(text_path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [{k: _coerce(k, v) for k, v in row.items()} for row in reader]
