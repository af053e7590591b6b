"""Exact numpy fast paths.

Everything in this module is a speed-up with a proof obligation: each
routine either produces bit-identical results to the scalar reference
path (asserted by dual-route tests) or refuses via ``Ineligible`` so the
caller can fall back.  The key building block is the two-limb trick:
aligned products are integer-valued float64s below 2**84, split exactly
into hi*2**42 + lo with both limbs exact in int64, so whole-K reductions
become two int64 sums.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import formats
from .accumulator import AccumulatorSpec
from .formats import (
    BFLOAT16,
    FLOAT32,
    FLOAT64,
    FormatSpec,
    Kind,
    decode,
    encode_float,
    encode_value,
    fraction_to_float,
)

_LIMB = 42  # low-limb width; hi = floor(x / 2**42)
_LIMB_SCALE = float(1 << _LIMB)


class Ineligible(Exception):
    """Input falls outside a fast path's exactness envelope."""


# ---------------------------------------------------------------------------
# Format capability probes.

def max_significand_bits(fmt: FormatSpec) -> int:
    if fmt.kind is Kind.POSIT:
        # Hidden bit plus the longest possible fraction field.
        return max(1, fmt.total_bits - 2 - fmt.es)
    return fmt.fraction_bits + 1


def _exponent_extent(fmt: FormatSpec) -> int:
    if fmt.kind is Kind.POSIT:
        return (fmt.total_bits - 2) << fmt.es
    return fmt.emax + fmt.fraction_bits + 2


def values_embed_in_f64(fmt: FormatSpec) -> bool:
    """Every finite value of fmt is exactly a float64."""
    if fmt == FLOAT64:
        return True
    return max_significand_bits(fmt) <= 53 and _exponent_extent(fmt) <= 960


def products_exact_in_f64(fmt: FormatSpec) -> bool:
    """Products of any two fmt values are exactly float64."""
    return 2 * max_significand_bits(fmt) <= 53 and 2 * _exponent_extent(fmt) <= 960


# ---------------------------------------------------------------------------
# Array codecs (bit-exact against formats.decode/encode).

def bf16_words_to_f32(words: np.ndarray) -> np.ndarray:
    u32 = words.astype(np.uint32) << 16
    return u32.view(np.float32)


def f32_to_bf16_words(values32: np.ndarray) -> np.ndarray:
    """RNE truncation of float32 to bfloat16 words; NaNs canonicalized."""
    u32 = np.ascontiguousarray(values32, dtype=np.float32).view(np.uint32)
    rounded = (u32 + 0x7FFF + ((u32 >> 16) & 1)) >> 16
    out = rounded.astype(np.uint16)
    out[np.isnan(values32)] = 0x7FC0
    return out


_POSIT_LUTS: dict[str, np.ndarray] = {}


def _posit_lut(fmt: FormatSpec) -> np.ndarray:
    table = _POSIT_LUTS.get(fmt.descriptor)
    if table is None:
        table = np.array(
            [decode(w, fmt).to_float() for w in range(1 << fmt.total_bits)],
            dtype=np.float64,
        )
        _POSIT_LUTS[fmt.descriptor] = table
    return table


def decode_array(words: np.ndarray, fmt: FormatSpec) -> np.ndarray:
    """Words -> float64 values (exact whenever values_embed_in_f64)."""
    words = np.asarray(words)
    if fmt == FLOAT64:
        return words.astype(np.uint64).view(np.float64).copy()
    if fmt == FLOAT32:
        with np.errstate(invalid="ignore"):  # signaling-NaN payloads quiet here
            return words.astype(np.uint32).view(np.float32).astype(np.float64)
    if fmt == BFLOAT16:
        with np.errstate(invalid="ignore"):
            return bf16_words_to_f32(words).astype(np.float64)
    if fmt.kind is Kind.POSIT and fmt.total_bits <= 16 and values_embed_in_f64(fmt):
        return _posit_lut(fmt)[words.astype(np.int64)]
    flat = [decode(int(w), fmt).to_float() for w in words.ravel()]
    return np.array(flat, dtype=np.float64).reshape(words.shape)


def encode_array(values: np.ndarray, fmt: FormatSpec) -> np.ndarray:
    """Float64 values -> words, one RNE rounding per element."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    if fmt == FLOAT64:
        out = values.view(np.uint64).copy()
        out[np.isnan(values)] = 0x7FF8 << 48
        return out
    if fmt == FLOAT32:
        v32 = values.astype(np.float32)
        out = v32.view(np.uint32).copy()
        out[np.isnan(values)] = 0x7FC00000
        return out
    if fmt == BFLOAT16:
        v32 = values.astype(np.float32)
        # float64 -> float32 -> bfloat16 double-rounds; only take the trick
        # where the float32 cast was exact.
        exact32 = (v32.astype(np.float64) == values) | ~np.isfinite(values)
        out = f32_to_bf16_words(v32)
        if not bool(exact32.all()):
            it = np.nditer(exact32, flags=["multi_index"])
            for ok in it:
                if not ok:
                    out[it.multi_index] = encode_float(float(values[it.multi_index]), fmt)
        return out
    flat = [encode_float(float(v), fmt) for v in values.ravel()]
    dtype = np.uint8 if fmt.word_bytes == 1 else (
        np.uint16 if fmt.word_bytes == 2 else (np.uint32 if fmt.word_bytes <= 4 else np.uint64))
    return np.array(flat, dtype=dtype).reshape(values.shape)


# ---------------------------------------------------------------------------
# Two-limb exact accumulation of floored, aligned products.

def _limb_split(aligned: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact split of integer-valued float64 |x| < 2**84 into int64 limbs."""
    f = np.floor(aligned)
    hi = np.floor(f / _LIMB_SCALE)
    lo = f - hi * _LIMB_SCALE
    return hi.astype(np.int64), lo.astype(np.int64)


def _check_alignment_envelope(max_abs_scaled: float, k: int) -> None:
    if not math.isfinite(max_abs_scaled) or max_abs_scaled >= float(1 << 84):
        raise Ineligible("aligned magnitude outside the two-limb envelope")
    if k > 1 << 20:
        raise Ineligible("reduction length exceeds the int64 sum budget")


def _wrap_units(units: int, width: int) -> int:
    half = 1 << (width - 1)
    return ((units + half) & ((1 << width) - 1)) - half


def render_units_to_f64(units: int, lsb: int) -> float:
    if units == 0:
        return 0.0
    if abs(units) < 1 << 53 and -970 < lsb < 970:
        return math.ldexp(float(units), lsb)
    value = Fraction(units << lsb) if lsb >= 0 else Fraction(units, 1 << -lsb)
    return fraction_to_float(value)


def fdp_rows(rows: np.ndarray, spec: AccumulatorSpec) -> np.ndarray:
    """Per-row fused sum (multiplier 1.0) rendered to float64.

    rows: (R, n) float64, every element finite.  Bit-faithful to feeding
    each row through the scratchpad and rendering to ieee:11:52.
    """
    if not np.isfinite(rows).all():
        raise Ineligible("non-finite input belongs to the scalar path")
    if not -960 < spec.lsb < 960:
        raise Ineligible("alignment scale outside float64 range")
    scale = math.ldexp(1.0, -spec.lsb)
    scaled = rows * scale
    _check_alignment_envelope(float(np.abs(scaled).max(initial=0.0)), rows.shape[1])
    hi, lo = _limb_split(scaled)
    sum_hi = hi.sum(axis=1, dtype=np.int64)
    sum_lo = lo.sum(axis=1, dtype=np.int64)
    out = np.empty(rows.shape[0], dtype=np.float64)
    w = spec.width
    for i in range(rows.shape[0]):
        units = _wrap_units((int(sum_hi[i]) << _LIMB) + int(sum_lo[i]), w)
        out[i] = render_units_to_f64(units, spec.lsb)
    return out


def fma64_rows(rows: np.ndarray) -> np.ndarray:
    """Left-to-right float64 accumulation per row (the FMA64 chain with
    unit multipliers): cumulative sum's last column."""
    return np.cumsum(rows, axis=1)[:, -1]


# ---------------------------------------------------------------------------
# Exact whole-array sums / quad-chain exactness certificate.

def _quantum_exponents(values: np.ndarray) -> np.ndarray:
    """Exponent of the lowest set bit of each nonzero float64."""
    m, e = np.frexp(values)
    v53 = np.round(m * (1 << 53)).astype(np.int64)
    low = (v53 & -v53).astype(np.float64)
    tz = np.log2(low).astype(np.int64)
    return e - 53 + tz


def exact_sum_units(values: np.ndarray) -> tuple[int, int]:
    """(units, q): exact sum of float64 values equals units * 2**q."""
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise Ineligible("non-finite input")
    nz = values[values != 0.0]
    if nz.size == 0:
        return 0, 0
    q = int(_quantum_exponents(nz).min())
    top = int(np.frexp(np.abs(nz).max())[1])
    if top - q > 900:
        # Wide dynamic range: exact scaling will not fit a float64 op.
        total = Fraction(0)
        for v in nz:
            total += Fraction(float(v))
        scaled = total / Fraction(2) ** q
        assert scaled.denominator == 1
        return scaled.numerator, q
    scale = math.ldexp(1.0, -q)
    units = 0
    for v in nz:
        units += int(v * scale)
    return units, q


def exact_sum_fraction(values: np.ndarray) -> Fraction:
    units, q = exact_sum_units(values)
    return Fraction(units << q) if q >= 0 else Fraction(units, 1 << -q)


def quad_chain_is_exact(values: np.ndarray) -> bool:
    """True when every partial sum of any ordering of these float64
    values fits the ieee:15:112 significand, making the whole chain
    exact: span(log2 sum|v|, min quantum) <= 113 bits."""
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        return False
    nz = np.abs(values[values != 0.0])
    if nz.size == 0:
        return True
    q = int(_quantum_exponents(nz).min())
    if math.frexp(float(nz.max()))[1] - q > 800:
        return False  # conservative; oversized span never certifies
    scale = math.ldexp(1.0, -q)
    total = 0
    for v in nz:
        total += int(v * scale)
    return total.bit_length() <= 113


# ---------------------------------------------------------------------------
# Fused GEMM kernel over exactly-embeddable operand formats.

_CHUNK_BUDGET = 2 * 1024 * 1024  # float64 elements per product slab


def _render_units_array(sum_hi: np.ndarray, sum_lo: np.ndarray,
                        spec: AccumulatorSpec, out_fmt: FormatSpec,
                        bound_units: int) -> np.ndarray:
    """Render per-element unit counts (two int64 limbs) into out_fmt."""
    # Normalize limbs so lo is the true low 42 bits.
    carry = sum_lo >> _LIMB
    lo = sum_lo - (carry << _LIMB)
    hi = sum_hi + carry
    w = spec.width
    no_wrap = bound_units < (1 << (w - 1))

    fast_fmt = out_fmt in (FLOAT32, FLOAT64, BFLOAT16)
    small = (np.abs(hi) >> (52 - _LIMB)) == 0  # |units| < 2**52
    if fast_fmt and no_wrap and -970 < spec.lsb < 970:
        # Lanes outside `small` may compute garbage here; the scalar loop
        # below overwrites them.
        with np.errstate(over="ignore", invalid="ignore"):
            exact = hi.astype(np.float64) * _LIMB_SCALE + lo.astype(np.float64)
            value = exact * math.ldexp(1.0, spec.lsb)
            if out_fmt == FLOAT64:
                words = value.view(np.uint64).copy()
            elif out_fmt == FLOAT32:
                words = value.astype(np.float32).view(np.uint32).copy()
            else:
                v32 = value.astype(np.float32)
                small &= v32.astype(np.float64) == value  # bf16 needs one rounding
                words = f32_to_bf16_words(v32).astype(np.uint16)
    else:
        small = np.zeros_like(small)
        from .buffers import _storage_dtype
        words = np.zeros(hi.shape, dtype=_storage_dtype(out_fmt))

    if not bool(small.all()):
        hi_f = hi.ravel()
        lo_f = lo.ravel()
        out_f = words.ravel()
        for idx in np.flatnonzero(~small.ravel()):
            units = (int(hi_f[idx]) << _LIMB) + int(lo_f[idx])
            units = _wrap_units(units, w)
            sign = -1 if units < 0 else 1
            out_f[idx] = encode_value(sign, abs(units), spec.lsb, out_fmt)
    return words


def fused_gemm_words(a_words: np.ndarray, b_words: np.ndarray,
                     op_fmt: FormatSpec, spec: AccumulatorSpec,
                     out_fmt: FormatSpec) -> np.ndarray:
    """(M,K) x (K,N) fused dot products, bit-identical to the scalar
    kernel, for operand formats whose pairwise products are exact in
    float64.  Raises Ineligible outside that envelope."""
    if not products_exact_in_f64(op_fmt):
        raise Ineligible(f"{op_fmt.descriptor} products are not exact in float64")
    a = decode_array(a_words, op_fmt)
    b = decode_array(b_words, op_fmt)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise Ineligible("exceptional operands take the scalar path")
    m, k = a.shape
    k2, n = b.shape
    if k2 != k:
        raise ValueError("inner dimensions disagree")
    if k == 0 or m == 0 or n == 0:
        zero = encode_value(1, 0, 0, out_fmt)
        from .buffers import _storage_dtype
        return np.full((m, n), zero, dtype=_storage_dtype(out_fmt))
    if spec.lsb < -960 or spec.lsb > 960:
        raise Ineligible("alignment scale outside float64 range")
    scale = math.ldexp(1.0, -spec.lsb)
    amax = float(np.abs(a).max(initial=0.0)) * float(np.abs(b).max(initial=0.0)) * scale
    _check_alignment_envelope(amax, k)
    bound_units = (int(amax) + 1) * k

    bt = np.ascontiguousarray(b.T)
    rows_per_chunk = max(1, _CHUNK_BUDGET // max(1, n * k))
    out_chunks = []
    for i0 in range(0, m, rows_per_chunk):
        i1 = min(m, i0 + rows_per_chunk)
        prods = a[i0:i1, None, :] * bt[None, :, :]  # (chunk, N, K)
        hi, lo = _limb_split(prods * scale)
        sum_hi = hi.sum(axis=2, dtype=np.int64)
        sum_lo = lo.sum(axis=2, dtype=np.int64)
        out_chunks.append(_render_units_array(sum_hi, sum_lo, spec, out_fmt, bound_units))
    return np.concatenate(out_chunks, axis=0)
