"""Vectorized fast paths must be bit-identical to the scalar routines,
and must refuse (Ineligible) anything outside their envelope."""

import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_words
from tamm.accumulator import AccumulatorSpec, AccumulatorState
from tamm.fdp import DotProductConfig, exact_add, exact_mul, fdp
from tamm.formats import (
    BFLOAT16,
    FLOAT32,
    FLOAT64,
    QUAD,
    decode,
    decode_to_float,
    decoded_from_float,
    encode,
    encode_float,
    fraction_to_float,
    make_format,
    word_to_float64,
)
from tamm.vectorized import (
    Ineligible,
    bf16_words_to_f32,
    decode_array,
    encode_array,
    exact_sum_fraction,
    exact_sum_units,
    f32_to_bf16_words,
    fdp_rows,
    fma64_rows,
    fused_gemm_words,
    max_significand_bits,
    products_exact_in_f64,
    quad_chain_is_exact,
    render_units_to_f64,
    values_embed_in_f64,
)

P16 = make_format("posit:16:1")
P8 = make_format("posit:8:2")


# ---------------------------------------------------------------------------
# Eligibility predicates.

def test_embedding_predicates():
    assert values_embed_in_f64(FLOAT32)
    assert values_embed_in_f64(BFLOAT16)
    assert values_embed_in_f64(FLOAT64)
    assert values_embed_in_f64(P16)
    assert not values_embed_in_f64(QUAD)
    assert products_exact_in_f64(FLOAT32)      # 24*2 = 48 bits
    assert products_exact_in_f64(BFLOAT16)     # 8*2 = 16 bits
    assert products_exact_in_f64(P16)
    assert not products_exact_in_f64(FLOAT64)  # 53*2 > 53


def test_max_significand_bits():
    assert max_significand_bits(FLOAT32) == 24
    assert max_significand_bits(FLOAT64) == 53
    assert max_significand_bits(BFLOAT16) == 8


# ---------------------------------------------------------------------------
# Array codecs against the scalar codec.

@pytest.mark.parametrize("desc", ["ieee:8:23", "ieee:11:52", "bfloat16",
                                  "posit:8:2", "posit:16:1"])
def test_decode_array_matches_scalar(desc):
    fmt = make_format(desc)
    rng = np.random.default_rng(83)
    words = random_words(fmt, 3000, rng, finite_only=False)
    arr = decode_array(np.array(words, dtype=np.uint64), fmt)
    for w, got in zip(words, arr.tolist()):
        expect = decode_to_float(w, fmt)
        if math.isnan(expect):
            assert math.isnan(got)
        else:
            assert got == expect


@pytest.mark.parametrize("desc", ["ieee:8:23", "ieee:11:52", "bfloat16"])
def test_encode_array_matches_scalar(desc):
    fmt = make_format(desc)
    rng = np.random.default_rng(89)
    vals = [float(v) for v in rng.standard_normal(2000) * 2.0 ** 40]
    vals += [float(v) for v in rng.standard_normal(500) * 2.0 ** -40]
    # bf16 tie lanes where the f64->f32 pre-cast is inexact
    vals += [1.0 + 2.0 ** -8, 1.0 + 2.0 ** -8 + 2.0 ** -30,
             -(1.0 + 2.0 ** -8), 2.0 ** -133 * 1.5, float("nan"),
             float("inf"), float("-inf"), 0.0, -0.0]
    arr = encode_array(np.array(vals), fmt)
    for v, got in zip(vals, arr.tolist()):
        assert got == encode_float(v, fmt), f"value {v!r}"


def test_bf16_word_conversion_round_trips_exhaustively():
    words = np.arange(1 << 16, dtype=np.uint16)
    up = bf16_words_to_f32(words)
    back = f32_to_bf16_words(up)
    nan = np.isnan(up)
    assert (back[~nan] == words[~nan]).all()
    assert (back[nan] == encode_float(float("nan"), BFLOAT16)).all()


# ---------------------------------------------------------------------------
# Unit rendering.

def test_render_units_small_and_large_paths_agree():
    cases = [(0, 0), (1, -5), (-1, -5), ((1 << 52) + 1, -30),
             ((1 << 60) + 7, -90), (-(1 << 60) - 7, -90),
             ((1 << 53) + 1, 0), (3, 900), (3, -1074), (1, -1100)]
    for units, lsb in cases:
        got = render_units_to_f64(units, lsb)
        expect = fraction_to_float(
            Fraction(units << lsb) if lsb >= 0 else Fraction(units, 1 << -lsb))
        if math.isnan(expect):
            assert math.isnan(got)
        else:
            assert got == expect, f"units={units} lsb={lsb}"


def test_render_units_overflow_saturates_like_encode():
    assert render_units_to_f64(1 << 20, 1015) == math.inf
    assert render_units_to_f64(-(1 << 20), 1015) == -math.inf


# ---------------------------------------------------------------------------
# Row-wise fused sums.

def test_fdp_rows_matches_scalar_accumulator():
    rng = np.random.default_rng(97)
    for spec in [AccumulatorSpec(8, 20, -20), AccumulatorSpec(4, 6, -10),
                 AccumulatorSpec(0, 0, 0), AccumulatorSpec(2, 3, 0)]:
        rows = rng.standard_normal((40, 12)) * 4
        rows = np.round(rows * 64) / 64  # keep values on a friendly grid
        got = fdp_rows(rows, spec)
        for i in range(rows.shape[0]):
            acc = AccumulatorState(spec)
            for v in rows[i]:
                acc.add_value(decoded_from_float(float(v)))
            expect = word_to_float64(acc.render(FLOAT64))
            assert got[i] == expect or (math.isnan(got[i]) and math.isnan(expect))


def test_fdp_rows_reproduces_modular_wrap():
    spec = AccumulatorSpec(1, 1, 0)  # 3-bit register, range [-4, 3]
    rows = np.array([[3.0, 3.0], [2.0, 2.0], [-3.0, -3.0]])
    got = fdp_rows(rows, spec)
    acc_expect = []
    for row in rows:
        acc = AccumulatorState(spec)
        for v in row:
            acc.add_value(decoded_from_float(float(v)))
        acc_expect.append(word_to_float64(acc.render(FLOAT64)))
    assert got.tolist() == acc_expect == [-2.0, -4.0, 2.0]


def test_fdp_rows_rejects_out_of_envelope_inputs():
    with pytest.raises(Ineligible):
        fdp_rows(np.array([[1.0, float("inf")]]), AccumulatorSpec(2, 2, -2))
    with pytest.raises(Ineligible):
        fdp_rows(np.array([[1.0]]), AccumulatorSpec(2, 2, -1000))
    with pytest.raises(Ineligible):
        fdp_rows(np.array([[2.0 ** 60]]), AccumulatorSpec(2, 2, -30))


def test_fma64_rows_matches_python_chain():
    rng = np.random.default_rng(101)
    rows = rng.standard_normal((20, 33)) * 10.0 ** rng.integers(-8, 8, size=(20, 33))
    got = fma64_rows(rows)
    for i in range(rows.shape[0]):
        s = 0.0
        for v in rows[i].tolist():
            s = s + v
        assert got[i] == s


# ---------------------------------------------------------------------------
# Exact sums and the quad-exactness certificate.

def test_exact_sum_matches_fraction_arithmetic():
    rng = np.random.default_rng(103)
    for _ in range(50):
        vals = rng.standard_normal(int(rng.integers(1, 40))) * 2.0 ** int(rng.integers(-30, 30))
        expect = sum((Fraction(float(v)) for v in vals), Fraction(0))
        assert exact_sum_fraction(vals) == expect
    assert exact_sum_fraction(np.array([])) == 0
    assert exact_sum_fraction(np.array([0.0, -0.0])) == 0


def test_exact_sum_wide_span_fallback():
    vals = np.array([1e300, 1e-300, -1e300])
    expect = Fraction(1e300) + Fraction(1e-300) - Fraction(1e300)
    assert exact_sum_fraction(vals) == expect == Fraction(1e-300)
    units, q = exact_sum_units(vals)
    assert Fraction(units) * Fraction(2) ** q == expect


def test_exact_sum_rejects_non_finite():
    with pytest.raises(Ineligible):
        exact_sum_units(np.array([1.0, math.inf]))


def _quad_chain(values):
    s = decoded_from_float(0.0)
    for v in values:
        s = decode(encode(exact_add(s, decoded_from_float(float(v))), QUAD), QUAD)
    return fraction_to_float(s.to_fraction())


def test_quad_certificate_positive_case():
    rng = np.random.default_rng(107)
    vals = np.round(rng.standard_normal(64) * 2 ** 20) * 2.0 ** -10
    assert quad_chain_is_exact(vals)
    exact = fraction_to_float(exact_sum_fraction(vals))
    for _ in range(50):
        rng.shuffle(vals)
        assert _quad_chain(vals) == exact


def test_quad_certificate_negative_case():
    # 121-bit span: some orderings round inside the chain
    vals = np.array([2.0 ** 120, 1.0, -(2.0 ** 120)])
    assert not quad_chain_is_exact(vals)
    assert _quad_chain([vals[0], vals[1], vals[2]]) == 0.0
    assert _quad_chain([vals[0], vals[2], vals[1]]) == 1.0


def test_quad_certificate_oversized_span_is_conservative():
    assert not quad_chain_is_exact(np.array([1e300, 1e-300]))
    assert not quad_chain_is_exact(np.array([1.0, math.nan]))
    assert quad_chain_is_exact(np.array([]))


# ---------------------------------------------------------------------------
# Fused GEMM kernel against the scalar dot product, cell by cell.

def _bounded_words(fmt, count, rng):
    """Operand words whose products keep the alignment inside int64 limbs."""
    vals = rng.standard_normal(count) * 2.0 ** rng.integers(-12, 13, size=count)
    vals[::9] = 0.0
    return encode_array(vals, fmt).reshape(-1)


@pytest.mark.parametrize("desc,out_desc", [
    ("ieee:8:23", "ieee:8:23"),
    ("bfloat16", "bfloat16"),
    ("bfloat16", "ieee:8:23"),
    ("posit:16:1", "posit:16:1"),
    ("posit:8:2", "ieee:11:52"),
])
def test_fused_gemm_matches_scalar_cells(desc, out_desc):
    fmt = make_format(desc)
    out_fmt = make_format(out_desc)
    rng = np.random.default_rng(109)
    for _ in range(6):
        m, k, n = (int(v) for v in rng.integers(1, 9, size=3))
        a = _bounded_words(fmt, m * k, rng).reshape(m, k)
        b = _bounded_words(fmt, k * n, rng).reshape(k, n)
        spec = AccumulatorSpec(6, 24, int(rng.integers(-40, -8)))
        cfg = DotProductConfig(fmt, spec, out_fmt)
        got = fused_gemm_words(a, b, fmt, spec, out_fmt)
        assert got.shape == (m, n)
        for i in range(m):
            for j in range(n):
                expect, _ = fdp([int(w) for w in a[i]], [int(w) for w in b[:, j]], cfg)
                assert int(got[i, j]) == expect, (i, j, desc)


def test_fused_gemm_zero_extent_edges():
    spec = AccumulatorSpec(4, 10, -10)
    for m, k, n in [(0, 3, 2), (2, 0, 3), (3, 2, 0), (0, 0, 0)]:
        out = fused_gemm_words(np.zeros((m, k), dtype=np.uint32),
                               np.zeros((k, n), dtype=np.uint32),
                               FLOAT32, spec, FLOAT32)
        assert out.shape == (m, n)
        assert (out == 0).all()


def test_fused_gemm_refuses_inexact_product_formats():
    with pytest.raises(Ineligible):
        fused_gemm_words(np.zeros((2, 2), dtype=np.uint64),
                         np.zeros((2, 2), dtype=np.uint64),
                         FLOAT64, AccumulatorSpec(4, 10, -10), FLOAT64)


def test_fused_gemm_refuses_exceptional_operands():
    inf = encode_float(float("inf"), FLOAT32)
    a = np.full((2, 2), inf, dtype=np.uint32)
    with pytest.raises(Ineligible):
        fused_gemm_words(a, a, FLOAT32, AccumulatorSpec(4, 10, -10), FLOAT32)


def test_fused_gemm_refuses_oversized_alignment():
    big = np.full((1, 1), encode_float(2.0 ** 60, FLOAT32), dtype=np.uint32)
    with pytest.raises(Ineligible):
        fused_gemm_words(big, big, FLOAT32, AccumulatorSpec(4, 10, -40), FLOAT32)
