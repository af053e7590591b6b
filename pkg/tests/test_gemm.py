"""GEMM shim: configuration discovery, BLAS argument contract, host-side
alpha/beta placement, and bit-exact agreement with the composed reference."""

import math

import numpy as np
import pytest

import gemm_ref
from tamm.accumulator import AccumulatorSpec
from tamm.buffers import MatrixBuffer
from tamm.fdp import DotProductConfig
from tamm.formats import FLOAT32, FLOAT64, make_format
from tamm.gemm import (
    ConfigError,
    DEFAULT_CONFIG_TEXT,
    GemmParameterError,
    KernelConfig,
    dgemm,
    gemm,
    load_config_file,
    query_config,
    sgemm,
)

WIDE = KernelConfig(DotProductConfig(FLOAT32, AccumulatorSpec(9, 30, -60)))
WIDE64 = KernelConfig(DotProductConfig(FLOAT64, AccumulatorSpec(9, 120, -140)))


# ---------------------------------------------------------------------------
# Configuration discovery.

def test_defaults_when_nothing_is_configured(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("TAMM_CONFIG", raising=False)
    cfg = query_config()
    assert cfg.descriptor == "ieee:8:23/acc:9:6:-48/8x8/functional"
    assert cfg.backend == "functional"


def test_local_file_overrides_defaults(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("TAMM_CONFIG", raising=False)
    (tmp_path / "tamm.cfg").write_text("format=bfloat16\nacc=5:5:-20\n")
    cfg = query_config()
    assert cfg.dot_cfg.operand_format == make_format("bfloat16")
    assert cfg.dot_cfg.accumulator.descriptor == "acc:5:5:-20"
    # unset keys keep their defaults
    assert (cfg.array_rows, cfg.array_cols) == (8, 8)


def test_env_var_wins_over_local_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "tamm.cfg").write_text("format=bfloat16\n")
    alt = tmp_path / "alt.cfg"
    alt.write_text("format=posit:16:1\nacc=6:10:-40\narray=4x4\nbackend=systolic\n")
    monkeypatch.setenv("TAMM_CONFIG", str(alt))
    cfg = query_config()
    assert cfg.descriptor == "posit:16:1/acc:6:10:-40/4x4/systolic"


def test_config_file_comments_and_blanks(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\n\nformat = ieee:11:52\n  acc = 4:20:-20  \n")
    cfg = load_config_file(p)
    assert cfg.dot_cfg.operand_format == FLOAT64
    assert cfg.dot_cfg.accumulator.descriptor == "acc:4:20:-20"


def test_invalid_acc_error_names_the_key(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("acc=banana\n")
    with pytest.raises(ConfigError) as exc_info:
        load_config_file(p)
    assert exc_info.value.key == "acc"
    assert "acc" in str(exc_info.value)


def test_unknown_key_and_bad_values_rejected(tmp_path):
    for text, key in [("volume=11\n", "volume"), ("backend=quantum\n", "backend"),
                      ("array=0x8\n", "array"), ("format=ieee:1:1\n", "format")]:
        p = tmp_path / "c.cfg"
        p.write_text(text)
        with pytest.raises(ConfigError) as exc_info:
            load_config_file(p)
        assert exc_info.value.key == key


def test_default_config_text_parses_to_defaults(tmp_path, monkeypatch):
    p = tmp_path / "c.cfg"
    p.write_text(DEFAULT_CONFIG_TEXT)
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("TAMM_CONFIG", raising=False)
    assert load_config_file(p) == query_config()


# ---------------------------------------------------------------------------
# High-level gemm() on MatrixBuffers.

def test_identity_multiply():
    eye = MatrixBuffer.from_floats(np.eye(4), FLOAT64)
    x = MatrixBuffer.from_floats(np.arange(16, dtype=np.float64).reshape(4, 4), FLOAT64)
    out = gemm(eye, x, None, 1.0, 0.0, cfg=WIDE64)
    assert (out.to_floats() == x.to_floats()).all()


def test_beta_zero_never_reads_c():
    a = MatrixBuffer.from_floats(np.ones((2, 2)), FLOAT32)
    c = MatrixBuffer.from_floats(np.full((2, 2), np.nan), FLOAT32)
    out = gemm(a, a, c, 1.0, 0.0, cfg=WIDE)
    assert np.isfinite(out.to_floats()).all()
    assert (out.to_floats() == 2.0).all()


def test_alpha_zero_skips_the_kernel():
    bad = MatrixBuffer.from_floats(np.full((2, 2), np.nan), FLOAT32)
    c = MatrixBuffer.from_floats(np.full((2, 2), 3.0), FLOAT32)
    out = gemm(bad, bad, c, 0.0, 2.0, cfg=WIDE)
    assert (out.to_floats() == 6.0).all()


def test_shape_and_format_mismatches_raise():
    a = MatrixBuffer.from_floats(np.ones((2, 3)), FLOAT32)
    b = MatrixBuffer.from_floats(np.ones((4, 2)), FLOAT32)
    with pytest.raises(ValueError, match="inner dimensions"):
        gemm(a, b, None, 1.0, 0.0, cfg=WIDE)
    b64 = MatrixBuffer.from_floats(np.ones((3, 2)), FLOAT64)
    with pytest.raises(ValueError, match="host format"):
        gemm(a, b64, None, 1.0, 0.0, cfg=WIDE)
    c_bad = MatrixBuffer.from_floats(np.ones((3, 3)), FLOAT32)
    b = MatrixBuffer.from_floats(np.ones((3, 2)), FLOAT32)
    with pytest.raises(ValueError, match="C must be"):
        gemm(a, b, c_bad, 1.0, 1.0, cfg=WIDE)


def test_systolic_backend_matches_functional():
    rng = np.random.default_rng(127)
    a = MatrixBuffer.from_floats(rng.standard_normal((5, 7)), FLOAT32)
    b = MatrixBuffer.from_floats(rng.standard_normal((7, 6)), FLOAT32)
    fn = gemm(a, b, None, 1.0, 0.0, cfg=WIDE)
    sy_cfg = KernelConfig(WIDE.dot_cfg, array_rows=4, array_cols=4, backend="systolic")
    sy = gemm(a, b, None, 1.0, 0.0, cfg=sy_cfg)
    assert (fn.words == sy.words).all()


def test_workers_do_not_change_bits():
    rng = np.random.default_rng(131)
    # f64 operands force the scalar kernel where threading applies
    a = MatrixBuffer.from_floats(rng.standard_normal((16, 9)), FLOAT64)
    b = MatrixBuffer.from_floats(rng.standard_normal((9, 11)), FLOAT64)
    cfg = KernelConfig(DotProductConfig(FLOAT64, AccumulatorSpec(6, 30, -60)))
    ref = gemm(a, b, None, 1.0, 0.0, cfg=cfg, workers=1)
    for w in (2, 4, 8):
        assert (gemm(a, b, None, 1.0, 0.0, cfg=cfg, workers=w).words == ref.words).all()


# ---------------------------------------------------------------------------
# BLAS-style entry points against the composed reference.

def _random_problem(rng, np_dtype):
    m, n, k = (int(v) for v in rng.integers(0, 7, size=3))
    layout = ["row", "col"][int(rng.integers(0, 2))]
    ta = bool(rng.integers(0, 2))
    tb = bool(rng.integers(0, 2))

    def ld_for(shape):
        minimum = max(1, shape[1] if layout == "row" else shape[0])
        return minimum + int(rng.integers(0, 4))

    a_shape = (m, k) if not ta else (k, m)
    b_shape = (k, n) if not tb else (n, k)
    lda, ldb = ld_for(a_shape), ld_for(b_shape)
    ldc = ld_for((m, n))

    def flat(shape, ld):
        rows, cols = shape
        srows, scols = (rows, cols) if layout == "row" else (cols, rows)
        need = max(0, (srows - 1) * ld + scols) if rows and cols else 0
        vals = rng.standard_normal(need) * 4
        return np.ascontiguousarray(vals, dtype=np_dtype)

    return dict(layout=layout, ta=ta, tb=tb, m=m, n=n, k=k,
                a=flat(a_shape, lda), lda=lda, b=flat(b_shape, ldb), ldb=ldb,
                c=flat((m, n), ldc), ldc=ldc)


@pytest.mark.parametrize("np_dtype,entry", [(np.float32, sgemm), (np.float64, dgemm)])
def test_blas_entry_matches_composed_reference(np_dtype, entry):
    rng = np.random.default_rng(137)
    host_fmt = FLOAT32 if np_dtype == np.float32 else FLOAT64
    kcfg = KernelConfig(DotProductConfig(FLOAT32, AccumulatorSpec(8, 20, -44)))
    for trial in range(60):
        p = _random_problem(rng, np_dtype)
        alpha = [0.0, 1.0, 2.0, -1.0][trial % 4]
        beta = [1.0, 2.0, -1.0, 0.0][(trial // 4) % 4]
        c_before = p["c"].copy()
        expect = gemm_ref.blas_reference(
            host_fmt, p["layout"], p["ta"], p["tb"], p["m"], p["n"], p["k"],
            alpha, p["a"], p["lda"], p["b"], p["ldb"], beta, c_before, p["ldc"], kcfg)
        ta_flag = "t" if p["ta"] else "n"
        tb_flag = "t" if p["tb"] else "n"
        out = entry(p["layout"], ta_flag, tb_flag, p["m"], p["n"], p["k"],
                    alpha, p["a"], p["lda"], p["b"], p["ldb"], beta,
                    p["c"], p["ldc"], cfg=kcfg)
        assert out is p["c"]
        got = gemm_ref.result_words(p["c"], p["layout"], p["m"], p["n"], p["ldc"], np_dtype)
        assert (got == expect).all(), f"trial {trial}: {p['m']}x{p['n']}x{p['k']}"


def test_gap_elements_between_ld_strides_are_preserved():
    # 2x2 in a column-major buffer with ldc=4: rows 2..3 of each column
    # are out-of-submatrix and must survive untouched
    c = np.arange(8, dtype=np.float64)
    a = np.zeros(4, dtype=np.float64)
    b = np.zeros(4, dtype=np.float64)
    dgemm("col", "n", "n", 2, 2, 2, 1.0, a, 2, b, 2, 0.0, c, 4, cfg=WIDE64)
    assert (c.reshape(4, 2, order="F")[2:, :] == [[2.0, 6.0], [3.0, 7.0]]).all()
    assert (c.reshape(4, 2, order="F")[:2, :] == 0.0).all()


def test_dgemm_identity_two_by_two():
    a = np.array([1.0, 0.0, 0.0, 1.0])
    b = np.array([1.0, 2.0, 3.0, 4.0])
    c = np.zeros(4)
    dgemm("col", "n", "n", 2, 2, 2, 1.0, a, 2, b, 2, 0.0, c, 2, cfg=WIDE64)
    assert c.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_transposed_input_equals_pretransposed_input():
    rng = np.random.default_rng(139)
    m, n, k = 3, 4, 5
    a = np.ascontiguousarray(rng.standard_normal((m, k)))
    b = np.ascontiguousarray(rng.standard_normal((k, n)))
    c1 = np.zeros(m * n)
    dgemm("row", "n", "n", m, n, k, 1.0, a.ravel(), k, b.ravel(), n, 0.0, c1, n,
          cfg=WIDE64)
    at = np.ascontiguousarray(a.T)
    c2 = np.zeros(m * n)
    dgemm("row", "t", "n", m, n, k, 1.0, at.ravel(), m, b.ravel(), n, 0.0, c2, n,
          cfg=WIDE64)
    assert (c1 == c2).all()


def test_numeric_layout_and_trans_codes():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    c1 = np.zeros(4)
    c2 = np.zeros(4)
    dgemm(101, 111, 111, 2, 2, 2, 1.0, a, 2, a, 2, 0.0, c1, 2, cfg=WIDE64)
    dgemm("row", "n", "n", 2, 2, 2, 1.0, a, 2, a, 2, 0.0, c2, 2, cfg=WIDE64)
    assert (c1 == c2).all()


def test_exactly_sized_buffers_are_accepted():
    # col-major 2x3 with lda=5 needs (3-1)*5+2 = 12 elements, not 15
    a = np.zeros(12)
    b = np.zeros(3)
    c = np.zeros(2)
    dgemm("col", "n", "n", 2, 1, 3, 1.0, a, 5, b, 3, 0.0, c, 2, cfg=WIDE64)
    assert (c == 0.0).all()


def test_zero_extent_problems_are_no_ops():
    c = np.full(4, 7.0)
    out = dgemm("col", "n", "n", 0, 2, 3, 1.0, np.zeros(3), 3, np.zeros(6), 3,
                1.0, c, 1, cfg=WIDE64)
    assert out is c and (c == 7.0).all()
    dgemm("col", "n", "n", 2, 2, 0, 1.0, np.zeros(2), 2, np.zeros(2), 2,
          0.0, c, 2, cfg=WIDE64)
    assert (c == 0.0).all()  # k=0 product is the zero matrix


# ---------------------------------------------------------------------------
# Parameter validation, indexed like the classic error reporter.

def _valid_args(np_dtype=np.float64):
    return dict(layout="col", ta="n", tb="n", m=2, n=2, k=2,
                a=np.zeros(4, dtype=np_dtype), lda=2,
                b=np.zeros(4, dtype=np_dtype), ldb=2,
                c=np.zeros(4, dtype=np_dtype), ldc=2)


def _call(entry, args, **overrides):
    d = {**args, **overrides}
    return entry(d["layout"], d["ta"], d["tb"], d["m"], d["n"], d["k"], 1.0,
                 d["a"], d["lda"], d["b"], d["ldb"], 0.0, d["c"], d["ldc"],
                 cfg=WIDE64)


@pytest.mark.parametrize("override,index,name", [
    (dict(layout="diag"), 1, "layout"),
    (dict(ta="x"), 2, "transA"),
    (dict(tb="q"), 3, "transB"),
    (dict(m=-2), 4, "M"),
    (dict(n=-1), 5, "N"),
    (dict(k=-7), 6, "K"),
    (dict(lda=1), 9, "lda"),
    (dict(ldb=0), 11, "ldb"),
    (dict(ldc=-3), 14, "ldc"),
])
def test_parameter_errors_carry_blas_indices(override, index, name):
    with pytest.raises(GemmParameterError) as exc_info:
        _call(dgemm, _valid_args(), **override)
    assert exc_info.value.index == index
    assert exc_info.value.name == name
    assert f"parameter {index}" in str(exc_info.value)


def test_undersized_buffers_report_the_array_parameter():
    args = _valid_args()
    with pytest.raises(GemmParameterError) as e:
        _call(dgemm, args, a=np.zeros(3))
    assert (e.value.index, e.value.name) == (8, "A")
    with pytest.raises(GemmParameterError) as e:
        _call(dgemm, args, b=np.zeros(2))
    assert (e.value.index, e.value.name) == (10, "B")
    with pytest.raises(GemmParameterError) as e:
        _call(dgemm, args, c=np.zeros(3))
    assert (e.value.index, e.value.name) == (13, "C")


def test_wrong_dtype_buffers_are_rejected():
    args = _valid_args(np.float64)
    with pytest.raises(GemmParameterError) as e:
        _call(sgemm, args)  # float64 buffers into the float32 entry
    assert e.value.index == 8
    args32 = _valid_args(np.float32)
    with pytest.raises(GemmParameterError) as e:
        _call(sgemm, args32, c=np.zeros(4, dtype=np.float64))
    assert (e.value.index, e.value.name) == (13, "C")


def test_strided_1d_view_of_c_still_updates_in_place():
    # a stride-2 slice is a legitimate element buffer; writes must land
    # in the parent array's even positions
    parent = np.full((4, 2), 9.0)
    args = _valid_args()
    a = np.array([1.0, 0.0, 0.0, 1.0])
    _call(dgemm, args, a=a, b=a, c=parent[:, 0])
    assert (parent[:, 0] == [1.0, 0.0, 0.0, 1.0]).all()
    assert (parent[:, 1] == 9.0).all()


def test_non_viewable_c_is_rejected():
    args = _valid_args()
    twisted = np.zeros((2, 3), dtype=np.float64).T  # cannot flatten as a view
    with pytest.raises(GemmParameterError) as e:
        _call(dgemm, args, c=twisted)
    assert (e.value.index, e.value.name) == (13, "C")
