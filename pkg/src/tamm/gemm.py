"""BLAS-style front door.

Host matrices arrive in the caller's format, get cast to the kernel
operand format, zero-padded to array-tile multiples, pushed through the
fused-dot-product kernel (functional or systolic backend), cast back to
the host format, and only then combined as C' = alpha*AB + beta*C with
one host-format rounding per operation.  The kernel configuration comes
from a configuration-register stand-in: the TAMM_CONFIG environment
variable naming a key=value file, a ./tamm.cfg in the working directory,
or built-in defaults.
"""

from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import vectorized
from .accumulator import AccumulatorState, parse_acc
from .buffers import (
    MatrixBuffer,
    PadMeta,
    pad_and_tile,
    read_matrix,
    strip_padding,
    write_matrix,
)
from .fdp import DotProductConfig, exact_add, exact_mul
from .formats import FLOAT32, FLOAT64, FormatSpec, cast, decode, encode, make_format
from .systolic import ArrayConfig, StallPlan, run_gemm_systolic

__all__ = [
    "KernelConfig", "ConfigError", "GemmParameterError", "MatrixBuffer",
    "PadMeta", "pad_and_tile", "strip_padding", "read_matrix", "write_matrix",
    "query_config", "load_config_file", "gemm", "sgemm", "dgemm",
    "DEFAULT_CONFIG_TEXT",
]

FUNCTIONAL = "functional"
SYSTOLIC = "systolic"

DEFAULT_FIFO_DEPTH = 8
DEFAULT_CONFIG_TEXT = "format=ieee:8:23\nacc=9:6:-48\narray=8x8\nbackend=functional\n"


class ConfigError(ValueError):
    def __init__(self, key: str, detail: str) -> None:
        super().__init__(f"config key '{key}': {detail}")
        self.key = key


@dataclass(frozen=True)
class KernelConfig:
    dot_cfg: DotProductConfig
    array_rows: int = 8
    array_cols: int = 8
    backend: str = FUNCTIONAL
    fifo_depth: int = DEFAULT_FIFO_DEPTH

    def __post_init__(self) -> None:
        if self.array_rows < 1 or self.array_cols < 1:
            raise ValueError("array dims must be >= 1")
        if self.backend not in (FUNCTIONAL, SYSTOLIC):
            raise ValueError(f"unknown backend {self.backend!r}")

    @property
    def descriptor(self) -> str:
        return (f"{self.dot_cfg.operand_format}/{self.dot_cfg.accumulator}"
                f"/{self.array_rows}x{self.array_cols}/{self.backend}")

    def array_config(self) -> ArrayConfig:
        return ArrayConfig(self.array_rows, self.array_cols, self.dot_cfg, self.fifo_depth)


def _parse_config_pairs(text: str, source: str) -> KernelConfig:
    fmt = make_format("ieee:8:23")
    acc = parse_acc("9:6:-48")
    rows, cols = 8, 8
    backend = FUNCTIONAL
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(line, f"{source}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        try:
            if key == "format":
                fmt = make_format(value)
            elif key == "acc":
                acc = parse_acc(value)
            elif key == "array":
                r, _, c = value.lower().partition("x")
                rows, cols = int(r), int(c)
                if rows < 1 or cols < 1:
                    raise ValueError("array dims must be >= 1")
            elif key == "backend":
                if value.lower() not in (FUNCTIONAL, SYSTOLIC):
                    raise ValueError(f"unknown backend {value!r}")
                backend = value.lower()
            else:
                raise ConfigError(key, f"{source}:{lineno}: unknown key")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(key, f"{source}:{lineno}: {exc}") from exc
    return KernelConfig(DotProductConfig(fmt, acc), rows, cols, backend)


def load_config_file(path) -> KernelConfig:
    return _parse_config_pairs(Path(path).read_text(), str(path))


def query_config(environ=None) -> KernelConfig:
    """Configuration-register lookup: TAMM_CONFIG file, ./tamm.cfg, defaults."""
    env = os.environ if environ is None else environ
    override = env.get("TAMM_CONFIG")
    if override:
        return load_config_file(override)
    local = Path("tamm.cfg")
    if local.is_file():
        return load_config_file(local)
    return _parse_config_pairs(DEFAULT_CONFIG_TEXT, "<defaults>")


# ---------------------------------------------------------------------------
# Kernel: per-element fused dot products over cast operands.

def _cast_buffer(m: MatrixBuffer, fmt: FormatSpec) -> MatrixBuffer:
    if m.fmt == fmt:
        return m
    src = m.words
    out = MatrixBuffer.zeros(m.rows, m.cols, fmt)
    # Word-level memoized cast; matrices repeat values often enough.
    memo: dict[int, int] = {}
    flat_in = src.ravel()
    flat_out = out.storage.ravel()
    for i, w in enumerate(flat_in):
        w = int(w)
        v = memo.get(w)
        if v is None:
            v = cast(w, m.fmt, fmt)
            memo[w] = v
        flat_out[i] = v
    return out


def _kernel_rows_scalar(a: MatrixBuffer, b_t: MatrixBuffer, dot_cfg: DotProductConfig,
                        out: MatrixBuffer, row_range) -> None:
    op_fmt = dot_cfg.operand_format
    out_fmt = dot_cfg.output_format
    spec = dot_cfg.accumulator
    memo: dict[int, object] = {}

    def dec(w: int):
        d = memo.get(w)
        if d is None:
            d = decode(w, op_fmt)
            memo[w] = d
        return d

    a_w = a.words
    bt_w = b_t.words
    for i in row_range:
        arow = [dec(int(w)) for w in a_w[i]]
        for j in range(b_t.rows):
            st = AccumulatorState(spec)
            brow = bt_w[j]
            for k, ad in enumerate(arow):
                st.add_product(ad, dec(int(brow[k])))
            out.storage[i, j] = st.render(out_fmt)


def _kernel_functional(a: MatrixBuffer, b: MatrixBuffer, dot_cfg: DotProductConfig,
                       workers: int) -> MatrixBuffer:
    try:
        words = vectorized.fused_gemm_words(a.words, b.words, dot_cfg.operand_format,
                                            dot_cfg.accumulator, dot_cfg.output_format)
        return MatrixBuffer.from_words(words, dot_cfg.output_format)
    except vectorized.Ineligible:
        pass
    out = MatrixBuffer.zeros(a.rows, b.cols, dot_cfg.output_format)
    b_t = b.transposed()
    if workers <= 1 or a.rows < 2:
        _kernel_rows_scalar(a, b_t, dot_cfg, out, range(a.rows))
        return out
    # Tile-level parallelism: disjoint row blocks, each element still a
    # single sequential fused accumulation, so scheduling cannot reorder
    # any arithmetic.
    blocks = np.array_split(np.arange(a.rows), workers)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_kernel_rows_scalar, a, b_t, dot_cfg, out, blk)
                   for blk in blocks if len(blk)]
        for f in futures:
            f.result()
    return out


def _host_scale_add(ab: MatrixBuffer, c: MatrixBuffer | None, alpha_w: int, beta_w: int,
                    host_fmt: FormatSpec) -> MatrixBuffer:
    """alpha*AB + beta*C elementwise in the host format, RNE per op."""
    alpha_d = decode(alpha_w, host_fmt)
    beta_d = decode(beta_w, host_fmt)
    out = MatrixBuffer.zeros(ab.rows, ab.cols, host_fmt)

    if host_fmt in (FLOAT32, FLOAT64) and c is not None:
        av = ab.to_floats()
        cv = c.to_floats()
        if np.isfinite(av).all() and np.isfinite(cv).all():
            alpha = alpha_d.to_float()
            beta = beta_d.to_float()
            if np.isfinite(alpha) and np.isfinite(beta):
                dt = np.float32 if host_fmt == FLOAT32 else np.float64
                t1 = dt(alpha) * av.astype(dt)  # one rounding per element
                t2 = dt(beta) * cv.astype(dt)
                return MatrixBuffer.from_floats((t1 + t2).astype(np.float64), host_fmt)

    memo: dict[tuple[int, int], int] = {}
    for i in range(ab.rows):
        for j in range(ab.cols):
            abw = ab.word_at(i, j)
            cw = c.word_at(i, j) if c is not None else 0
            key = (abw, cw)
            w = memo.get(key)
            if w is None:
                t1 = exact_mul(alpha_d, decode(abw, host_fmt))
                t1 = decode(encode(t1, host_fmt), host_fmt)
                if c is None:
                    w = encode(t1, host_fmt)
                else:
                    t2 = exact_mul(beta_d, decode(cw, host_fmt))
                    t2 = decode(encode(t2, host_fmt), host_fmt)
                    w = encode(exact_add(t1, t2), host_fmt)
                memo[key] = w
            out.storage[i, j] = w
    return out


def gemm(A: MatrixBuffer, B: MatrixBuffer, C: MatrixBuffer | None, alpha: float,
         beta: float, cfg: KernelConfig | None = None, workers: int = 1,
         stalls: StallPlan | None = None) -> MatrixBuffer:
    """C' = alpha * kernel(A @ B) + beta * C, everything in A's format on
    the host side.  With beta == 0, C is never read (BLAS convention);
    with alpha == 0 the kernel is skipped entirely."""
    if cfg is None:
        cfg = query_config()
    host_fmt = A.fmt
    if B.fmt != host_fmt or (C is not None and C.fmt != host_fmt):
        raise ValueError("A, B and C must share the host format")
    if A.cols != B.rows:
        raise ValueError(f"inner dimensions disagree: {A.cols} vs {B.rows}")
    m, n = A.rows, B.cols
    if C is not None and (C.rows != m or C.cols != n):
        raise ValueError(f"C must be {m}x{n}, got {C.rows}x{C.cols}")

    alpha_w = vectorized.encode_array(np.array([[float(alpha)]]), host_fmt)[0, 0]
    beta_w = vectorized.encode_array(np.array([[float(beta)]]), host_fmt)[0, 0]
    beta_zero = decode(int(beta_w), host_fmt).cls.value == "zero"

    if decode(int(alpha_w), host_fmt).cls.value == "zero":
        ab_host = MatrixBuffer.zeros(m, n, host_fmt)
    else:
        dot_cfg = cfg.dot_cfg
        a_k = _cast_buffer(A, dot_cfg.operand_format)
        b_k = _cast_buffer(B, dot_cfg.operand_format)
        a_pad, a_meta = pad_and_tile(a_k, cfg.array_rows, 1)
        b_pad, b_meta = pad_and_tile(b_k, 1, cfg.array_cols)
        if cfg.backend == SYSTOLIC:
            ab, _cycles = run_gemm_systolic(a_pad, b_pad, cfg.array_config(), stalls=stalls)
        else:
            ab = _kernel_functional(a_pad, b_pad, dot_cfg, workers)
        ab = strip_padding(ab, PadMeta(a_meta.pad_rows, b_meta.pad_cols))
        ab_host = _cast_buffer(ab, host_fmt)

    return _host_scale_add(ab_host, None if beta_zero else C, int(alpha_w), int(beta_w), host_fmt)


# ---------------------------------------------------------------------------
# Exported GEMM-compatible entry points (cblas-style validation).

class GemmParameterError(ValueError):
    def __init__(self, index: int, name: str, detail: str) -> None:
        super().__init__(f"parameter {index} ({name}) is invalid: {detail}")
        self.index = index
        self.name = name


_LAYOUTS = {"r": "row", "row": "row", "rowmajor": "row", "101": "row",
            "c": "col", "col": "col", "colmajor": "col", "102": "col"}
_TRANS = {"n": False, "notrans": False, "111": False,
          "t": True, "trans": True, "112": True, "c": True, "conjtrans": True, "113": True}


def _norm_layout(layout) -> str:
    key = str(layout).strip().lower()
    out = _LAYOUTS.get(key)
    if out is None:
        raise GemmParameterError(1, "layout", f"{layout!r}")
    return out


def _norm_trans(value, index: int, name: str) -> bool:
    key = str(value).strip().lower()
    if key in _TRANS:
        return _TRANS[key]
    raise GemmParameterError(index, name, f"{value!r}")


def _blas_gemm(host_fmt: FormatSpec, np_dtype, layout, trans_a, trans_b, m, n, k,
               alpha, a, lda, b, ldb, beta, c, ldc, cfg, workers):
    layout = _norm_layout(layout)
    ta = _norm_trans(trans_a, 2, "transA")
    tb = _norm_trans(trans_b, 3, "transB")
    if m < 0:
        raise GemmParameterError(4, "M", f"{m}")
    if n < 0:
        raise GemmParameterError(5, "N", f"{n}")
    if k < 0:
        raise GemmParameterError(6, "K", f"{k}")

    # Stored shapes before logical transposition.
    a_shape = (m, k) if not ta else (k, m)
    b_shape = (k, n) if not tb else (n, k)
    c_shape = (m, n)

    def min_ld(shape) -> int:
        rows, cols = shape
        return max(1, cols if layout == "row" else rows)

    if lda < min_ld(a_shape):
        raise GemmParameterError(9, "lda", f"{lda} < {min_ld(a_shape)}")
    if ldb < min_ld(b_shape):
        raise GemmParameterError(11, "ldb", f"{ldb} < {min_ld(b_shape)}")
    if ldc < min_ld(c_shape):
        raise GemmParameterError(14, "ldc", f"{ldc} < {min_ld(c_shape)}")

    def strided_view(flat, shape, ld, index, name):
        """(rows, cols) logical view over a BLAS-style flat buffer."""
        rows, cols = shape
        srows, scols = (rows, cols) if layout == "row" else (cols, rows)
        need = (srows - 1) * ld + scols
        if flat.size < need:
            raise GemmParameterError(index, name, f"{flat.size} elements, need {need}")
        step = flat.strides[0]
        view = np.lib.stride_tricks.as_strided(flat, shape=(srows, scols),
                                               strides=(ld * step, step))
        return view if layout == "row" else view.T

    def as_matrix(buf, shape, ld, index, name):
        arr = np.asarray(buf)
        if arr.dtype != np_dtype:
            raise GemmParameterError(index, name, f"dtype {arr.dtype}, expected {np_dtype}")
        if shape[0] == 0 or shape[1] == 0:
            return np.zeros(shape, dtype=np.float64)
        return np.array(strided_view(arr.reshape(-1), shape, ld, index, name),
                        dtype=np.float64)

    a_log = as_matrix(a, a_shape, lda, 8, "A")
    b_log = as_matrix(b, b_shape, ldb, 10, "B")
    if ta:
        a_log = np.ascontiguousarray(a_log.T)
    if tb:
        b_log = np.ascontiguousarray(b_log.T)

    a_buf = MatrixBuffer.from_floats(a_log, host_fmt)
    b_buf = MatrixBuffer.from_floats(b_log, host_fmt)
    beta_is_zero = float(beta) == 0.0
    if beta_is_zero:
        c_buf = None
    else:
        c_buf = MatrixBuffer.from_floats(as_matrix(c, c_shape, ldc, 13, "C"), host_fmt)
    out = gemm(a_buf, b_buf, c_buf, alpha, beta, cfg=cfg, workers=workers)

    if m and n:
        c_arr = np.asarray(c)
        if c_arr.dtype != np_dtype:
            raise GemmParameterError(13, "C", f"dtype {c_arr.dtype}, expected {np_dtype}")
        flat = c_arr.reshape(-1)
        if not np.shares_memory(flat, c_arr):
            raise GemmParameterError(13, "C", "buffer must be contiguous for in-place update")
        strided_view(flat, c_shape, ldc, 13, "C")[...] = out.to_floats().astype(np_dtype)
    return c


def sgemm(layout, trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc,
          cfg: KernelConfig | None = None, workers: int = 1):
    """float32 GEMM with the standard argument contract; mutates and
    returns c."""
    return _blas_gemm(FLOAT32, np.float32, layout, trans_a, trans_b, m, n, k,
                      alpha, a, lda, b, ldb, beta, c, ldc, cfg, workers)


def dgemm(layout, trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc,
          cfg: KernelConfig | None = None, workers: int = 1):
    """float64 GEMM with the standard argument contract; mutates and
    returns c."""
    return _blas_gemm(FLOAT64, np.float64, layout, trans_a, trans_b, m, n, k,
                      alpha, a, lda, b, ldb, beta, c, ldc, cfg, workers)
