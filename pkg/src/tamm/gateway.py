"""Entry points for the embedded-interpreter C gateway.

The shared library in _native/gateway.c hosts a CPython interpreter and
forwards the classic GEMM symbols here.  Pointers arrive as integers;
ctypes wraps them into numpy views so the result lands directly in the
caller's C buffer.

Every function returns (rc, message): rc 0 on success, the 1-based
parameter index for argument errors (xerbla-style), -1 otherwise.
"""

from __future__ import annotations

import ctypes
import os
import shutil
import subprocess
import sysconfig

import numpy as np

from .gemm import GemmParameterError, query_config, sgemm, dgemm

__all__ = ["fortran_gemm", "cblas_gemm", "config_report", "build_gateway"]

_CTYPE = {"s": ctypes.c_float, "d": ctypes.c_double}
_DTYPE = {"s": np.float32, "d": np.float64}


def _need(shape, ld: int, layout: str) -> int:
    rows, cols = shape
    if rows <= 0 or cols <= 0:
        return 0
    n = ld * (rows - 1) + cols if layout == "row" else ld * (cols - 1) + rows
    return max(0, n)


def _wrap(ptr: int, count: int, prec: str) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=_DTYPE[prec])
    if not ptr:
        raise ValueError("null pointer for a non-empty matrix")
    buf = (_CTYPE[prec] * count).from_address(ptr)
    return np.ctypeslib.as_array(buf)


def _is_trans(value) -> bool:
    return str(value).strip().lower() in ("t", "trans", "112", "c", "conjtrans", "113")


def _gemm_impl(prec, layout, transa, transb, m, n, k, alpha,
               a_ptr, lda, b_ptr, ldb, beta, c_ptr, ldc):
    a_shape = (k, m) if _is_trans(transa) else (m, k)
    b_shape = (n, k) if _is_trans(transb) else (k, n)
    a = _wrap(a_ptr, _need(a_shape, lda, layout), prec)
    b = _wrap(b_ptr, _need(b_shape, ldb, layout), prec)
    c = _wrap(c_ptr, _need((m, n), ldc, layout), prec)
    fn = sgemm if prec == "s" else dgemm
    fn(layout, transa, transb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc)
    return 0, ""


def _guarded(fn, *args):
    try:
        return fn(*args)
    except GemmParameterError as exc:
        return exc.index, str(exc)
    except Exception as exc:  # noqa: BLE001  (gateway boundary: no unwinding into C)
        return -1, f"{type(exc).__name__}: {exc}"


def fortran_gemm(prec, transa, transb, m, n, k, alpha,
                 a_ptr, lda, b_ptr, ldb, beta, c_ptr, ldc):
    """Column-major GEMM, the sgemm_/dgemm_ contract."""
    return _guarded(_gemm_impl, prec, "col", transa, transb, m, n, k,
                    alpha, a_ptr, lda, b_ptr, ldb, beta, c_ptr, ldc)


def cblas_gemm(prec, layout, transa, transb, m, n, k, alpha,
               a_ptr, lda, b_ptr, ldb, beta, c_ptr, ldc):
    """CBLAS-style GEMM; layout/trans arrive as the cblas enum ints."""
    lay = "row" if str(layout).strip().lower() in ("101", "r", "row", "rowmajor") else "col"
    return _guarded(_gemm_impl, prec, lay, transa, transb, m, n, k,
                    alpha, a_ptr, lda, b_ptr, ldb, beta, c_ptr, ldc)


def config_report():
    """(0, kernel descriptor string) for the ambient configuration."""
    try:
        return 0, query_config().descriptor
    except Exception as exc:  # noqa: BLE001
        return -1, f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# Build helper for the shared library.

def gateway_source() -> str:
    return os.path.join(os.path.dirname(__file__), "_native", "gateway.c")


def build_gateway(out_dir: str = ".", cc: str | None = None) -> str:
    """Compile _native/gateway.c into libtammgw.so; returns its path."""
    cc = cc or os.environ.get("CC", "gcc")
    if shutil.which(cc) is None:
        raise RuntimeError(f"no C compiler: {cc!r} not found")
    include = sysconfig.get_paths()["include"]
    libdir = sysconfig.get_config_var("LIBDIR")
    ldver = sysconfig.get_config_var("LDVERSION")
    os.makedirs(out_dir, exist_ok=True)
    out = os.path.join(os.fspath(out_dir), "libtammgw.so")
    cmd = [cc, "-shared", "-fPIC", "-O2", gateway_source(), "-o", out,
           f"-I{include}", f"-L{libdir}", f"-lpython{ldver}",
           f"-Wl,-rpath,{libdir}", "-lpthread", "-ldl"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"gateway build failed:\n{proc.stderr}")
    return out
