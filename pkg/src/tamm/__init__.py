"""Numerically tailored matrix multiplication.

Configurable float codecs (IEEE 754 minifloats, bfloat16, posits), fused
dot products over fixed-point scratchpad accumulators, a functional
systolic array simulator, and a BLAS-style GEMM entry point.  Results are
bit-exact: the same inputs and the same configuration produce the same
words on every backend, every thread count, every run.
"""

from .formats import (
    BFLOAT16,
    FLOAT16,
    FLOAT32,
    FLOAT64,
    DecodedNumber,
    FormatError,
    FormatSpec,
    Kind,
    NumClass,
    cast,
    decode,
    decode_to_float,
    encode,
    encode_float,
    encode_value,
    make_format,
)
from .accumulator import (
    AccumulatorSpec,
    AccumulatorSpecError,
    AccumulatorState,
    parse_acc,
    required_ovf,
    width,
)
from .fdp import (
    DotProductConfig,
    ExceptionalValueError,
    correct_bits,
    exact_oracle,
    fdp,
    fma_reference,
    parse_dot_config,
)
from .buffers import MatrixBuffer, read_matrix, write_matrix
from .gemm import (
    ConfigError,
    GemmParameterError,
    KernelConfig,
    dgemm,
    gemm,
    load_config_file,
    query_config,
    sgemm,
)
from .systolic import ArrayConfig, StallPlan, run_gemm_systolic

__version__ = "0.1.0"

__all__ = [
    "AccumulatorSpec",
    "AccumulatorSpecError",
    "AccumulatorState",
    "ArrayConfig",
    "BFLOAT16",
    "ConfigError",
    "DecodedNumber",
    "DotProductConfig",
    "ExceptionalValueError",
    "FLOAT16",
    "FLOAT32",
    "FLOAT64",
    "FormatError",
    "FormatSpec",
    "GemmParameterError",
    "KernelConfig",
    "Kind",
    "MatrixBuffer",
    "NumClass",
    "StallPlan",
    "cast",
    "correct_bits",
    "decode",
    "decode_to_float",
    "dgemm",
    "encode",
    "encode_float",
    "encode_value",
    "exact_oracle",
    "fdp",
    "fma_reference",
    "gemm",
    "load_config_file",
    "make_format",
    "parse_acc",
    "parse_dot_config",
    "query_config",
    "read_matrix",
    "required_ovf",
    "run_gemm_systolic",
    "sgemm",
    "width",
    "write_matrix",
]
