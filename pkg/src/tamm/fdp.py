"""Fused dot-product on the scratchpad accumulator, FMA-chain references,
the exact big-integer oracle, and the correct-significant-bits metric."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .accumulator import AccumulatorSpec, AccumulatorState, parse_acc
from .formats import (
    NAN,
    NEG_INF,
    POS_INF,
    ZERO,
    DecodedNumber,
    FormatSpec,
    NumClass,
    decode,
    encode,
    fraction_to_float,
    make_format,
)


class ExceptionalValueError(ValueError):
    """An exact-oracle input carried NaN/Inf/NAR."""


@dataclass(frozen=True)
class DotProductConfig:
    operand_format: FormatSpec
    accumulator: AccumulatorSpec
    output_format: FormatSpec = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.output_format is None:
            object.__setattr__(self, "output_format", self.operand_format)

    @property
    def descriptor(self) -> str:
        return "/".join(
            (self.operand_format.descriptor, self.accumulator.descriptor,
             self.output_format.descriptor)
        )

    def __str__(self) -> str:
        return self.descriptor


def parse_dot_config(descriptor: str) -> DotProductConfig:
    parts = descriptor.strip().split("/")
    if len(parts) == 2:
        op, acc = parts
        return DotProductConfig(make_format(op), parse_acc(acc))
    if len(parts) == 3:
        op, acc, out = parts
        return DotProductConfig(make_format(op), parse_acc(acc), make_format(out))
    raise ValueError(f"expected <operand>/<acc>[/<output>], got {descriptor!r}")


# ---------------------------------------------------------------------------
# Exact scalar arithmetic on decoded values (IEEE-style special handling).

def exact_mul(a: DecodedNumber, b: DecodedNumber) -> DecodedNumber:
    if a.cls in (NumClass.NAN, NumClass.NAR) or b.cls in (NumClass.NAN, NumClass.NAR):
        return NAN
    a_inf = a.cls is NumClass.INF
    b_inf = b.cls is NumClass.INF
    if a_inf or b_inf:
        if (a_inf and b.cls is NumClass.ZERO) or (b_inf and a.cls is NumClass.ZERO):
            return NAN
        return POS_INF if a.sign * b.sign > 0 else NEG_INF
    if a.cls is NumClass.ZERO or b.cls is NumClass.ZERO:
        return DecodedNumber(NumClass.ZERO, a.sign * b.sign, 0, 0)
    return DecodedNumber(NumClass.NORMAL, a.sign * b.sign,
                         a.significand * b.significand, a.exponent + b.exponent)


def exact_add(a: DecodedNumber, b: DecodedNumber) -> DecodedNumber:
    if a.cls in (NumClass.NAN, NumClass.NAR) or b.cls in (NumClass.NAN, NumClass.NAR):
        return NAN
    a_inf = a.cls is NumClass.INF
    b_inf = b.cls is NumClass.INF
    if a_inf and b_inf:
        return a if a.sign == b.sign else NAN
    if a_inf:
        return a
    if b_inf:
        return b
    if a.cls is NumClass.ZERO and b.cls is NumClass.ZERO:
        # RNE zero rules: -0 only when both addends are -0.
        sign = -1 if (a.sign < 0 and b.sign < 0) else 1
        return DecodedNumber(NumClass.ZERO, sign, 0, 0)
    if a.cls is NumClass.ZERO:
        return b
    if b.cls is NumClass.ZERO:
        return a
    e = min(a.exponent, b.exponent)
    m = a.sign * (a.significand << (a.exponent - e)) + b.sign * (b.significand << (b.exponent - e))
    if m == 0:
        return ZERO  # exact cancellation gives +0 under RNE
    return DecodedNumber(NumClass.NORMAL, -1 if m < 0 else 1, abs(m), e)


# ---------------------------------------------------------------------------
# Dot products.

def fdp(x: Sequence[int], y: Sequence[int], cfg: DotProductConfig) -> tuple[int, frozenset[str]]:
    """Fused dot product: decode, accumulate exactly (truncated at lsb),
    round once into the output format.  Order of elements cannot change
    the result word."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    fmt = cfg.operand_format
    state = AccumulatorState(cfg.accumulator)
    for xw, yw in zip(x, y):
        state.add_product(decode(xw, fmt), decode(yw, fmt))
    return state.render(cfg.output_format), state.flags


def fma_reference(x: Sequence[int], y: Sequence[int], fmt: FormatSpec) -> int:
    """FPU-style chain: s <- RNE_fmt(s + x_i * y_i), product kept exact
    inside each step (single rounding per step), strictly left to right."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    s = ZERO
    word = encode(s, fmt)
    for xw, yw in zip(x, y):
        t = exact_add(s, exact_mul(decode(xw, fmt), decode(yw, fmt)))
        word = encode(t, fmt)
        s = decode(word, fmt)
    return word


def exact_oracle(x: Sequence[int], y: Sequence[int], fmt: FormatSpec) -> Fraction:
    """Exact rational dot product via unbounded integers."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    terms: list[tuple[int, int]] = []
    for xw, yw in zip(x, y):
        a = decode(xw, fmt)
        b = decode(yw, fmt)
        if not (a.is_finite and b.is_finite):
            raise ExceptionalValueError("exceptional value in oracle input")
        if a.cls is NumClass.ZERO or b.cls is NumClass.ZERO:
            continue
        terms.append((a.sign * b.sign * a.significand * b.significand,
                      a.exponent + b.exponent))
    if not terms:
        return Fraction(0)
    e_min = min(e for _, e in terms)
    total = sum(m << (e - e_min) for m, e in terms)
    return Fraction(total << e_min) if e_min >= 0 else Fraction(total, 1 << -e_min)


def correct_bits(computed: float, exact: Fraction) -> float:
    """-log2 of the relative error against the exact value, clamped to
    [0, 52]; 52 means "as good as a correctly rounded double"."""
    if math.isnan(computed) or math.isinf(computed):
        return 0.0
    if exact == 0:
        return 52.0 if computed == 0 else 0.0
    if computed == fraction_to_float(exact):
        return 52.0
    rel = abs(Fraction(computed) - exact) / abs(exact)
    if rel >= 1:
        return 0.0
    bits = math.log2(rel.denominator) - math.log2(rel.numerator)
    return min(52.0, max(0.0, bits))
