"""Bit-level codecs for IEEE-754 style floats, bfloat16, and posits.

Decoding turns a machine word into an exact (class, sign, significand,
exponent) quadruple with value ``sign * significand * 2**exponent``; the
significand is an unbounded non-negative integer, so no information is
lost on the way in.  Encoding rounds a real value back to the nearest
representable word (ties to even).  All exceptional values funnel through
a small class enum so downstream code never has to re-inspect bit fields.

Conventions baked in here and relied on elsewhere:

* IEEE encodings keep signed zero, gradual underflow, and overflow to
  infinity.  NaNs are not sign- or payload-preserving: every NaN decodes
  to one logical NAN and encodes to one canonical quiet-NaN pattern.
* Posits follow the 2022 standard: a single NAR pattern (1 followed by
  zeros), two's-complement negatives, regime/exponent/fraction fields,
  round-to-nearest-even on the bit string, saturation at maxpos/minpos,
  and no rounding of a nonzero value to zero.
* bfloat16 is IEEE<8,7> and shares the IEEE code paths.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import NamedTuple


class FormatError(ValueError):
    """Raised for malformed descriptors or out-of-range field widths."""


class Kind(Enum):
    IEEE754 = "ieee"
    BFLOAT16 = "bfloat16"
    POSIT = "posit"


class NumClass(Enum):
    ZERO = "zero"
    NORMAL = "normal"
    SUBNORMAL = "subnormal"
    INF = "inf"
    NAN = "nan"
    NAR = "nar"


#: Classes that carry no (sign, significand, exponent) value.
EXCEPTIONAL = frozenset({NumClass.INF, NumClass.NAN, NumClass.NAR})


class DecodedNumber(NamedTuple):
    """Exact decoded value: ``sign * significand * 2**exponent``.

    ``significand`` is an arbitrary-precision non-negative integer and is
    *not* normalized (trailing zeros are allowed), so equality of values
    should go through :meth:`to_fraction`, not tuple equality.  For ZERO,
    ``sign`` distinguishes +0 from -0 where the format does; for INF it
    gives the direction; for NAN/NAR it is meaningless and fixed at +1.
    """

    cls: NumClass
    sign: int
    significand: int
    exponent: int

    @property
    def is_finite(self) -> bool:
        return self.cls in (NumClass.ZERO, NumClass.NORMAL, NumClass.SUBNORMAL)

    @property
    def is_nonzero_finite(self) -> bool:
        return self.cls in (NumClass.NORMAL, NumClass.SUBNORMAL)

    def to_fraction(self) -> Fraction:
        if not self.is_finite:
            raise ValueError(f"no rational value for {self.cls.value}")
        if self.cls is NumClass.ZERO:
            return Fraction(0)
        m = self.sign * self.significand
        e = self.exponent
        return Fraction(m * (1 << e)) if e >= 0 else Fraction(m, 1 << -e)

    def to_float(self) -> float:
        """Value as a Python float, correctly rounded (inf on overflow)."""
        if self.cls is NumClass.ZERO:
            return -0.0 if self.sign < 0 else 0.0
        if self.cls is NumClass.INF:
            return math.inf if self.sign > 0 else -math.inf
        if self.cls in (NumClass.NAN, NumClass.NAR):
            return math.nan
        try:
            return float(self.to_fraction())
        except OverflowError:
            return math.inf if self.sign > 0 else -math.inf


ZERO = DecodedNumber(NumClass.ZERO, 1, 0, 0)
NEG_ZERO = DecodedNumber(NumClass.ZERO, -1, 0, 0)
POS_INF = DecodedNumber(NumClass.INF, 1, 0, 0)
NEG_INF = DecodedNumber(NumClass.INF, -1, 0, 0)
NAN = DecodedNumber(NumClass.NAN, 1, 0, 0)
NAR = DecodedNumber(NumClass.NAR, 1, 0, 0)


@dataclass(frozen=True)
class FormatSpec:
    """One concrete number format.

    IEEE-style formats carry ``exponent_bits``/``fraction_bits`` (hidden
    bit excluded); posits carry ``es``.  ``total_bits`` is the storage
    width; words are handled as Python ints in [0, 2**total_bits).
    """

    kind: Kind
    total_bits: int
    exponent_bits: int = 0
    fraction_bits: int = 0
    es: int = 0

    def __post_init__(self) -> None:
        if self.kind in (Kind.IEEE754, Kind.BFLOAT16):
            if self.exponent_bits < 2:
                raise FormatError("exponent field needs at least 2 bits")
            if self.fraction_bits < 1:
                raise FormatError("fraction field needs at least 1 bit")
            assert self.total_bits == 1 + self.exponent_bits + self.fraction_bits
        else:
            if self.total_bits < 3:
                raise FormatError("posit width must be at least 3")
            if self.es < 0:
                raise FormatError("posit es must be non-negative")

    @property
    def descriptor(self) -> str:
        if self.kind is Kind.BFLOAT16:
            return "bfloat16"
        if self.kind is Kind.IEEE754:
            return f"ieee:{self.exponent_bits}:{self.fraction_bits}"
        return f"posit:{self.total_bits}:{self.es}"

    @property
    def word_bytes(self) -> int:
        return (self.total_bits + 7) // 8

    @property
    def word_mask(self) -> int:
        return (1 << self.total_bits) - 1

    # IEEE-style derived parameters
    @property
    def bias(self) -> int:
        return (1 << (self.exponent_bits - 1)) - 1

    @property
    def emax(self) -> int:
        return self.bias

    @property
    def emin(self) -> int:
        return 1 - self.bias

    def __str__(self) -> str:
        return self.descriptor


def make_format(descriptor: str) -> FormatSpec:
    """Parse ``ieee:<E>:<M> | bfloat16 | posit:<n>:<es>``."""
    parts = descriptor.strip().lower().split(":")
    name = parts[0]
    try:
        if name == "bfloat16":
            if len(parts) != 1:
                raise FormatError(f"bfloat16 takes no parameters: {descriptor!r}")
            return FormatSpec(Kind.BFLOAT16, 16, exponent_bits=8, fraction_bits=7)
        if name == "ieee":
            if len(parts) != 3:
                raise FormatError(f"expected ieee:<E>:<M>: {descriptor!r}")
            e, m = int(parts[1]), int(parts[2])
            return FormatSpec(Kind.IEEE754, 1 + e + m, exponent_bits=e, fraction_bits=m)
        if name == "posit":
            if len(parts) != 3:
                raise FormatError(f"expected posit:<n>:<es>: {descriptor!r}")
            n, es = int(parts[1]), int(parts[2])
            return FormatSpec(Kind.POSIT, n, es=es)
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"non-integer field in descriptor {descriptor!r}") from exc
    raise FormatError(f"unknown format family {name!r} in {descriptor!r}")


# Well-known instances.
FLOAT32 = make_format("ieee:8:23")
FLOAT64 = make_format("ieee:11:52")
FLOAT16 = make_format("ieee:5:10")
QUAD = make_format("ieee:15:112")
BFLOAT16 = make_format("bfloat16")


# ---------------------------------------------------------------------------
# Matrix-file format codes: kind<<24 | p1<<16 | p2<<8.

_KIND_CODES = {Kind.IEEE754: 1, Kind.BFLOAT16: 2, Kind.POSIT: 3}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


def format_code(fmt: FormatSpec) -> int:
    if fmt.kind is Kind.BFLOAT16:
        return _KIND_CODES[fmt.kind] << 24
    if fmt.kind is Kind.IEEE754:
        return (_KIND_CODES[fmt.kind] << 24) | (fmt.exponent_bits << 16) | (fmt.fraction_bits << 8)
    return (_KIND_CODES[fmt.kind] << 24) | (fmt.total_bits << 16) | (fmt.es << 8)


def format_from_code(code: int) -> FormatSpec:
    kind = _CODE_KINDS.get((code >> 24) & 0xFF)
    p1 = (code >> 16) & 0xFF
    p2 = (code >> 8) & 0xFF
    if kind is None or code & 0xFF:
        raise FormatError(f"unknown format code {code:#010x}")
    if kind is Kind.BFLOAT16:
        return BFLOAT16
    if kind is Kind.IEEE754:
        return make_format(f"ieee:{p1}:{p2}")
    return make_format(f"posit:{p1}:{p2}")


# ---------------------------------------------------------------------------
# Rounding primitive.

def rne_shift_right(m: int, s: int) -> int:
    """Round ``m / 2**s`` to the nearest integer, ties to even.

    ``s <= 0`` degenerates to an exact left shift.  ``m`` must be >= 0.
    """
    if s <= 0:
        return m << -s
    keep = m >> s
    rem = m & ((1 << s) - 1)
    half = 1 << (s - 1)
    if rem > half or (rem == half and keep & 1):
        keep += 1
    return keep


# ---------------------------------------------------------------------------
# IEEE-style decode/encode (bfloat16 shares these paths).

def _decode_ieee(word: int, fmt: FormatSpec) -> DecodedNumber:
    e_bits, m_bits = fmt.exponent_bits, fmt.fraction_bits
    sign = -1 if (word >> (e_bits + m_bits)) & 1 else 1
    expf = (word >> m_bits) & ((1 << e_bits) - 1)
    frac = word & ((1 << m_bits) - 1)
    if expf == (1 << e_bits) - 1:
        if frac == 0:
            return DecodedNumber(NumClass.INF, sign, 0, 0)
        return NAN
    if expf == 0:
        if frac == 0:
            return DecodedNumber(NumClass.ZERO, sign, 0, 0)
        return DecodedNumber(NumClass.SUBNORMAL, sign, frac, fmt.emin - m_bits)
    return DecodedNumber(NumClass.NORMAL, sign, (1 << m_bits) | frac, expf - fmt.bias - m_bits)


def _encode_ieee_finite(sign: int, m: int, e: int, fmt: FormatSpec) -> int:
    """Round the nonzero value sign*m*2**e into the format (RNE)."""
    e_bits, m_bits = fmt.exponent_bits, fmt.fraction_bits
    sbit = (1 if sign < 0 else 0) << (e_bits + m_bits)
    top = m.bit_length() - 1 + e  # floor(log2 |value|)
    if top < fmt.emin:
        # Below the normal range: quantize to the subnormal quantum.
        q = rne_shift_right(m, (fmt.emin - m_bits) - e)
        if q <= (1 << m_bits) - 1:
            return sbit | q  # signed zero when q == 0
        # Rounded up into the smallest normal.
        return sbit | (1 << m_bits)
    q = rne_shift_right(m, (top - m_bits) - e)
    if q == 1 << (m_bits + 1):  # carry out of the rounding
        q >>= 1
        top += 1
    if top > fmt.emax:
        return sbit | (((1 << e_bits) - 1) << m_bits)  # infinity
    return sbit | ((top + fmt.bias) << m_bits) | (q - (1 << m_bits))


def _ieee_special(x: DecodedNumber, fmt: FormatSpec) -> int:
    e_bits, m_bits = fmt.exponent_bits, fmt.fraction_bits
    ones = (1 << e_bits) - 1
    if x.cls is NumClass.ZERO:
        return (1 if x.sign < 0 else 0) << (e_bits + m_bits)
    if x.cls is NumClass.INF:
        return ((1 if x.sign < 0 else 0) << (e_bits + m_bits)) | (ones << m_bits)
    # NAN and NAR both land on the canonical quiet NaN.
    return (ones << m_bits) | (1 << (m_bits - 1))


# ---------------------------------------------------------------------------
# Posit decode/encode.

def _decode_posit(word: int, fmt: FormatSpec) -> DecodedNumber:
    n, es = fmt.total_bits, fmt.es
    if word == 0:
        return ZERO
    if word == 1 << (n - 1):
        return NAR
    sign = -1 if (word >> (n - 1)) & 1 else 1
    mag = word if sign > 0 else (-word) & fmt.word_mask
    body = mag & ((1 << (n - 1)) - 1)
    body_len = n - 1
    # Regime: run of identical bits from the top of the body.
    first = (body >> (body_len - 1)) & 1
    run = 1
    while run < body_len and ((body >> (body_len - 1 - run)) & 1) == first:
        run += 1
    rv = (run - 1) if first else -run
    rest_len = body_len - min(run + 1, body_len)  # skip the terminator if present
    rest = body & ((1 << rest_len) - 1)
    e_avail = min(es, rest_len)
    ef = ((rest >> (rest_len - e_avail)) << (es - e_avail)) if e_avail else 0
    frac_len = rest_len - e_avail
    frac = rest & ((1 << frac_len) - 1)
    significand = (1 << frac_len) | frac
    exponent = (rv << es) + ef - frac_len
    return DecodedNumber(NumClass.NORMAL, sign, significand, exponent)


def _encode_posit_finite(sign: int, m: int, e: int, fmt: FormatSpec) -> int:
    n, es = fmt.total_bits, fmt.es
    body_len = n - 1
    top = m.bit_length() - 1 + e
    max_e = (n - 2) << es
    if top > max_e:
        q = (1 << body_len) - 1  # maxpos
    elif top < -max_e:
        q = 1  # minpos: nonzero never rounds to zero
    else:
        rv, ef = top >> es, top & ((1 << es) - 1)
        if rv >= 0:
            reg_len = rv + 2
            regime = ((1 << (rv + 1)) - 1) << 1
        else:
            reg_len = -rv + 1
            regime = 1
        flen = m.bit_length() - 1
        frac = m - (1 << flen)
        bits = (regime << (es + flen)) | (ef << flen) | frac
        total = reg_len + es + flen
        q = rne_shift_right(bits, total - body_len)
        q = min(max(q, 1), (1 << body_len) - 1)  # saturate, never hit 0 or NAR
    word = q
    return word if sign > 0 else (-word) & fmt.word_mask


# ---------------------------------------------------------------------------
# Public codec entry points.

def decode(word: int, fmt: FormatSpec) -> DecodedNumber:
    """Decode a machine word (as an int in [0, 2**total_bits))."""
    if not 0 <= word <= fmt.word_mask:
        raise ValueError(f"word {word:#x} out of range for {fmt.descriptor}")
    if fmt.kind is Kind.POSIT:
        return _decode_posit(word, fmt)
    return _decode_ieee(word, fmt)


def encode(x: DecodedNumber, fmt: FormatSpec) -> int:
    """Encode a decoded value, rounding to nearest-even where inexact.

    Exceptional classes map across families: INF and NAN encode to the
    single NAR pattern in posit formats; NAR encodes to the canonical
    quiet NaN in IEEE-style formats.
    """
    if fmt.kind is Kind.POSIT:
        if x.cls in EXCEPTIONAL:
            return 1 << (fmt.total_bits - 1)
        if x.cls is NumClass.ZERO or x.significand == 0:
            return 0
        return _encode_posit_finite(x.sign, x.significand, x.exponent, fmt)
    if x.cls in EXCEPTIONAL:
        return _ieee_special(x, fmt)
    if x.cls is NumClass.ZERO or x.significand == 0:
        return _ieee_special(DecodedNumber(NumClass.ZERO, x.sign, 0, 0), fmt)
    return _encode_ieee_finite(x.sign, x.significand, x.exponent, fmt)


def encode_value(sign: int, significand: int, exponent: int, fmt: FormatSpec) -> int:
    """Encode the finite value sign*significand*2**exponent (RNE)."""
    if significand == 0:
        return encode(ZERO if sign > 0 else NEG_ZERO, fmt)
    return encode(DecodedNumber(NumClass.NORMAL, sign, significand, exponent), fmt)


def cast(word: int, src: FormatSpec, dst: FormatSpec) -> int:
    """Re-encode a word from one format into another (decode + RNE encode)."""
    return encode(decode(word, src), dst)


# ---------------------------------------------------------------------------
# Bridges to native Python floats (handy for tests and fast paths).

def decoded_from_float(x: float) -> DecodedNumber:
    """Exact decoded view of a Python float (no rounding)."""
    if math.isnan(x):
        return NAN
    if math.isinf(x):
        return POS_INF if x > 0 else NEG_INF
    if x == 0.0:
        return NEG_ZERO if math.copysign(1.0, x) < 0 else ZERO
    m, e = math.frexp(abs(x))
    significand = int(m * (1 << 53))
    return DecodedNumber(NumClass.NORMAL, -1 if x < 0 else 1, significand, e - 53)


def encode_float(x: float, fmt: FormatSpec) -> int:
    return encode(decoded_from_float(x), fmt)


def decode_to_float(word: int, fmt: FormatSpec) -> float:
    return decode(word, fmt).to_float()


def float64_to_word(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def word_to_float64(w: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", w))[0]


def float32_to_word(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def word_to_float32(w: int) -> float:
    return struct.unpack("<f", struct.pack("<I", w))[0]


def fraction_to_float(x: Fraction) -> float:
    """Correctly rounded Fraction -> float64 (inf on overflow)."""
    try:
        return x.numerator / x.denominator
    except OverflowError:
        return math.inf if x > 0 else -math.inf
