"""The <OVF, MSB, LSB> fixed-point scratchpad.

Products are aligned to the 2**lsb grid by an arithmetic shift (bits
below lsb are simply dropped, i.e. floor in two's complement) and added
into a width = ovf + msb - lsb + 1 bit register modulo 2**width.  The
top bit is the two's-complement sign bit with weight -2**(msb+ovf).

Overflow never saturates: the register wraps and a sticky
``overflow_wrapped`` flag records that the running mathematical sum of
retained-precision terms left [-2**(msb+ovf), 2**(msb+ovf) - 2**lsb] at
some point.  Wrapping keeps addition commutative and associative, so the
final register bits are invariant under permutation of the same multiset
of terms.  (The sticky flag itself watches prefix sums and is therefore
order-sensitive for transient excursions; only the bits carry the
permutation guarantee.)

Exceptional operands set sticky flags (saw_nan, saw_pos_inf,
saw_neg_inf) instead of touching the register.
"""

from __future__ import annotations

from dataclasses import dataclass

from .formats import (
    NAN,
    DecodedNumber,
    FormatSpec,
    NumClass,
    encode,
    encode_value,
)


class AccumulatorSpecError(ValueError):
    pass


@dataclass(frozen=True)
class AccumulatorSpec:
    """ovf: guard bits above msb; msb/lsb: weights of the top magnitude
    bit and the least retained bit (both signed, lsb <= msb)."""

    ovf: int
    msb: int
    lsb: int

    def __post_init__(self) -> None:
        if self.ovf < 0:
            raise AccumulatorSpecError(f"acc: ovf must be >= 0, got {self.ovf}")
        if self.lsb > self.msb:
            raise AccumulatorSpecError(f"acc: lsb {self.lsb} exceeds msb {self.msb}")

    @property
    def width(self) -> int:
        return self.ovf + self.msb - self.lsb + 1

    @property
    def descriptor(self) -> str:
        return f"acc:{self.ovf}:{self.msb}:{self.lsb}"

    def __str__(self) -> str:
        return self.descriptor


def parse_acc(descriptor: str) -> AccumulatorSpec:
    """Parse ``acc:<ovf>:<msb>:<lsb>`` (the leading ``acc:`` is optional)."""
    parts = descriptor.strip().lower().split(":")
    if parts and parts[0] == "acc":
        parts = parts[1:]
    if len(parts) != 3:
        raise AccumulatorSpecError(f"expected acc:<ovf>:<msb>:<lsb>, got {descriptor!r}")
    try:
        ovf, msb, lsb = (int(p) for p in parts)
    except ValueError as exc:
        raise AccumulatorSpecError(f"non-integer field in {descriptor!r}") from exc
    return AccumulatorSpec(ovf, msb, lsb)


def width(spec: AccumulatorSpec) -> int:
    return spec.width


def required_ovf(n_products: int) -> int:
    """Guard bits so n terms are wrap-free: ceil(log2(n)).

    Guarantee: n aligned terms each inside [-2**msb, 2**msb - 2**lsb]
    keep every partial sum inside the representable range when
    ovf >= ceil(log2(n)); one extra guard bit doubles the safe count.
    """
    if n_products < 1:
        raise ValueError("n_products must be >= 1")
    return (n_products - 1).bit_length()


class AccumulatorState:
    """Mutable scratchpad register plus sticky flags."""

    __slots__ = ("spec", "bits", "_running", "overflow_wrapped",
                 "saw_nan", "saw_pos_inf", "saw_neg_inf")

    def __init__(self, spec: AccumulatorSpec) -> None:
        self.spec = spec
        self.bits = 0  # two's-complement, stored in [0, 2**width)
        self._running = 0  # exact sum of retained terms, in units of 2**lsb
        self.overflow_wrapped = False
        self.saw_nan = False
        self.saw_pos_inf = False
        self.saw_neg_inf = False

    @property
    def flags(self) -> frozenset[str]:
        out = set()
        if self.overflow_wrapped:
            out.add("overflow_wrapped")
        if self.saw_nan:
            out.add("saw_nan")
        if self.saw_pos_inf:
            out.add("saw_pos_inf")
        if self.saw_neg_inf:
            out.add("saw_neg_inf")
        return frozenset(out)

    @property
    def signed_bits(self) -> int:
        """Register contents as a signed integer (units of 2**lsb)."""
        w = self.spec.width
        return self.bits - (1 << w) if self.bits >> (w - 1) else self.bits

    def value_units(self) -> int:
        return self.signed_bits

    def _add_units(self, units: int) -> None:
        w = self.spec.width
        self.bits = (self.bits + units) & ((1 << w) - 1)
        self._running += units
        half = 1 << (w - 1)
        if not -half <= self._running < half:
            self.overflow_wrapped = True

    def _exceptional(self, a: DecodedNumber, b: DecodedNumber) -> bool:
        if a.cls in (NumClass.NAN, NumClass.NAR) or b.cls in (NumClass.NAN, NumClass.NAR):
            self.saw_nan = True
            return True
        a_inf = a.cls is NumClass.INF
        b_inf = b.cls is NumClass.INF
        if a_inf or b_inf:
            if (a_inf and b.cls is NumClass.ZERO) or (b_inf and a.cls is NumClass.ZERO):
                self.saw_nan = True
            elif a.sign * b.sign > 0:
                self.saw_pos_inf = True
            else:
                self.saw_neg_inf = True
            return True
        return False

    def add_product(self, a: DecodedNumber, b: DecodedNumber) -> "AccumulatorState":
        if self._exceptional(a, b):
            return self
        if a.cls is NumClass.ZERO or b.cls is NumClass.ZERO:
            return self
        m = a.sign * b.sign * (a.significand * b.significand)
        shift = (a.exponent + b.exponent) - self.spec.lsb
        # Arithmetic shift: Python's >> floors, which is exactly the
        # drop-the-low-wires truncation.
        self._add_units(m << shift if shift >= 0 else m >> -shift)
        return self

    def add_value(self, x: DecodedNumber) -> "AccumulatorState":
        if x.cls in (NumClass.NAN, NumClass.NAR):
            self.saw_nan = True
            return self
        if x.cls is NumClass.INF:
            if x.sign > 0:
                self.saw_pos_inf = True
            else:
                self.saw_neg_inf = True
            return self
        if x.cls is NumClass.ZERO:
            return self
        m = x.sign * x.significand
        shift = x.exponent - self.spec.lsb
        self._add_units(m << shift if shift >= 0 else m >> -shift)
        return self

    def merge(self, other: "AccumulatorState") -> "AccumulatorState":
        """Fold another partial accumulation into this one.

        Register bits add modulo 2**width, flags union.  The wrap check
        re-runs on the combined running sum, which is conservative: it
        cannot see excursions that an interleaved order would have had.
        """
        if other.spec != self.spec:
            raise ValueError("cannot merge accumulators with different specs")
        self.saw_nan |= other.saw_nan
        self.saw_pos_inf |= other.saw_pos_inf
        self.saw_neg_inf |= other.saw_neg_inf
        self.overflow_wrapped |= other.overflow_wrapped
        self._add_units(other._running)
        # _add_units double-counted nothing: other's terms enter exactly
        # once; bits stay congruent to the running sum mod 2**width.
        return self

    def render(self, out_fmt: FormatSpec) -> int:
        """Round the register once into out_fmt (exit-of-array rounding).

        NaN beats infinities; two opposing infinity flags are NaN; the
        wrapped flag never changes the rendered value.
        """
        if self.saw_nan or (self.saw_pos_inf and self.saw_neg_inf):
            return encode(NAN, out_fmt)
        if self.saw_pos_inf:
            return encode(DecodedNumber(NumClass.INF, 1, 0, 0), out_fmt)
        if self.saw_neg_inf:
            return encode(DecodedNumber(NumClass.INF, -1, 0, 0), out_fmt)
        units = self.signed_bits
        sign = -1 if units < 0 else 1
        return encode_value(sign, abs(units), self.spec.lsb, out_fmt)


# Free-function aliases; all mutate and return their state.

def accumulate_product(state: AccumulatorState, a: DecodedNumber, b: DecodedNumber) -> AccumulatorState:
    return state.add_product(a, b)


def accumulate_value(state: AccumulatorState, x: DecodedNumber) -> AccumulatorState:
    return state.add_value(x)


def render(state: AccumulatorState, out_fmt: FormatSpec) -> int:
    return state.render(out_fmt)


def merge(state: AccumulatorState, other: AccumulatorState) -> AccumulatorState:
    return state.merge(other)
