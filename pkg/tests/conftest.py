import os

import numpy as np
import pytest

from tamm.formats import FormatSpec, Kind

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def random_words(fmt: FormatSpec, count: int, rng, finite_only: bool = True):
    """Uniform random words; exponent-biased extras so subnormals and
    tiny/huge magnitudes always show up."""
    words = rng.integers(0, 1 << min(fmt.total_bits, 63), size=count,
                         dtype=np.uint64)
    if fmt.total_bits == 64:
        words = words | (rng.integers(0, 2, size=count, dtype=np.uint64) << 63)
    out = [int(w) & fmt.word_mask for w in words]
    if fmt.kind != Kind.POSIT:
        m = fmt.fraction_bits
        for i in range(0, count, 7):
            # squeeze the exponent field toward 0 to cover subnormals
            exp = int(rng.integers(0, 3))
            out[i] = (out[i] & ~(((1 << fmt.exponent_bits) - 1) << m)) | (exp << m)
    if finite_only:
        from tamm.formats import NumClass, decode

        for i, w in enumerate(out):
            if decode(w, fmt).cls not in (NumClass.ZERO, NumClass.NORMAL,
                                          NumClass.SUBNORMAL):
                out[i] = w & (fmt.word_mask >> 2)
                if decode(out[i], fmt).cls not in (NumClass.ZERO, NumClass.NORMAL,
                                                   NumClass.SUBNORMAL):
                    out[i] = 0
    return out


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES
