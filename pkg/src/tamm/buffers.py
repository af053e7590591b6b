"""Row-major word matrices, zero padding to tile multiples, and the
on-disk matrix container (16-byte header + little-endian words)."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import formats
from .formats import FormatSpec, format_code, format_from_code

MAGIC = b"TAMM"

_WORD_DTYPES = {1: np.uint8, 2: np.uint16, 4: np.uint32, 8: np.uint64}


def _storage_dtype(fmt: FormatSpec) -> np.dtype:
    nbytes = fmt.word_bytes
    for size, dt in _WORD_DTYPES.items():
        if nbytes <= size:
            return np.dtype(dt)
    raise ValueError(f"words wider than 64 bits not supported: {fmt.descriptor}")


@dataclass
class MatrixBuffer:
    """rows x cols matrix of format words, row-major with a leading
    dimension (in words) of at least cols."""

    rows: int
    cols: int
    fmt: FormatSpec
    storage: np.ndarray  # shape (rows, leading_dimension), unsigned ints
    leading_dimension: int

    def __post_init__(self) -> None:
        if self.leading_dimension < self.cols:
            raise ValueError("leading_dimension must be >= cols")
        if self.storage.shape != (self.rows, self.leading_dimension):
            raise ValueError("storage shape does not match rows x leading_dimension")

    @classmethod
    def zeros(cls, rows: int, cols: int, fmt: FormatSpec) -> "MatrixBuffer":
        zero_word = formats.encode(formats.ZERO, fmt)
        storage = np.full((rows, cols), zero_word, dtype=_storage_dtype(fmt))
        return cls(rows, cols, fmt, storage, cols)

    @classmethod
    def from_words(cls, words: np.ndarray, fmt: FormatSpec) -> "MatrixBuffer":
        arr = np.ascontiguousarray(words, dtype=_storage_dtype(fmt))
        if arr.ndim != 2:
            raise ValueError("expected a 2-D word array")
        return cls(arr.shape[0], arr.shape[1], fmt, arr, arr.shape[1])

    @classmethod
    def from_floats(cls, values: np.ndarray, fmt: FormatSpec) -> "MatrixBuffer":
        """Encode a 2-D float array element-wise (RNE) into fmt."""
        values = np.asarray(values)
        if values.ndim != 2:
            raise ValueError("expected a 2-D value array")
        from .vectorized import encode_array  # deferred: vectorized imports formats only
        return cls.from_words(encode_array(values, fmt), fmt)

    @property
    def words(self) -> np.ndarray:
        """The rows x cols live region (a view when ld == cols)."""
        return self.storage[:, : self.cols]

    def word_at(self, i: int, j: int) -> int:
        return int(self.storage[i, j])

    def to_floats(self) -> np.ndarray:
        """Decode to float64 values (exact for formats narrower than
        double; RNE otherwise)."""
        from .vectorized import decode_array
        return decode_array(self.words, self.fmt)

    def transposed(self) -> "MatrixBuffer":
        t = np.ascontiguousarray(self.words.T)
        return MatrixBuffer(self.cols, self.rows, self.fmt, t, self.rows)

    def copy(self) -> "MatrixBuffer":
        w = self.words.copy()
        return MatrixBuffer(self.rows, self.cols, self.fmt, w, self.cols)


@dataclass(frozen=True)
class PadMeta:
    pad_rows: int
    pad_cols: int


def pad_and_tile(m: MatrixBuffer, tile_rows: int, tile_cols: int) -> tuple[MatrixBuffer, PadMeta]:
    """Zero-pad up to multiples of the tile shape; metadata undoes it."""
    if tile_rows < 1 or tile_cols < 1:
        raise ValueError("tile dims must be >= 1")
    pad_r = (-m.rows) % tile_rows
    pad_c = (-m.cols) % tile_cols
    if pad_r == 0 and pad_c == 0:
        return m, PadMeta(0, 0)
    zero_word = formats.encode(formats.ZERO, m.fmt)
    out = np.full((m.rows + pad_r, m.cols + pad_c), zero_word, dtype=m.storage.dtype)
    out[: m.rows, : m.cols] = m.words
    return MatrixBuffer(m.rows + pad_r, m.cols + pad_c, m.fmt, out, m.cols + pad_c), PadMeta(pad_r, pad_c)


def strip_padding(m: MatrixBuffer, meta: PadMeta) -> MatrixBuffer:
    rows = m.rows - meta.pad_rows
    cols = m.cols - meta.pad_cols
    w = np.ascontiguousarray(m.words[:rows, :cols])
    return MatrixBuffer(rows, cols, m.fmt, w, cols)


# ---------------------------------------------------------------------------
# File container: magic "TAMM", u32 rows, u32 cols, u32 format-code,
# all little-endian, then row-major words of ceil(total_bits/8) bytes.

def write_matrix(path, m: MatrixBuffer) -> None:
    header = MAGIC + struct.pack("<III", m.rows, m.cols, format_code(m.fmt))
    le = m.words.astype(_storage_dtype(m.fmt).newbyteorder("<"))
    # Trim storage words down to the format's byte width where they differ
    # (e.g. 3-byte posits would land here; none of the stock formats do).
    if le.dtype.itemsize != m.fmt.word_bytes:
        raw = bytearray()
        for w in m.words.ravel():
            raw += int(w).to_bytes(m.fmt.word_bytes, "little")
        payload = bytes(raw)
    else:
        payload = le.tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_matrix(path) -> MatrixBuffer:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != MAGIC:
            raise ValueError(f"{path}: not a matrix container (bad magic)")
        rows, cols, code = struct.unpack("<III", header[4:])
        fmt = format_from_code(code)
        payload = fh.read()
    expected = rows * cols * fmt.word_bytes
    if len(payload) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    dt = _storage_dtype(fmt)
    if dt.itemsize == fmt.word_bytes:
        words = np.frombuffer(payload, dtype=dt.newbyteorder("<")).astype(dt)
    else:
        words = np.array(
            [int.from_bytes(payload[i : i + fmt.word_bytes], "little")
             for i in range(0, len(payload), fmt.word_bytes)],
            dtype=dt,
        )
    return MatrixBuffer.from_words(words.reshape(rows, cols), fmt)
