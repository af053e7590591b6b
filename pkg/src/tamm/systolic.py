"""Cycle-stepped functional model of the systolic MMM array.

Output-stationary dataflow: B words stream top-to-bottom, A words stream
right-to-left, each PE fuses one output element's products into its own
scratchpad.  After the data, a FLUSH token on both streams switches a PE
into drain mode: it forwards the FLUSH, pushes its accumulator contents
down the column, then passes the accumulators arriving from above.  The
per-column rounder at the bottom renders each accumulator once into the
output format ("rounding only when data exits the bottom") and feeds a
FIFO whose fullness backpressures the column.

Elasticity: every hop is a one-deep register slot with valid/ready
semantics.  A transfer happens exactly when the producer holds a token
and the consumer's slot was free at the start of the cycle (two-phase
update over a snapshot), so each PE's next state depends only on its own
registers and its neighbors' registered state.  Because pairing of A and
B beats is by arrival index, no external skewing is needed and arbitrary
stall patterns cannot change any computed value, only the cycle count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .accumulator import AccumulatorState
from .buffers import MatrixBuffer, PadMeta, pad_and_tile, strip_padding
from .fdp import DotProductConfig
from .formats import decode

DATA = "data"
FLUSH = "flush"
ACC = "acc"

_COMPUTE = 0
_DRAIN = 1


@dataclass(frozen=True)
class ArrayConfig:
    rows: int
    cols: int
    dot_cfg: DotProductConfig
    fifo_depth: int = 8

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array dims must be >= 1")
        if self.fifo_depth < 1:
            raise ValueError("fifo_depth must be >= 1")


@dataclass(frozen=True)
class StreamBeat:
    valid: bool
    kind: str = DATA
    payload: Optional[int] = None


IDLE = StreamBeat(False)


def data_beat(word: int) -> StreamBeat:
    return StreamBeat(True, DATA, word)


def flush_beat() -> StreamBeat:
    return StreamBeat(True, FLUSH, None)


class _PE:
    __slots__ = ("top_in", "right_in", "acc", "phase", "flush_down_sent",
                 "flush_left_sent", "acc_sent", "accs_passed", "expect_accs")

    def __init__(self, spec, expect_accs: int) -> None:
        self.top_in = None
        self.right_in = None
        self.acc = AccumulatorState(spec)
        self.phase = _COMPUTE
        self.flush_down_sent = False
        self.flush_left_sent = False
        self.acc_sent = False
        self.accs_passed = 0
        self.expect_accs = expect_accs


class ArraySim:
    """One array instance; step() advances exactly one cycle."""

    def __init__(self, cfg: ArrayConfig) -> None:
        self.cfg = cfg
        spec = cfg.dot_cfg.accumulator
        self.grid = [[_PE(spec, r) for _ in range(cfg.cols)] for r in range(cfg.rows)]
        self.bottom_in: list = [None] * cfg.cols
        self.fifos: list[list[int]] = [[] for _ in range(cfg.cols)]
        self.cycle = 0
        self._decode_memo: dict[int, object] = {}
        self._trace: Optional[Callable[[int, str, bool, bool, Optional[int]], None]] = None

    def _decode(self, word: int):
        d = self._decode_memo.get(word)
        if d is None:
            d = decode(word, self.cfg.dot_cfg.operand_format)
            self._decode_memo[word] = d
        return d

    def step(self, top_beats: list[StreamBeat], right_beats: list[StreamBeat],
             downstream_ready: bool):
        """Returns (bottom_beats, top_accepted, right_accepted).

        bottom_beats[c].valid means the column FIFO offered a word this
        cycle; it transferred iff downstream_ready was high.
        """
        cfg = self.cfg
        R, C = cfg.rows, cfg.cols
        grid = self.grid
        spec = cfg.dot_cfg.accumulator

        # Registered snapshot: all readiness/valid decisions read this.
        snap_top = [[grid[r][c].top_in for c in range(C)] for r in range(R)]
        snap_right = [[grid[r][c].right_in for c in range(C)] for r in range(R)]
        snap_bottom = list(self.bottom_in)
        snap_fifo_len = [len(f) for f in self.fifos]
        snap_fifo_head = [f[0] if f else None for f in self.fifos]

        def down_free(r: int, c: int) -> bool:
            return snap_top[r + 1][c] is None if r + 1 < R else snap_bottom[c] is None

        def left_free(r: int, c: int) -> bool:
            return snap_right[r][c - 1] is None if c > 0 else True  # edge: discard sink

        def push_down(r: int, c: int, tok) -> None:
            if r + 1 < R:
                grid[r + 1][c].top_in = tok
            else:
                self.bottom_in[c] = tok

        def push_left(r: int, c: int, tok) -> None:
            if c > 0:
                grid[r][c - 1].right_in = tok

        for r in range(R):
            for c in range(C):
                pe = grid[r][c]
                t = snap_top[r][c]
                a = snap_right[r][c]
                if pe.phase == _COMPUTE:
                    if t is not None and a is not None:
                        if t[0] == FLUSH and a[0] == FLUSH:
                            pe.top_in = None
                            pe.right_in = None
                            pe.phase = _DRAIN
                            pe.flush_down_sent = False
                            pe.flush_left_sent = False
                            pe.acc_sent = False
                            pe.accs_passed = 0
                        elif t[0] == DATA and a[0] == DATA and down_free(r, c) and left_free(r, c):
                            pe.top_in = None
                            pe.right_in = None
                            pe.acc.add_product(self._decode(a[1]), self._decode(t[1]))
                            push_down(r, c, t)
                            push_left(r, c, a)
                        # Mixed data/flush: the slower stream wins; wait.
                else:  # _DRAIN
                    if not pe.flush_down_sent:
                        if down_free(r, c):
                            push_down(r, c, (FLUSH, None))
                            pe.flush_down_sent = True
                    elif not pe.acc_sent:
                        if down_free(r, c):
                            st = pe.acc
                            push_down(r, c, (ACC, (st.bits, st.overflow_wrapped, st.saw_nan,
                                                   st.saw_pos_inf, st.saw_neg_inf)))
                            pe.acc = AccumulatorState(spec)
                            pe.acc_sent = True
                    elif t is not None and t[0] == ACC and down_free(r, c):
                        pe.top_in = None
                        push_down(r, c, t)
                        pe.accs_passed += 1
                    if not pe.flush_left_sent and left_free(r, c):
                        push_left(r, c, (FLUSH, None))
                        pe.flush_left_sent = True
                    if (pe.flush_down_sent and pe.flush_left_sent and pe.acc_sent
                            and pe.accs_passed == pe.expect_accs):
                        pe.phase = _COMPUTE

        # Exit rounders: discard stream residue, render accumulators.
        out_fmt = cfg.dot_cfg.output_format
        for c in range(C):
            tok = snap_bottom[c]
            if tok is None:
                continue
            if tok[0] == ACC:
                if snap_fifo_len[c] < cfg.fifo_depth:
                    bits, wrapped, nan, pinf, ninf = tok[1]
                    st = AccumulatorState(spec)
                    st.bits = bits
                    st.overflow_wrapped = wrapped
                    st.saw_nan = nan
                    st.saw_pos_inf = pinf
                    st.saw_neg_inf = ninf
                    self.fifos[c].append(st.render(out_fmt))
                    self.bottom_in[c] = None
            else:  # DATA that fell off the array, or the FLUSH marker
                self.bottom_in[c] = None

        # Edge feeds: accept offered beats into free edge slots.
        top_accepted = [False] * C
        for c, beat in enumerate(top_beats):
            ready = snap_top[0][c] is None
            if beat.valid and ready:
                grid[0][c].top_in = (beat.kind, beat.payload)
                top_accepted[c] = True
            if self._trace:
                self._trace(self.cycle, f"top[{c}]", beat.valid, ready, beat.payload)
        right_accepted = [False] * R
        for r, beat in enumerate(right_beats):
            ready = snap_right[r][C - 1] is None
            if beat.valid and ready:
                grid[r][C - 1].right_in = (beat.kind, beat.payload)
                right_accepted[r] = True
            if self._trace:
                self._trace(self.cycle, f"right[{r}]", beat.valid, ready, beat.payload)

        # Bottom handshake off the FIFO heads.
        bottom_beats = []
        for c in range(C):
            valid = snap_fifo_len[c] > 0
            word = snap_fifo_head[c]
            if valid and downstream_ready:
                self.fifos[c].pop(0)
            bottom_beats.append(StreamBeat(valid, DATA, word) if valid else IDLE)
            if self._trace:
                self._trace(self.cycle, f"bottom[{c}]", valid, downstream_ready, word)

        self.cycle += 1
        return bottom_beats, top_accepted, right_accepted


def build_array(cfg: ArrayConfig) -> ArraySim:
    return ArraySim(cfg)


@dataclass(frozen=True)
class StallPlan:
    """Deterministic random stalling for latency-insensitivity tests."""

    seed: int
    down_p: float = 0.0
    feed_p: float = 0.0


def run_gemm_systolic(A: MatrixBuffer, B: MatrixBuffer, cfg: ArrayConfig,
                      stalls: Optional[StallPlan] = None,
                      trace_path=None) -> tuple[MatrixBuffer, int]:
    """Full GEMM on the array: pad to tile multiples, stream each tile's
    K-run followed by FLUSH, collect rendered words from the bottom.
    Bit-identical to the functional kernel for any stall plan."""
    if A.cols != B.rows:
        raise ValueError(f"inner dimensions disagree: {A.cols} vs {B.rows}")
    op_fmt = cfg.dot_cfg.operand_format
    if A.fmt != op_fmt or B.fmt != op_fmt:
        raise ValueError("operands must already be in the kernel operand format")

    a_pad, a_meta = pad_and_tile(A, cfg.rows, 1)
    b_pad, b_meta = pad_and_tile(B, 1, cfg.cols)
    K = A.cols
    R, C = cfg.rows, cfg.cols

    out = MatrixBuffer.zeros(a_pad.rows, b_pad.cols, cfg.dot_cfg.output_format)
    sim = build_array(cfg)
    rng = np.random.default_rng(stalls.seed) if stalls else None

    trace_fh = open(trace_path, "w") if trace_path else None
    if trace_fh:
        trace_fh.write("cycle,interface,valid,ready,payload\n")

        def tracer(cycle, iface, valid, ready, payload):
            hexpay = "" if payload is None else f"0x{payload:x}"
            trace_fh.write(f"{cycle},{iface},{int(valid)},{int(ready)},{hexpay}\n")

        sim._trace = tracer

    a_words = a_pad.words
    b_words = b_pad.words
    try:
        for i0 in range(0, a_pad.rows, R):
            for j0 in range(0, b_pad.cols, C):
                # Per-stream feed queues: K data beats then a flush.
                top_pos = [0] * C
                right_pos = [0] * R
                collected = [0] * C
                need = R * C
                got = 0
                limit = 1000 * (K + R + C + 20)
                spent = 0
                while got < need:
                    if rng is not None:
                        feed_ok_top = rng.random(C) >= stalls.feed_p
                        feed_ok_right = rng.random(R) >= stalls.feed_p
                        down_ready = bool(rng.random() >= stalls.down_p)
                    else:
                        feed_ok_top = np.ones(C, dtype=bool)
                        feed_ok_right = np.ones(R, dtype=bool)
                        down_ready = True

                    tops = []
                    for c in range(C):
                        p = top_pos[c]
                        if p < K and feed_ok_top[c]:
                            tops.append(data_beat(int(b_words[p, j0 + c])))
                        elif p == K and feed_ok_top[c]:
                            tops.append(flush_beat())
                        else:
                            tops.append(IDLE)
                    rights = []
                    for r in range(R):
                        p = right_pos[r]
                        if p < K and feed_ok_right[r]:
                            rights.append(data_beat(int(a_words[i0 + r, p])))
                        elif p == K and feed_ok_right[r]:
                            rights.append(flush_beat())
                        else:
                            rights.append(IDLE)

                    bottoms, top_ok, right_ok = sim.step(tops, rights, down_ready)
                    for c in range(C):
                        if top_ok[c]:
                            top_pos[c] += 1
                        if bottoms[c].valid and down_ready:
                            # Drain order per column: bottom row first.
                            row = R - 1 - collected[c]
                            out.storage[i0 + row, j0 + c] = bottoms[c].payload
                            collected[c] += 1
                            got += 1
                    for r in range(R):
                        if right_ok[r]:
                            right_pos[r] += 1
                    spent += 1
                    if spent > limit:
                        raise RuntimeError("systolic array made no progress (cycle cap hit)")
    finally:
        if trace_fh:
            trace_fh.close()

    result = strip_padding(out, PadMeta(a_meta.pad_rows, b_meta.pad_cols))
    return result, sim.cycle
