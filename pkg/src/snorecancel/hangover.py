"""Hangover post-processing of binary snore predictions.

A FIFO of the last X predictions is read once per frame. When ones hold the
majority, the X window positions ending at the current output index are set
to one and the next k - X outputs are forced to one while the FIFO reads are
discarded, so each detected onset yields k consecutive ones. Otherwise the
newest prediction passes through (the very first window is copied whole).

Reads past the end of the stream see zeros. Outputs past L - 1 are dropped.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["HangoverParams", "hangover", "HangoverStream", "gate_stream"]


@dataclass(frozen=True)
class HangoverParams:
    """X: FIFO size (odd), k: frames per detected event, L: stream length.

    ``L=None`` means "length of the stream being processed".
    """

    k: int = 100
    X: int = 3
    L: int | None = None

    def __post_init__(self):
        if self.X < 1 or self.X % 2 == 0:
            raise ValueError(f"buffer size X must be odd and >= 1, got {self.X}")
        if self.k < self.X:
            raise ValueError(f"event length k={self.k} must be >= X={self.X}")
        if self.L is not None and self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")


def _as_bits(predictions):
    p = np.asarray(predictions)
    if p.ndim != 1:
        raise ValueError("predictions must be a 1-D sequence")
    if p.size and not np.all((p == 0) | (p == 1)):
        raise ValueError("predictions must be 0/1")
    return p.astype(np.int8)


def hangover(predictions, params=None, **kwargs):
    """Apply the hangover scheme to a complete 0/1 stream of length L."""
    params = params or HangoverParams(**kwargs)
    pred = _as_bits(predictions)
    L = pred.shape[0] if params.L is None else params.L
    if pred.shape[0] != L:
        raise ValueError(f"expected {L} predictions, got {pred.shape[0]}")
    X, k = params.X, params.k
    if L < X:
        return pred.copy()

    out = np.zeros(L, dtype=np.int8)
    pad = np.concatenate([pred, np.zeros(L + 2 * X + 2, dtype=np.int8)])
    csum = np.concatenate([[0], np.cumsum(pad, dtype=np.int64)])
    # read r sees pad[r : r + X]
    majority = (csum[X:] - csum[:-X]) > X // 2
    maj_reads = np.flatnonzero(majority)

    r = 0
    o = 0
    while o <= L - 1:
        if majority[r]:
            start = o
            out[max(start - X + 1, 0) : start + 1] = 1
            n_forced = max(0, min(k - X, L - start))
            out[start + 1 : start + n_forced + 1] = 1
            o = start + n_forced + 1
            r += n_forced + 2
        elif o == 0:
            out[:X] = pad[:X]
            o = X
            r = 1
        else:
            j = np.searchsorted(maj_reads, r)
            nxt = int(maj_reads[j]) if j < maj_reads.size else r + L
            steps = min(nxt - r, L - o)
            out[o : o + steps] = pad[r + X - 1 : r + X - 1 + steps]
            o += steps
            r += steps
    return out


class HangoverStream:
    """Incremental hangover: push predictions as they arrive.

    ``push`` returns the outputs that can no longer change; ``finish`` flushes
    the rest. The concatenation equals ``hangover`` on the whole stream.

    Each value is decided from the X newest predictions, but every detected
    event ends with a discarded read, so after m events output index i holds
    the decision made when prediction i + m arrived and the emitted count
    trails the pushed count by X - 1 + m.
    """

    def __init__(self, params=None, **kwargs):
        self.params = params or HangoverParams(**kwargs)
        self._fifo = []
        self._out = []
        self._emitted = 0
        self._pushed = 0
        self._o = 0
        self._forcing = False
        self._start = 0
        self._i = 0
        self._done = False

    def _write(self, idx, value, limit):
        if idx > limit:
            return
        if idx >= len(self._out):
            self._out.extend([0] * (idx + 1 - len(self._out)))
        self._out[idx] = value

    def _read(self, window, limit):
        X, k = self.params.X, self.params.k
        if self._forcing:
            if self._i <= k - X and self._o <= limit:
                self._o = self._start + self._i
                self._write(self._o, 1, limit)
                self._i += 1
            else:
                self._o += 1
                self._forcing = False
            return
        if self._o > limit:
            self._done = True
            return
        if 2 * sum(window) > X:
            self._start = self._o
            for idx in range(max(self._start - X + 1, 0), self._start + 1):
                self._write(idx, 1, limit)
            self._i = 1
            self._forcing = True
        elif self._o == 0:
            for idx, v in enumerate(window):
                self._write(idx, v, limit)
            self._o = X
        else:
            self._write(self._o, window[-1], limit)
            self._o += 1

    def _final_upto(self):
        return max(0, min(self._o - self.params.X + 1, len(self._out)))

    def _drain(self, upto):
        ready = self._out[self._emitted : upto]
        self._emitted = max(self._emitted, upto)
        return ready

    def push(self, bit):
        if bit not in (0, 1):
            raise ValueError(f"prediction must be 0 or 1, got {bit!r}")
        self._pushed += 1
        self._fifo.append(int(bit))
        if len(self._fifo) > self.params.X:
            self._fifo.pop(0)
        if len(self._fifo) == self.params.X:
            self._read(list(self._fifo), float("inf"))
        return self._drain(self._final_upto())

    def finish(self):
        """Run the remaining reads (zeros past the end) and return the tail."""
        L = self._pushed
        X = self.params.X
        if L < X:
            tail = list(self._fifo)
            self._emitted = L
            return tail
        fifo = list(self._fifo)
        while not self._done and (self._forcing or self._o <= L - 1):
            fifo = fifo[1:] + [0]
            self._read(fifo, L - 1)
        self._out.extend([0] * (L - len(self._out)))
        return self._drain(L)


def gate_stream(bits, n_samples, sample_rate=44100, hop_ms=10.0):
    """Zero-order hold of per-frame bits onto the sample grid.

    Frame i covers samples [i*hop, (i+1)*hop); samples beyond the last frame
    hold its bit.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    hold = int(round(hop_ms * sample_rate / 1000.0))
    if hold < 1:
        raise ValueError("hop is shorter than one sample")
    if bits.size == 0:
        return np.zeros(n_samples, dtype=np.uint8)
    gate = np.repeat(bits, hold)[:n_samples]
    if gate.shape[0] < n_samples:
        gate = np.concatenate([gate, np.full(n_samples - gate.shape[0], bits[-1], dtype=np.uint8)])
    return gate
