"""DSP primitives: FIR filtering, radix-2 DFT, prototype design and the
DFT-modulated analysis filter bank that feeds the subband adaptive filter.

Functions take and return plain numpy arrays. ``Signal`` bundles samples with
their rate for I/O and the experiment harness.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels, _npkernels
from ._accel import USE_NUMBA

__all__ = [
    "Signal",
    "fir_filter",
    "design_prototype",
    "analysis_filterbank",
    "retained",
    "dft",
    "idft",
    "is_power_of_two",
]


@dataclass(frozen=True)
class Signal:
    """A uniformly sampled real waveform."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("Signal samples must be one-dimensional")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("Signal contains NaN or Inf")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self):
        return len(self) / self.sample_rate_hz


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def fir_filter(x, taps):
    """Filter ``x`` with FIR ``taps``, zero history, output as long as ``x``.

    Accepts a ``Signal`` (a ``Signal`` is returned) or an array.
    """
    taps = np.asarray(taps, dtype=np.float64)
    if taps.ndim != 1 or taps.shape[0] == 0:
        raise ValueError("FIR path needs at least one tap")
    if isinstance(x, Signal):
        return Signal(fir_filter(x.samples, taps), x.sample_rate_hz)
    # np.convolve beats a jitted direct loop here, so both backends share it
    return _npkernels.fir_direct(np.ascontiguousarray(x, dtype=np.float64), taps)


def design_prototype(length=256, M=64):
    """Hamming-windowed sinc lowpass with cutoff 1/(2M) cycles/sample, unity DC gain."""
    if M < 1:
        raise ValueError(f"subband count must be positive, got {M}")
    if length < 2 * M:
        raise ValueError(f"prototype length {length} is shorter than 2*M = {2 * M}")
    fc = 1.0 / (2 * M)
    n = np.arange(length) - (length - 1) / 2.0
    h = 2 * fc * np.sinc(2 * fc * n) * np.hamming(length)
    return h / h.sum()


def _pad_proto(proto, M):
    proto = np.asarray(proto, dtype=np.float64)
    Lp = -(-proto.shape[0] // M) * M
    return np.concatenate([proto, np.zeros(Lp - proto.shape[0])])


def analysis_filterbank(x, proto, M, chunk_frames=4096):
    """M-band DFT-modulated analysis bank decimated by D = M/2.

    Row j, column m is sum_i proto[i] * x[jD - i] * exp(-2j*pi*m*(jD - i)/M),
    i.e. subband m carries the band centred on +m/M cycles/sample. One row is
    emitted for every D input samples (frame j uses samples up to jD).
    Returns an (n_frames, M) complex array.
    """
    if isinstance(x, Signal):
        x = x.samples
    x = np.asarray(x, dtype=np.float64)
    if M < 2 or M % 2:
        raise ValueError(f"subband count must be even, got {M}")
    D = M // 2
    h = _pad_proto(proto, M)
    Lp = h.shape[0]
    n_frames = -(-x.shape[0] // D)
    out = np.empty((n_frames, M), dtype=np.complex128)
    xpad = np.concatenate([np.zeros(Lp - 1), x])
    # xpad[jD + Lp - 1 - i] == x[jD - i]
    win = np.lib.stride_tricks.sliding_window_view(xpad, Lp)
    for j0 in range(0, n_frames, chunk_frames):
        js = np.arange(j0, min(j0 + chunk_frames, n_frames))
        rows = win[js * D][:, ::-1]
        u = (rows * h).reshape(len(js), Lp // M, M).sum(axis=1)
        sub = np.conj(np.fft.fft(u, axis=1))
        odd = (js & 1).astype(bool)
        sub[np.ix_(odd, np.arange(1, M, 2))] *= -1
        out[js] = sub
    return out


def retained(frames):
    """Subbands 0..M/2 of an analysis output; the rest follow by conjugacy."""
    M = frames.shape[-1]
    return frames[..., : M // 2 + 1]


def _check_size(values, size):
    values = np.asarray(values, dtype=np.complex128)
    if values.ndim != 1 or values.shape[0] != size:
        raise ValueError(f"transform size {size} does not match input length {values.shape}")
    if not is_power_of_two(size):
        raise ValueError(f"transform size must be a power of two, got {size}")
    return values


def dft(values, size=None):
    """Unnormalised forward transform, power-of-two sizes only."""
    size = len(values) if size is None else size
    a = _check_size(values, size)
    if not USE_NUMBA:
        return np.fft.fft(a)
    a = a.copy()
    _kernels.fft_inplace(a, _kernels.twiddles(size), False)
    return a


def idft(values, size=None):
    """Inverse of ``dft`` (applies 1/size)."""
    size = len(values) if size is None else size
    a = _check_size(values, size)
    if not USE_NUMBA:
        return np.fft.ifft(a)
    a = a.copy()
    _kernels.fft_inplace(a, _kernels.twiddles(size), True)
    return a
