"""Snoring activity detection front end.

Stereo is averaged to mono, 40 log-Mel coefficients are computed on 30 ms
Hann windows every 10 ms, and a CRNN (three conv blocks pooled along the Mel
axis, two GRU layers, a per-frame sigmoid unit) turns them into snore
probabilities. ``energy_detector`` is a weight-free stand-in.
"""

import math

import numpy as np
from scipy.signal import get_window

from . import _kernels, _npkernels
from ._accel import USE_NUMBA
from .weights import CrnnWeights

__all__ = [
    "to_mono",
    "hz_to_mel",
    "mel_to_hz",
    "mel_filterbank",
    "frame_count",
    "logmel",
    "crnn_forward",
    "binarize",
    "energy_detector",
    "LOG_FLOOR",
]

LOG_FLOOR = 1e-10

# Slaney mel scale: linear below 1 kHz, logarithmic above
_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = math.log(6.4) / 27.0


def to_mono(left, right):
    """Channel average (L + R) / 2."""
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape:
        raise ValueError(f"channel lengths differ: {left.shape} vs {right.shape}")
    return (left + right) / 2.0


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    lin = f / _F_SP
    log = _MIN_LOG_MEL + np.log(np.maximum(f, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOGSTEP
    return np.where(f >= _MIN_LOG_HZ, log, lin)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    lin = _F_SP * m
    log = _MIN_LOG_HZ * np.exp(_LOGSTEP * (m - _MIN_LOG_MEL))
    return np.where(m >= _MIN_LOG_MEL, log, lin)


def mel_filterbank(sample_rate, n_fft, n_mels=40, fmin=0.0, fmax=None):
    """(n_mels, n_fft//2 + 1) triangular filters, Slaney spacing and area norm."""
    fmax = sample_rate / 2.0 if fmax is None else fmax
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lower = (freqs[None, :] - edges[:-2, None]) / np.diff(edges)[:-1, None]
    upper = (edges[2:, None] - freqs[None, :]) / np.diff(edges)[1:, None]
    fb = np.maximum(0.0, np.minimum(lower, upper))
    return fb * (2.0 / (edges[2:] - edges[:-2]))[:, None]


def _window_sizes(sample_rate, win_ms, hop_ms):
    win = int(round(win_ms * sample_rate / 1000.0))
    hop = int(round(hop_ms * sample_rate / 1000.0))
    if win < 1 or hop < 1:
        raise ValueError("window and hop must span at least one sample")
    return win, hop


def frame_count(n_samples, win, hop):
    if n_samples < win:
        return 0
    return (n_samples - win) // hop + 1


def logmel(mono, sample_rate=44100, n_mels=40, win_ms=30.0, hop_ms=10.0, chunk=2048):
    """(frames, n_mels) natural-log Mel energies, floor 1e-10.

    Periodic Hann window, power spectrum zero-padded to the next power of two.
    Inputs shorter than one window give an empty (0, n_mels) matrix.
    """
    x = np.asarray(mono, dtype=np.float64)
    win, hop = _window_sizes(sample_rate, win_ms, hop_ms)
    n_fft = 1 << (win - 1).bit_length()
    n_frames = frame_count(x.shape[0], win, hop)
    out = np.empty((n_frames, n_mels))
    if n_frames == 0:
        return out
    fb = mel_filterbank(sample_rate, n_fft, n_mels)
    window = get_window("hann", win, fftbins=True)
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop]
    for s in range(0, n_frames, chunk):
        spec = np.fft.rfft(frames[s : s + chunk] * window, n_fft)
        power = spec.real**2 + spec.imag**2
        out[s : s + chunk] = np.log(power @ fb.T + LOG_FLOOR)
    return out


def binarize(probabilities, threshold=0.5):
    """1 where probability > threshold (strict), else 0."""
    return (np.asarray(probabilities) > threshold).astype(np.uint8)


def energy_detector(features, threshold):
    """1 where the mean log-Mel value of a frame exceeds ``threshold`` (natural log)."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        return np.zeros(0, dtype=np.uint8)
    return (features.mean(axis=1) > threshold).astype(np.uint8)


def _conv_block(a, kernel, bias, gamma, beta, mean, var, pool, slope, eps):
    # a: (F, T, Cin) -> conv 3x3 same -> BN -> leaky ReLU -> max-pool (pool, 1)
    F, T, _ = a.shape
    padded = np.pad(a, ((1, 1), (1, 1), (0, 0)))
    out = np.zeros((F, T, kernel.shape[3]))
    for df in range(3):
        for dt in range(3):
            out += padded[df : df + F, dt : dt + T, :] @ kernel[df, dt]
    out += bias
    out = (out - mean) / np.sqrt(var + eps) * gamma + beta
    out = np.where(out > 0, out, slope * out)
    return out.reshape(F // pool, pool, T, -1).max(axis=1)


def _conv_stack(feats, weights, halo=3, chunk=2048):
    T = feats.shape[0]
    slope = weights.leaky_slope
    eps = weights.bn_eps
    flat = None
    for s in range(0, T, chunk):
        e = min(s + chunk, T)
        lo, hi = max(s - halo, 0), min(e + halo, T)
        a = feats[lo:hi].T[:, :, None]
        for b, pool in enumerate(weights.pools, start=1):
            a = _conv_block(
                a, weights[f"conv{b}.kernel"], weights[f"conv{b}.bias"],
                weights[f"bn{b}.gamma"], weights[f"bn{b}.beta"],
                weights[f"bn{b}.mean"], weights[f"bn{b}.var"], pool, slope, eps,
            )
        # (1, t, C) -> (t, C); Mel axis is fully pooled
        part = a.transpose(1, 0, 2).reshape(hi - lo, -1)[s - lo : s - lo + (e - s)]
        if flat is None:
            flat = np.empty((T, part.shape[1]))
        flat[s:e] = part
    return flat


def crnn_forward(features, weights):
    """Per-frame snore probabilities from (frames, n_mels) log-Mel features."""
    if not isinstance(weights, CrnnWeights):
        raise TypeError("weights must be a CrnnWeights instance")
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != weights.n_mels:
        raise ValueError(f"features must be (frames, {weights.n_mels}), got {feats.shape}")
    if feats.shape[0] == 0:
        return np.zeros(0)
    h = _conv_stack(feats, weights)
    scan = _kernels.gru_scan if USE_NUMBA else _npkernels.gru_scan
    for g in (1, 2):
        xz = h @ weights[f"gru{g}.W_z"] + weights[f"gru{g}.b_z"]
        xr = h @ weights[f"gru{g}.W_r"] + weights[f"gru{g}.b_r"]
        xh = h @ weights[f"gru{g}.W_h"] + weights[f"gru{g}.b_h"]
        h = scan(
            np.ascontiguousarray(xz), np.ascontiguousarray(xr), np.ascontiguousarray(xh),
            weights[f"gru{g}.U_z"], weights[f"gru{g}.U_r"], weights[f"gru{g}.U_h"],
        )
    logits = (h @ weights["out.W"])[:, 0] + weights["out.b"][0]
    return 1.0 / (1.0 + np.exp(-logits))
