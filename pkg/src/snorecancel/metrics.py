"""Path-estimation metrics and SNR-controlled mixing."""

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

MAG_FLOOR = 1e-12


@dataclass(frozen=True)
class LsdBand:
    """DFT bin range [k1, k2] of a K-point transform at rate fs."""

    k1: int
    k2: int
    K: int = 4096
    fs: int = 44100

    @classmethod
    def from_hz(cls, low_hz=100.0, high_hz=20000.0, K=4096, fs=44100):
        k1 = math.ceil(low_hz * K / fs)
        k2 = math.floor(high_hz * K / fs)
        if not 0 <= k1 <= k2 <= K // 2:
            raise ValueError(f"band [{low_hz}, {high_hz}] Hz is empty or beyond Nyquist")
        return cls(k1, k2, K, fs)

    @property
    def edges_hz(self):
        return self.k1 * self.fs / self.K, self.k2 * self.fs / self.K


DEFAULT_BAND = LsdBand.from_hz()


def lsd(p, w, band=DEFAULT_BAND, return_floored=False):
    """Log-spectral distance in dB between responses ``p`` and ``w``.

    RMS over bins k1..k2 of 10*log10(|P|^2/|W|^2). Magnitudes below 1e-12 are
    floored; the number of floored bins is returned when ``return_floored``.
    """
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if max(p.shape[0], w.shape[0]) > band.K:
        raise ValueError(f"responses longer than the {band.K}-point transform")
    sl = slice(band.k1, band.k2 + 1)
    P = np.abs(np.fft.rfft(p, band.K)[sl])
    W = np.abs(np.fft.rfft(w, band.K)[sl])
    floored = int(np.count_nonzero(P < MAG_FLOOR) + np.count_nonzero(W < MAG_FLOOR))
    if floored:
        logger.debug("lsd: %d bins floored at %g", floored, MAG_FLOOR)
    P = np.maximum(P, MAG_FLOOR)
    W = np.maximum(W, MAG_FLOOR)
    ratio_db = 10.0 * np.log10(P**2 / W**2)
    value = float(np.sqrt(np.mean(ratio_db**2)))
    if return_floored:
        return value, floored
    return value


def misalignment(p, w):
    """20*log10(||p - w|| / ||p||) in dB; -inf when w equals p exactly.

    The shorter response is zero-padded, so taps of ``w`` beyond ``p`` count
    as error.
    """
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    ref = np.linalg.norm(p)
    if ref == 0:
        raise ValueError("misalignment is undefined for an all-zero reference path")
    L = max(p.shape[0], w.shape[0])
    diff = np.linalg.norm(np.pad(p, (0, L - p.shape[0])) - np.pad(w, (0, L - w.shape[0])))
    if diff == 0:
        return float("-inf")
    return float(20.0 * np.log10(diff / ref))


def format_db(value):
    """Render a dB figure; the exact-match sentinel prints as '< -300 dB'."""
    if value == float("-inf") or value < -300:
        return "< -300 dB"
    return f"{value:.4f} dB"


def snr_gain(clean, noise, snr_db, active=None):
    """Gain g such that clean vs g*noise has the requested SNR on ``active``."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if clean.shape != noise.shape:
        raise ValueError(f"clean and noise lengths differ: {clean.shape} vs {noise.shape}")
    mask = np.ones(clean.shape, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    if mask.shape != clean.shape:
        raise ValueError("activity mask must match the signal length")
    if not mask.any():
        raise ValueError("activity mask selects no samples")
    p_clean = np.mean(clean[mask] ** 2)
    p_noise = np.mean(noise[mask] ** 2)
    if p_clean == 0:
        raise ValueError("clean signal has zero power on the active region")
    if p_noise == 0:
        raise ValueError("noise has zero power on the active region")
    return float(np.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(clean, noise, snr_db, active=None):
    """clean + g*noise at ``snr_db``, powers measured over ``active`` samples."""
    g = snr_gain(clean, noise, snr_db, active)
    return np.asarray(clean, dtype=np.float64) + g * np.asarray(noise, dtype=np.float64)
