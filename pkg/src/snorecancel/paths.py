"""Synthetic acoustic paths: a direct arrival, a few sparse early reflections
and an exponentially decaying diffuse tail.

The shipped defaults (``data/p_default.f32``, ``data/s_default.f32``) are
``synthetic_path`` outputs and are regenerated bit-for-bit by
``write_default_paths``.
"""

from importlib import resources

import numpy as np

__all__ = ["synthetic_path", "default_paths", "write_default_paths", "DEFAULT_SEEDS"]

DEFAULT_SEEDS = {"p": 20231, "s": 20232}
_DELAYS = {"p": (12, 24), "s": (2, 6)}


def synthetic_path(seed, length=256, delay=(8, 16), n_reflections=6, tail_db=-20.0, decay_taps=48.0):
    """Seeded room-like FIR response of ``length`` taps, unit peak."""
    if length < 1:
        raise ValueError("path length must be >= 1")
    rng = np.random.default_rng(seed)
    h = np.zeros(length)
    d0 = min(int(rng.integers(delay[0], delay[1] + 1)), length - 1)
    h[d0] = 1.0
    hi = min(d0 + 96, length)
    if hi > d0 + 1:
        for t in rng.choice(np.arange(d0 + 1, hi), size=min(n_reflections, hi - d0 - 1), replace=False):
            h[t] += rng.choice([-1.0, 1.0]) * rng.uniform(0.15, 0.6) * np.exp(-(t - d0) / (2 * decay_taps))
    n = np.arange(length - d0)
    tail = rng.normal(size=n.size) * np.exp(-n / decay_taps) * 10.0 ** (tail_db / 20.0)
    h[d0:] += tail
    return h / np.max(np.abs(h))


def _generate(which, length=256):
    return synthetic_path(DEFAULT_SEEDS[which], length, _DELAYS[which])


def write_default_paths(directory):
    """Write p_default.f32 / s_default.f32 (float32 little-endian) to ``directory``."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for which in ("p", "s"):
        _generate(which).astype("<f4").tofile(out / f"{which}_default.f32")


def default_paths():
    """(p, s) as float64 arrays read from the packaged float32 files."""
    data = resources.files("snorecancel") / "data"
    out = []
    for which in ("p", "s"):
        raw = (data / f"{which}_default.f32").read_bytes()
        out.append(np.frombuffer(raw, dtype="<f4").astype(np.float64))
    return tuple(out)
