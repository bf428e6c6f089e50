"""Synthetic intermittent snoring with ground-truth annotations.

Each event is an inspiration burst (f0 in 100-200 Hz) followed by an
expiration burst (f0 in 200-300 Hz), both harmonic stacks with 1/h amplitudes
and raised-cosine envelopes, plus a little low-passed breath noise. Events
last 1-4 s; the silences in between are drawn so the snore time is exactly
``snore_ratio`` of the file. A faint noise floor runs under everything, as a
reference microphone in a bedroom would pick up.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "SnoreProfile",
    "generate",
    "event_plan",
    "annotations_to_frames",
    "frames_to_intervals",
]


@dataclass(frozen=True)
class SnoreProfile:
    f0_range_hz: tuple = (100.0, 300.0)
    inspiration_band: tuple = (100.0, 200.0)
    expiration_band: tuple = (200.0, 300.0)
    harmonics: int | None = None  # None: up to Nyquist
    event_s: tuple = (1.0, 4.0)
    min_gap_s: float = 0.5
    snore_ratio: float = 0.128
    inspiration_share: tuple = (0.4, 0.6)
    ramp_s: float = 0.08
    event_gain: tuple = (0.4, 1.0)
    jitter: float = 0.01
    breath_db: float = -20.0
    breath_cutoff_hz: float = 1500.0
    floor_db: float = -50.0
    peak: float = 0.9
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.f0_range_hz
        for name in ("inspiration_band", "expiration_band"):
            a, b = getattr(self, name)
            if not lo <= a <= b <= hi:
                raise ValueError(f"{name} {(a, b)} outside f0 range {(lo, hi)}")
        if not 0.0 < self.snore_ratio < 1.0:
            raise ValueError(f"snore_ratio must be in (0, 1), got {self.snore_ratio}")
        if not 0.0 < self.event_s[0] <= self.event_s[1]:
            raise ValueError(f"bad event duration range {self.event_s}")
        if self.min_gap_s < 0:
            raise ValueError("min_gap_s must be >= 0")
        if not 0.0 < self.peak <= 1.0:
            raise ValueError("peak must be in (0, 1]")


def event_plan(profile, duration_s, rng):
    """(start_s, end_s) per event with total length snore_ratio * duration."""
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    target = profile.snore_ratio * duration_s
    lo, hi = profile.event_s
    if target < lo:
        raise ValueError(
            f"{duration_s} s at ratio {profile.snore_ratio} leaves {target:.3f} s of snoring, "
            f"less than one {lo} s event"
        )
    lengths = []
    while sum(lengths) < target:
        lengths.append(rng.uniform(lo, hi))
    excess = sum(lengths) - target
    if lengths[-1] - excess >= lo:
        lengths[-1] -= excess
    else:
        lengths.pop()
        lengths = [v * target / sum(lengths) for v in lengths]
    n = len(lengths)
    silence = duration_s - target
    spare = silence - (n - 1) * profile.min_gap_s
    if spare < 0:
        raise ValueError(
            f"{n} events need {(n - 1) * profile.min_gap_s:.2f} s of gaps, only {silence:.2f} s of silence"
        )
    gaps = rng.dirichlet(np.ones(n + 1)) * spare
    gaps[1:-1] += profile.min_gap_s
    events = []
    t = gaps[0]
    for i, length in enumerate(lengths):
        events.append((t, t + length))
        t += length + gaps[i + 1]
    return events


def _burst(n, f0, fs, profile, rng):
    # harmonic stack with slow f0 jitter, phase-continuous within the burst
    drift = np.cumsum(rng.normal(0.0, 1.0, n // 256 + 2))
    drift = np.interp(np.arange(n) / 256.0, np.arange(drift.size), drift)
    drift = profile.jitter * drift / max(np.max(np.abs(drift)), 1e-12)
    inst = f0 * (1.0 + drift)
    phase = 2.0 * np.pi * np.cumsum(inst) / fs + rng.uniform(0, 2 * np.pi)
    top = int((fs / 2) // (f0 * (1 + profile.jitter)))
    if profile.harmonics is not None:
        top = min(top, profile.harmonics)
    out = np.zeros(n)
    for h in range(1, top + 1):
        out += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h
    ramp = min(int(profile.ramp_s * fs), n // 2)
    env = np.ones(n)
    if ramp > 0:
        edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = edge
        env[n - ramp :] = edge[::-1]
    return out * env, env


def generate(profile=None, duration_s=600.0, fs=44100):
    """(samples, annotations) for a seeded synthetic night excerpt."""
    profile = profile or SnoreProfile()
    rng = np.random.default_rng(profile.seed)
    events = event_plan(profile, duration_s, rng)
    n_total = int(round(duration_s * fs))
    x = np.zeros(n_total)
    b_breath, a_breath = [1.0 - math.exp(-2 * math.pi * profile.breath_cutoff_hz / fs)], [
        1.0,
        -math.exp(-2 * math.pi * profile.breath_cutoff_hz / fs),
    ]
    breath_gain = 10.0 ** (profile.breath_db / 20.0)
    annotations = []
    for start_s, end_s in events:
        s0, s1 = int(round(start_s * fs)), int(round(end_s * fs))
        n = s1 - s0
        split = int(n * rng.uniform(*profile.inspiration_share))
        f_in = rng.uniform(*profile.inspiration_band)
        f_ex = rng.uniform(*profile.expiration_band)
        gain = rng.uniform(*profile.event_gain)
        part_in, env_in = _burst(split, f_in, fs, profile, rng)
        part_ex, env_ex = _burst(n - split, f_ex, fs, profile, rng)
        tone = np.concatenate([part_in, part_ex])
        env = np.concatenate([env_in, env_ex])
        noise = lfilter(b_breath, a_breath, rng.normal(size=n))
        noise *= breath_gain * np.std(tone) / max(np.std(noise), 1e-12)
        x[s0:s1] = gain * (tone + noise * env)
        annotations.append((s0 / fs, s1 / fs))
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= profile.peak / peak
    floor = rng.normal(size=n_total) * profile.peak * 10.0 ** (profile.floor_db / 20.0)
    x += floor
    x = np.clip(x, -1.0, 1.0)
    return x, annotations


def _frame_edges(t_s, hop_ms):
    # first frame whose centre (i + 0.5) * hop lies at or after t
    return int(math.ceil(round(t_s * 1000.0 / hop_ms - 0.5, 9)))


def annotations_to_frames(annotations, L, hop_ms=10.0):
    """Frame i is 1 iff its centre (i + 0.5) * hop lies in some [start, end)."""
    out = np.zeros(L, dtype=np.uint8)
    prev_end = -math.inf
    for start, end in annotations:
        if end < start:
            raise ValueError(f"interval ({start}, {end}) ends before it starts")
        if start < prev_end:
            raise ValueError(f"interval ({start}, {end}) overlaps or is out of order")
        prev_end = end
        a = max(_frame_edges(start, hop_ms), 0)
        b = min(_frame_edges(end, hop_ms), L)
        if b > a:
            out[a:b] = 1
    return out


def frames_to_intervals(frames, hop_ms=10.0):
    """Runs of ones as (start_s, end_s) on the frame grid."""
    f = np.asarray(frames, dtype=np.int8)
    d = np.diff(np.concatenate([[0], f, [0]]))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    hop = hop_ms / 1000.0
    return [(float(s * hop), float(e * hop)) for s, e in zip(starts, ends)]
