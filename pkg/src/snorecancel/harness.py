"""SAD-ON vs SAD-OFF experiments over an SNR sweep.

The reference x(n) is synthetic snoring (or a WAV file), the disturbance is
d(n) = s(n) * p(n) * x(n) + g * noise with g set per SNR over the snore-active
samples. Every row of the (SNR x mode) grid sees the same x(n) and the same
noise realisation; only the noise gain and the gate differ.
"""

import csv
import dataclasses
import hashlib
import io
import json
import logging
import multiprocessing
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from scipy.signal import fftconvolve

from . import __version__, files, sad
from ._accel import BACKEND
from .hangover import HangoverParams, gate_stream, hangover
from .metrics import lsd, mix_at_snr, misalignment
from .paths import default_paths
from .saf import EngineDivergence, SafConfig, new_state, run
from .synth import SnoreProfile, annotations_to_frames, event_plan, generate
from .weights import load_weights

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RowResult",
    "prepare_inputs",
    "run_row",
    "run_experiment",
    "emit_prediction_trace",
    "write_outputs",
]

RESULT_FIELDS = [
    "snr_db", "sad_mode", "status", "lsd_db", "misalignment_db", "gate_duty",
    "updates", "lsd_floored_bins", "trajectory_file", "filter_file", "diagnostic", "config_hash",
]


class ConfigError(ValueError):
    """Invalid experiment configuration or unreadable input file."""


@dataclass
class ExperimentConfig:
    duration_s: float = 600.0
    fs: int = 44100
    input_wav: str | None = None
    annotations: str | None = None
    profile: dict = field(default_factory=dict)
    p_path: str | None = None
    s_path: str | None = None
    saf: dict = field(default_factory=dict)
    detector: str = "oracle"
    threshold: float = -6.0
    weights: str | None = None
    hangover_k: int = 100
    hangover_X: int = 3
    use_hangover: bool = True
    snr_list_db: list = field(default_factory=lambda: [10.0, 15.0, 20.0])
    sad_mode: str = "both"
    seed: int = 0
    output_dir: str = "results"
    jobs: int = 1
    trace_s: float = 100.0

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def resolved(self):
        """Config as a plain dict, minus keys that cannot change results."""
        d = dataclasses.asdict(self)
        for key in ("output_dir", "jobs"):
            d.pop(key)
        d["snr_list_db"] = [float(v) for v in d["snr_list_db"]]
        return d

    def config_hash(self):
        blob = json.dumps(self.resolved(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def modes(self):
        return {"on": ["on"], "off": ["off"], "both": ["on", "off"]}[self.sad_mode]

    def saf_config(self):
        try:
            return SafConfig(**self.saf)
        except TypeError as exc:
            raise ConfigError(f"saf: {exc}") from None

    def synth_profile(self, seed):
        opts = dict(self.profile)
        opts.setdefault("seed", seed)
        for key in ("f0_range_hz", "inspiration_band", "expiration_band", "event_s", "inspiration_share", "event_gain"):
            if key in opts:
                opts[key] = tuple(opts[key])
        try:
            return SnoreProfile(**opts)
        except TypeError as exc:
            raise ConfigError(f"profile: {exc}") from None

    def validate(self):
        """Check every setting and referenced file before any work starts."""
        if self.sad_mode not in ("on", "off", "both"):
            raise ConfigError(f"sad_mode must be on, off or both, got {self.sad_mode!r}")
        if self.detector not in ("oracle", "energy", "crnn"):
            raise ConfigError(f"detector must be oracle, energy or crnn, got {self.detector!r}")
        if not self.snr_list_db:
            raise ConfigError("snr_list_db is empty")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.input_wav is None and self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        for key in ("input_wav", "annotations", "p_path", "s_path", "weights"):
            value = getattr(self, key)
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"{key}: no such file: {value}")
        if self.detector == "crnn" and self.weights is None:
            raise ConfigError("detector crnn needs a weights file")
        if self.detector == "oracle" and self.input_wav is not None and self.annotations is None:
            raise ConfigError("oracle detector on a WAV input needs an annotations file")
        try:
            HangoverParams(k=self.hangover_k, X=self.hangover_X)
        except ValueError as exc:
            raise ConfigError(f"hangover: {exc}") from None
        self.saf_config()
        profile = self.synth_profile(0)
        if self.input_wav is None:
            try:
                event_plan(profile, self.duration_s, np.random.default_rng(0))
            except ValueError as exc:
                raise ConfigError(f"synthetic input: {exc}") from None
        out = Path(self.output_dir)
        if out.exists() and (not out.is_dir() or (any(out.iterdir()) and not (out / "manifest.json").is_file())):
            raise ConfigError(f"output_dir {out} exists and is not a previous results directory")
        try:
            if self.p_path:
                files.read_ir(self.p_path)
            if self.s_path:
                files.read_ir(self.s_path)
            if self.weights:
                load_weights(self.weights)
            if self.annotations:
                files.read_annotations(self.annotations)
            if self.input_wav:
                files.read_wav(self.input_wav)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class RowResult:
    snr_db: float
    sad_mode: str
    status: str
    lsd_db: float | None = None
    misalignment_db: float | None = None
    gate_duty: float = 0.0
    updates: int = 0
    lsd_floored_bins: int = 0
    diagnostic: str = ""
    trajectory: list = field(default_factory=list)
    w_final: np.ndarray | None = None


def mono(data):
    """Mono view of WAV samples: stereo is channel-averaged."""
    if data.ndim == 1:
        return data
    if data.shape[1] == 2:
        return sad.to_mono(data[:, 0], data[:, 1])
    return data.mean(axis=1)


def _seeds(seed):
    children = np.random.SeedSequence(seed).spawn(2)
    synth_seed = int(children[0].generate_state(1)[0])
    return synth_seed, children[1]


def _detect(cfg, x, fs, annotations, n_frames_oracle):
    if cfg.detector == "oracle":
        return annotations_to_frames(annotations, n_frames_oracle)
    if cfg.detector == "energy":
        return sad.energy_detector(sad.logmel(x, fs), cfg.threshold)
    w = load_weights(cfg.weights)
    feats = sad.logmel(x, fs, n_mels=w.n_mels, win_ms=w.win_ms, hop_ms=w.hop_ms)
    return sad.binarize(sad.crnn_forward(feats, w))


def prepare_inputs(cfg):
    """Signals shared by every row: x, clean disturbance, unit noise, gates."""
    synth_seed, noise_seed = _seeds(cfg.seed)
    if cfg.input_wav is None:
        fs = cfg.fs
        x, annotations = generate(cfg.synth_profile(synth_seed), cfg.duration_s, fs)
    else:
        data, fs = files.read_wav(cfg.input_wav)
        x = mono(data)
        annotations = files.read_annotations(cfg.annotations) if cfg.annotations else None
    if cfg.annotations and cfg.input_wav is None:
        annotations = files.read_annotations(cfg.annotations)
    p, s = default_paths()
    if cfg.p_path:
        p = files.read_ir(cfg.p_path)
    if cfg.s_path:
        s = files.read_ir(cfg.s_path)
    n = x.shape[0]
    hop = int(round(10.0 * fs / 1000.0))
    n_frames = -(-n // hop)
    active = None
    if annotations is not None:
        active = gate_stream(annotations_to_frames(annotations, n_frames), n, fs).astype(bool)
        if not active.any():
            active = None
    raw = _detect(cfg, x, fs, annotations, n_frames)
    post = raw
    if cfg.use_hangover and raw.size:
        post = hangover(raw, HangoverParams(k=cfg.hangover_k, X=cfg.hangover_X))
    clean = fftconvolve(fftconvolve(x, p)[:n], s)[:n]
    noise = np.random.default_rng(noise_seed).normal(size=n)
    return {
        "x": x, "fs": fs, "p": p, "s": s, "clean": clean, "noise": noise,
        "active": active, "raw": raw, "post": post,
        "gate_on": gate_stream(post, n, fs),
        "annotations": annotations,
    }


def run_row(inputs, saf_cfg, snr_db, mode, chunk_s=1.0):
    """One (SNR, mode) cell: run the engine, sample misalignment every second."""
    x, fs, p = inputs["x"], inputs["fs"], inputs["p"]
    d = mix_at_snr(inputs["clean"], inputs["noise"], snr_db, inputs["active"])
    gate = inputs["gate_on"] if mode == "on" else np.ones(x.shape[0], dtype=np.uint8)
    state = new_state(saf_cfg, s_hat=inputs["s"])
    step = max(int(round(chunk_s * fs)), 1)
    trajectory = []
    result = RowResult(snr_db=float(snr_db), sad_mode=mode, status="ok", gate_duty=float(gate.mean()))
    try:
        for c in range(0, x.shape[0], step):
            run(state, x[c : c + step], d[c : c + step], gate[c : c + step])
            trajectory.append((min(c + step, x.shape[0]) / fs, misalignment(p, state.w_full)))
    except EngineDivergence as exc:
        result.status = "failed"
        result.diagnostic = str(exc)
        result.trajectory = trajectory
        result.updates = state.updates
        return result
    value, floored = lsd(p, state.w_full, return_floored=True)
    result.lsd_db = value
    result.lsd_floored_bins = floored
    result.misalignment_db = misalignment(p, state.w_full)
    result.updates = state.updates
    result.trajectory = trajectory
    result.w_final = state.w_full.copy()
    return result


# inputs are handed to forked workers through this module global
_SHARED = {}


def _worker(args):
    snr_db, mode, saf_cfg = args
    return run_row(_SHARED["inputs"], saf_cfg, snr_db, mode)


def emit_prediction_trace(signal, raw, post, fs=44100, hop_ms=10.0, duration_s=None):
    """CSV text with time_s, amplitude, raw_pred, post_pred on the 10 ms grid.

    ``amplitude`` is the peak |signal| over each frame. A ``duration_s``
    excerpt gives duration_s / hop + 1 rows (both ends included), limited by
    the frames available.
    """
    raw = np.asarray(raw, dtype=np.uint8)
    post = np.asarray(post, dtype=np.uint8)
    if raw.shape != post.shape:
        raise ValueError("raw and post-processed streams must be aligned")
    hop = int(round(hop_ms * fs / 1000.0))
    x = np.abs(np.asarray(signal, dtype=np.float64))
    n_rows = raw.size
    if duration_s is not None:
        n_rows = min(n_rows, int(round(duration_s * 1000.0 / hop_ms)) + 1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["time_s", "amplitude", "raw_pred", "post_pred"])
    for i in range(n_rows):
        seg = x[i * hop : (i + 1) * hop]
        amp = float(seg.max()) if seg.size else 0.0
        w.writerow([f"{i * hop_ms / 1000.0:.2f}", f"{amp:.6f}", int(raw[i]), int(post[i])])
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if v == float("-inf"):
        return "-inf"
    return repr(float(v))


def run_experiment(cfg):
    """Run the full grid; returns (RowResult list in grid order, shared inputs)."""
    cfg.validate()
    inputs = prepare_inputs(cfg)
    saf_cfg = cfg.saf_config()
    grid = [(float(snr), mode, saf_cfg) for snr in cfg.snr_list_db for mode in cfg.modes()]
    if cfg.jobs == 1 or len(grid) == 1:
        rows = [run_row(inputs, saf_cfg, snr, mode) for snr, mode, _ in grid]
    else:
        _SHARED["inputs"] = inputs
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(grid)), mp_context=ctx) as pool:
                rows = list(pool.map(_worker, grid))
        finally:
            _SHARED.clear()
    return rows, inputs


def write_outputs(cfg, rows, inputs):
    """results.csv, one trajectory CSV and one .f32 filter per row,
    prediction_trace.csv and manifest.json. Written to a temporary directory
    and moved into place so a failure leaves no partial output."""
    out = Path(cfg.output_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=out.parent))
    digest = cfg.config_hash()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        tag = f"snr{r.snr_db:g}_{r.sad_mode}"
        traj_name = f"trajectory_{tag}.csv"
        tb = io.StringIO()
        tw = csv.writer(tb, lineterminator="\r\n")
        tw.writerow(["time_s", "misalignment_db"])
        for t, m in r.trajectory:
            tw.writerow([repr(float(t)), _fmt(m)])
        (tmp / traj_name).write_text(tb.getvalue(), newline="")
        filt_name = ""
        if r.w_final is not None:
            filt_name = f"w_{tag}.f32"
            files.write_ir(tmp / filt_name, r.w_final)
        w.writerow([
            repr(r.snr_db), r.sad_mode, r.status, _fmt(r.lsd_db), _fmt(r.misalignment_db),
            repr(r.gate_duty), r.updates, r.lsd_floored_bins, traj_name, filt_name, r.diagnostic, digest,
        ])
    (tmp / "results.csv").write_text(buf.getvalue(), newline="")
    trace = emit_prediction_trace(inputs["x"], inputs["raw"], inputs["post"], inputs["fs"], duration_s=cfg.trace_s)
    (tmp / "prediction_trace.csv").write_text(trace, newline="")
    synth_seed, _ = _seeds(cfg.seed)
    manifest = {
        "config": cfg.resolved(),
        "config_hash": digest,
        "seeds": {"master": cfg.seed, "synth": synth_seed if cfg.input_wav is None else None},
        "versions": {
            "snorecancel": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        },
        "backend": BACKEND,
        "signal": {"samples": int(inputs["x"].shape[0]), "fs": int(inputs["fs"])},
        "notes": {
            "snr_reference": "snore-active samples" if inputs["active"] is not None else "whole signal",
            "disturbance": "d = s * p * x + g * white gaussian noise",
            "lsd_filter_taps": "full adaptive filter length",
            "trajectory": "misalignment sampled once per second of signal",
        },
    }
    (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if out.exists():
        shutil.rmtree(out)
    os.replace(tmp, out)
    return out
