"""Audio, impulse-response, prediction-stream and config file I/O."""

import json
import struct
import sys
from pathlib import Path

import numpy as np
from scipy.io import wavfile

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "read_wav",
    "write_wav",
    "read_ir",
    "write_ir",
    "read_predictions",
    "write_predictions",
    "read_annotations",
    "write_annotations",
    "load_config",
]


def read_wav(path):
    """(samples, rate); samples float64 in [-1, 1), shape (n,) or (n, channels)."""
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype.kind == "f":
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample type {data.dtype}")
    return samples, int(rate)


def write_wav(path, samples, rate, pcm16=True):
    x = np.asarray(samples, dtype=np.float64)
    if pcm16:
        data = np.round(np.clip(x, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)
    else:
        data = x.astype(np.float32)
    wavfile.write(path, int(rate), data)


def read_ir(path):
    """Impulse response from a WAV (first channel) or raw little-endian .f32 file."""
    path = Path(path)
    if path.suffix.lower() == ".f32":
        raw = path.read_bytes()
        if len(raw) % 4:
            raise ValueError(f"{path}: size {len(raw)} is not a multiple of 4 bytes")
        taps = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    elif path.suffix.lower() == ".wav":
        taps, _ = read_wav(path)
        if taps.ndim > 1:
            taps = taps[:, 0]
    else:
        raise ValueError(f"{path}: impulse responses must be .wav or .f32")
    if taps.size == 0:
        raise ValueError(f"{path}: empty impulse response")
    if not np.all(np.isfinite(taps)):
        raise ValueError(f"{path}: non-finite taps")
    return taps


def write_ir(path, taps):
    path = Path(path)
    taps = np.asarray(taps, dtype=np.float64)
    if path.suffix.lower() == ".f32":
        taps.astype("<f4").tofile(path)
    else:
        wavfile.write(path, 44100, taps.astype(np.float32))


def read_predictions(path):
    """0/1 stream from text (one digit per line) or bit-packed binary.

    Binary files start with a little-endian u64 count followed by
    ``np.packbits(..., bitorder="little")`` bytes.
    """
    raw = Path(path).read_bytes()
    if raw[:1] in (b"0", b"1") or raw.strip() == b"":
        lines = raw.decode("ascii").split()
        bits = np.array([int(v) for v in lines], dtype=np.uint8)
        if np.any(bits > 1):
            raise ValueError(f"{path}: predictions must be 0 or 1")
        return bits
    if len(raw) < 8:
        raise ValueError(f"{path}: not a prediction file")
    (count,) = struct.unpack("<Q", raw[:8])
    body = np.frombuffer(raw[8:], dtype=np.uint8)
    if body.size != (count + 7) // 8:
        raise ValueError(f"{path}: header says {count} bits, payload has {body.size} bytes")
    return np.unpackbits(body, count=count, bitorder="little")


def write_predictions(path, bits, binary=False):
    bits = np.asarray(bits, dtype=np.uint8)
    if binary:
        Path(path).write_bytes(struct.pack("<Q", bits.size) + np.packbits(bits, bitorder="little").tobytes())
    else:
        Path(path).write_text("".join(f"{b}\n" for b in bits.tolist()))


def read_annotations(path):
    """'start_s,end_s' lines; blank lines and '#' comments are skipped."""
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"{path}:{n}: expected 'start_s,end_s'")
        out.append((float(parts[0]), float(parts[1])))
    return out


def write_annotations(path, annotations):
    Path(path).write_text("".join(f"{s!r},{e!r}\n" for s, e in annotations))


def load_config(path):
    """Dict from a .toml or .json file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if suffix == ".json":
        return json.loads(path.read_text())
    raise ValueError(f"{path}: config must be .toml or .json")
