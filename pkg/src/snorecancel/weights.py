"""CRNN weight container and its binary file format.

File layout, all little-endian::

    b"SADW"  u16 version (=1)
    u16 n_mels  f32 win_ms  f32 hop_ms
    u8 tag_len  tag (utf-8, Mel variant, e.g. "slaney-hann-periodic")
    f32 leaky_slope  f32 bn_eps
    u32 n_records
    per record: u16 name_len, name (utf-8), u32 rank, rank x u32 dims,
                prod(dims) x f32 data (C order)

Expected records (C = conv channels, U = GRU units)::

    conv{1,2,3}.kernel (3, 3, Cin, C)  conv{b}.bias (C,)
    bn{1,2,3}.gamma/beta/mean/var (C,)
    gru{1,2}.W_z/W_r/W_h (In, U)  U_z/U_r/U_h (U, U)  b_z/b_r/b_h (U,)
    out.W (U, 1)  out.b (1,)
"""

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MAGIC",
    "VERSION",
    "POOLS",
    "MEL_VARIANT",
    "WeightFormatError",
    "CrnnWeights",
    "load_weights",
    "save_weights",
    "zero_weights",
    "random_weights",
]

MAGIC = b"SADW"
VERSION = 1
POOLS = (5, 4, 2)
MEL_VARIANT = "slaney-hann-periodic"


class WeightFormatError(ValueError):
    """Malformed weight file or tensors that do not chain."""


def _layer_names():
    names = []
    for b in (1, 2, 3):
        names += [f"conv{b}.kernel", f"conv{b}.bias"]
        names += [f"bn{b}.{p}" for p in ("gamma", "beta", "mean", "var")]
    for g in (1, 2):
        names += [f"gru{g}.{p}_{q}" for p in ("W", "U", "b") for q in ("z", "r", "h")]
    return names + ["out.W", "out.b"]


LAYER_NAMES = tuple(_layer_names())


@dataclass
class CrnnWeights:
    tensors: dict
    n_mels: int = 40
    win_ms: float = 30.0
    hop_ms: float = 10.0
    mel_variant: str = MEL_VARIANT
    leaky_slope: float = 0.3
    bn_eps: float = 1e-3
    pools: tuple = field(default=POOLS)

    def __post_init__(self):
        self.tensors = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in self.tensors.items()}
        self.validate()

    def __getitem__(self, name):
        return self.tensors[name]

    def _shape(self, name, expect):
        if name not in self.tensors:
            raise WeightFormatError(f"layer {name}: missing")
        got = self.tensors[name].shape
        if len(got) != len(expect) or any(e is not None and g != e for g, e in zip(got, expect)):
            want = tuple("*" if e is None else e for e in expect)
            raise WeightFormatError(f"layer {name}: shape {got}, expected {want}")
        return got

    def validate(self):
        extra = set(self.tensors) - set(LAYER_NAMES)
        if extra:
            raise WeightFormatError(f"unknown layers: {sorted(extra)}")
        if int(np.prod(self.pools)) != self.n_mels:
            raise WeightFormatError(
                f"pools {self.pools} reduce {self.n_mels} Mel bands to "
                f"{self.n_mels / np.prod(self.pools):g}, not 1"
            )
        cin = 1
        for b in (1, 2, 3):
            cout = self._shape(f"conv{b}.kernel", (3, 3, cin, None))[3]
            self._shape(f"conv{b}.bias", (cout,))
            for p in ("gamma", "beta", "mean", "var"):
                self._shape(f"bn{b}.{p}", (cout,))
            if np.any(self.tensors[f"bn{b}.var"] + self.bn_eps <= 0):
                raise WeightFormatError(f"layer bn{b}.var: variance + eps must be positive")
            cin = cout
        n_in = cin
        for g in (1, 2):
            units = self._shape(f"gru{g}.W_z", (n_in, None))[1]
            for q in ("z", "r", "h"):
                self._shape(f"gru{g}.W_{q}", (n_in, units))
                self._shape(f"gru{g}.U_{q}", (units, units))
                self._shape(f"gru{g}.b_{q}", (units,))
            n_in = units
        self._shape("out.W", (n_in, 1))
        self._shape("out.b", (1,))
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise WeightFormatError(f"layer {name}: non-finite values")


def zero_weights(channels=32, units=32, **header):
    t = {}
    cin = 1
    for b in (1, 2, 3):
        t[f"conv{b}.kernel"] = np.zeros((3, 3, cin, channels))
        t[f"conv{b}.bias"] = np.zeros(channels)
        t[f"bn{b}.gamma"] = np.ones(channels)
        t[f"bn{b}.beta"] = np.zeros(channels)
        t[f"bn{b}.mean"] = np.zeros(channels)
        t[f"bn{b}.var"] = np.ones(channels)
        cin = channels
    n_in = channels
    for g in (1, 2):
        for q in ("z", "r", "h"):
            t[f"gru{g}.W_{q}"] = np.zeros((n_in, units))
            t[f"gru{g}.U_{q}"] = np.zeros((units, units))
            t[f"gru{g}.b_{q}"] = np.zeros(units)
        n_in = units
    t["out.W"] = np.zeros((units, 1))
    t["out.b"] = np.zeros(1)
    return CrnnWeights(t, **header)


def random_weights(seed=0, channels=32, units=32, scale=0.3, **header):
    """Random but well-conditioned weights (unit-ish activations), for tests and demos."""
    rng = np.random.default_rng(seed)
    base = zero_weights(channels, units, **header)
    t = {}
    for name, v in base.tensors.items():
        if name.endswith(".var"):
            t[name] = rng.uniform(0.5, 2.0, v.shape)
        elif name.endswith(".gamma"):
            t[name] = rng.uniform(0.5, 1.5, v.shape)
        else:
            fan_in = int(np.prod(v.shape[:-1])) if v.ndim > 1 else 1
            t[name] = rng.normal(0.0, scale / np.sqrt(fan_in), v.shape)
    return CrnnWeights(t, **header)


def save_weights(weights, path):
    tag = weights.mel_variant.encode("utf-8")
    if len(tag) > 255:
        raise WeightFormatError("mel_variant tag longer than 255 bytes")
    parts = [
        MAGIC,
        struct.pack("<HHff", VERSION, weights.n_mels, weights.win_ms, weights.hop_ms),
        struct.pack("<B", len(tag)),
        tag,
        struct.pack("<ffI", weights.leaky_slope, weights.bn_eps, len(weights.tensors)),
    ]
    for name in LAYER_NAMES:
        arr = weights.tensors[name]
        bname = name.encode("utf-8")
        parts.append(struct.pack("<H", len(bname)) + bname)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.astype("<f4").tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise WeightFormatError(f"truncated file while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_weights(path):
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4, "magic") != MAGIC:
        raise WeightFormatError(f"{path}: bad magic, not a SADW file")
    version, n_mels, win_ms, hop_ms = r.unpack("<HHff", "header")
    if version != VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")
    (tag_len,) = r.unpack("<B", "header")
    tag = r.take(tag_len, "mel variant tag").decode("utf-8")
    slope, eps, n_records = r.unpack("<ffI", "header")
    tensors = {}
    for _ in range(n_records):
        (name_len,) = r.unpack("<H", "record name")
        name = r.take(name_len, "record name").decode("utf-8")
        (rank,) = r.unpack("<I", f"layer {name}")
        dims = r.unpack(f"<{rank}I", f"layer {name} dims")
        count = int(np.prod(dims)) if rank else 1
        raw = r.take(4 * count, f"layer {name} data")
        if name in tensors:
            raise WeightFormatError(f"layer {name}: duplicated")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float64)
    if r.pos != len(r.data):
        raise WeightFormatError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return CrnnWeights(
        tensors, n_mels=n_mels, win_ms=float(win_ms), hop_ms=float(hop_ms),
        mel_variant=tag, leaky_slope=float(slope), bn_eps=float(eps),
    )
