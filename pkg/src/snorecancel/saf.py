"""Delayless subband adaptive filter in a feed-forward filtered-x loop.

The reference x(n) is filtered by the secondary-path model to give x'(n). Both
x'(n) and the error e(n) go through identical analysis banks; every D samples
each retained subband runs one NLMS step and the subband weights are stacked
into the fullband filter w(n), which produces the loudspeaker signal y(n)
sample by sample with no filter-bank delay in the audio path.

Adaptation is gated: with the gate closed the weights are frozen but filtering
and all delay lines keep running.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, _npkernels
from ._accel import USE_NUMBA
from .dsp import _pad_proto, design_prototype

__all__ = [
    "SafConfig",
    "AscState",
    "EngineDivergence",
    "nlms_update",
    "stack_fullband",
    "new_state",
    "asc_step",
    "set_gate",
    "run",
]


class EngineDivergence(RuntimeError):
    """A non-finite value reached the adaptive loop."""

    def __init__(self, message, sample_index):
        super().__init__(message)
        self.sample_index = sample_index


@dataclass(frozen=True)
class SafConfig:
    N: int = 512
    M: int = 64
    mu: float = 0.03
    alpha: float = 1e-6
    proto_length: int = 256

    def __post_init__(self):
        if self.M < 2 or self.M % 2:
            raise ValueError(f"M must be even and >= 2, got {self.M}")
        if self.N % self.M:
            raise ValueError(f"N={self.N} must be a multiple of M={self.M}")
        for name in ("N", "M"):
            if not (getattr(self, name) & (getattr(self, name) - 1)) == 0:
                raise ValueError(f"{name} must be a power of two")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")

    @property
    def D(self):
        return self.M // 2

    @property
    def K(self):
        """Number of retained subbands (0..M/2)."""
        return self.M // 2 + 1

    @property
    def Lw(self):
        """Subband filter length N/D."""
        return self.N // self.D

    def prototype(self):
        return design_prototype(self.proto_length, self.M)


@dataclass
class AscState:
    """Mutable engine state; one owner, one stream."""

    cfg: SafConfig
    s_hat: np.ndarray
    s_true: np.ndarray
    proto: np.ndarray
    w_sub: np.ndarray
    w_full: np.ndarray
    xr: np.ndarray
    last_e: np.ndarray
    xbuf: np.ndarray
    ybuf: np.ndarray
    xpbuf: np.ndarray
    ebuf: np.ndarray
    plan: tuple
    istate: np.ndarray = field(default_factory=lambda: np.zeros(7, dtype=np.int64))
    gate: int = 1

    @property
    def n(self):
        """Number of samples processed so far."""
        return int(self.istate[0])

    @property
    def updates(self):
        """Number of subband frames on which adaptation ran."""
        return int(self.istate[5])


def new_state(cfg=None, s_hat=(1.0,), s_true=None, proto=None):
    """Fresh engine state with all weights and histories zero.

    ``s_true`` is the secondary path used to simulate the acoustic error; it
    defaults to ``s_hat`` (perfect secondary-path model).
    """
    cfg = cfg or SafConfig()
    s_hat = np.ascontiguousarray(s_hat, dtype=np.float64)
    s_true = s_hat.copy() if s_true is None else np.ascontiguousarray(s_true, dtype=np.float64)
    if s_hat.size == 0 or s_true.size == 0:
        raise ValueError("secondary path needs at least one tap")
    proto = cfg.prototype() if proto is None else np.asarray(proto, dtype=np.float64)
    proto = _pad_proto(proto, cfg.M)
    Lx = max(cfg.N, s_hat.shape[0])
    Lp = proto.shape[0]
    return AscState(
        cfg=cfg,
        s_hat=s_hat,
        s_true=s_true,
        proto=proto,
        w_sub=np.zeros((cfg.K, cfg.Lw), dtype=np.complex128),
        w_full=np.zeros(cfg.N),
        xr=np.zeros((cfg.K, cfg.Lw), dtype=np.complex128),
        last_e=np.zeros(cfg.K, dtype=np.complex128),
        xbuf=np.zeros(2 * Lx),
        ybuf=np.zeros(2 * s_true.shape[0]),
        xpbuf=np.zeros(2 * Lp),
        ebuf=np.zeros(2 * Lp),
        plan=_kernels.stack_plan(cfg.M, cfg.N, cfg.Lw),
    )


def nlms_update(weights, x_block, e, mu, alpha):
    """One NLMS step: weights + mu * conj(x_block) * e / (alpha + ||x_block||^2).

    Same code path the engine uses, so results agree bit for bit.
    """
    w = np.array(weights, dtype=np.complex128)
    x = np.ascontiguousarray(x_block, dtype=np.complex128)
    if w.ndim != 1 or w.shape != x.shape:
        raise ValueError(f"weight/input length mismatch: {w.shape} vs {x.shape}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if USE_NUMBA:
        _kernels.nlms_inplace(w, x, complex(e), float(mu), float(alpha))
    else:
        _npkernels.nlms_inplace(w, x, complex(e), float(mu), float(alpha))
    return w


def stack_fullband(w_sub, cfg, return_residue=False):
    """Fullband N-tap filter from the (M/2+1, N/D) subband weights.

    Each subband's weights are taken to the frequency domain with an N/D-point
    DFT; fullband bin f < N/2 is copied from subband round(f*M/N) (ties go up)
    at bin (f - k*N/M) mod N/D; the upper half is the conjugate mirror with the
    N/2 bin zeroed; an N-point inverse DFT gives the taps.
    """
    w_sub = np.ascontiguousarray(w_sub, dtype=np.complex128)
    if w_sub.shape != (cfg.K, cfg.Lw):
        raise ValueError(f"expected subband weights of shape {(cfg.K, cfg.Lw)}, got {w_sub.shape}")
    w_full = np.zeros(cfg.N)
    if USE_NUMBA:
        spec = np.empty(cfg.N, dtype=np.complex128)
        _kernels.stack_inplace(
            w_sub, w_full, *_kernels.stack_plan(cfg.M, cfg.N, cfg.Lw),
            spec, np.empty(cfg.N // 2, dtype=np.complex128),
        )
        if return_residue:
            return w_full, float(np.max(np.abs(np.fft.ifft(spec).imag)))
        return w_full
    resid = _npkernels.stack_inplace(w_sub, w_full, cfg.M, cfg.N)
    if return_residue:
        return w_full, resid
    return w_full


def set_gate(state, prediction):
    """Open (1) or close (0) adaptation; filtering continues either way."""
    if prediction not in (0, 1, True, False):
        raise ValueError(f"gate must be 0 or 1, got {prediction!r}")
    state.gate = int(prediction)
    return state


def run(state, x, d, gate=None):
    """Process a block of reference/disturbance samples.

    ``gate`` is a per-sample 0/1 array; when omitted the state's current gate
    is held for the whole block. Returns (y, e) and advances ``state``.
    Raises ``EngineDivergence`` on non-finite input or state; the state then
    stops at the offending sample.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    d = np.ascontiguousarray(d, dtype=np.float64)
    if x.shape != d.shape or x.ndim != 1:
        raise ValueError(f"x and d must be 1-D and equally long, got {x.shape} and {d.shape}")
    if gate is None:
        g = np.full(x.shape[0], state.gate, dtype=np.uint8)
    else:
        g = np.ascontiguousarray(gate, dtype=np.uint8)
        if g.shape != x.shape:
            raise ValueError("gate must have one entry per sample")
    y = np.zeros_like(x)
    e = np.zeros_like(x)
    kernel = _kernels.engine_run if USE_NUMBA else _npkernels.engine_run
    cfg = state.cfg
    n0 = state.n
    status = kernel(
        x, d, g, y, e,
        state.s_hat, state.s_true, state.proto, cfg.M, float(cfg.mu), float(cfg.alpha),
        state.w_sub, state.w_full, state.xr, state.last_e,
        state.xbuf, state.ybuf, state.xpbuf, state.ebuf, state.istate, state.plan,
    )
    if status != _kernels.OK:
        idx = n0 + int(state.istate[6])
        what = "non-finite input sample" if status == _kernels.NONFINITE_INPUT else "adaptive filter diverged"
        raise EngineDivergence(f"{what} at sample {idx}", idx)
    if len(g):
        state.gate = int(g[-1])
    return y, e


def asc_step(state, x_sample, d_sample):
    """Single-sample step; returns (y, e, state)."""
    y, e = run(state, np.array([x_sample], dtype=np.float64), np.array([d_sample], dtype=np.float64))
    return float(y[0]), float(e[0]), state
