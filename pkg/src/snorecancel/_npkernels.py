"""Pure-numpy versions of the hot loops in ``_kernels``.

Same signatures and state layout, vectorised over subbands and over the D
samples between two subband frames (the fullband filter is constant there).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._kernels import NONFINITE_INPUT, NONFINITE_STATE, OK


def fir_direct(x, h):
    return np.convolve(x, h)[: x.shape[0]]


def nlms_rows(w, x, e, mu, alpha):
    """Row-wise NLMS update of a (K, L) weight matrix, in place."""
    norm = np.sum(x.real * x.real + x.imag * x.imag, axis=1)
    g = mu * e / (alpha + norm)
    w += x.conj() * g[:, None]


def nlms_inplace(w, x, e, mu, alpha):
    nlms_rows(w[None, :], x[None, :], np.asarray([e]), mu, alpha)


def stack_bins(M, N, Lw):
    """Source (subband, bin) for each of the first N/2 fullband bins."""
    f = np.arange(N // 2)
    k = (2 * f * M + N) // (2 * N)
    return k, (f - k * (N // M)) % Lw


def stack_inplace(w_sub, w_full, M, N, *_):
    Lw = w_sub.shape[1]
    W = np.fft.fft(w_sub, axis=1)
    k, b = stack_bins(M, N, Lw)
    spec = np.zeros(N, dtype=np.complex128)
    spec[: N // 2] = W[k, b]
    spec[0] = spec[0].real
    spec[N // 2 + 1 :] = np.conj(spec[1 : N // 2][::-1])
    full = np.fft.ifft(spec)
    w_full[:] = full.real
    return float(np.max(np.abs(full.imag)))


def _ring_window(buf, pos):
    L = buf.shape[0] // 2
    return buf[pos : pos + L].copy()


def _ring_store(buf, hist):
    L = buf.shape[0] // 2
    buf[:L] = hist
    buf[L:] = hist


def _frame(window_newest_first, proto, M, j, K):
    Lp = proto.shape[0]
    u = (proto * window_newest_first[:Lp]).reshape(Lp // M, M).sum(axis=0)
    out = np.conj(np.fft.fft(u))[:K]
    if j & 1:
        out[1::2] = -out[1::2]
    return out


def engine_run(
    x, d, gate, y_out, e_out,
    s_hat, s_true, proto, M, mu, alpha,
    w_sub, w_full, xr, last_e,
    xbuf, ybuf, xpbuf, ebuf, istate, plan=None,
):
    T = x.shape[0]
    N = w_full.shape[0]
    K, Lw = w_sub.shape
    D = M // 2
    Lx = xbuf.shape[0] // 2
    Ly = ybuf.shape[0] // 2
    Lp = xpbuf.shape[0] // 2
    n0 = int(istate[0])

    bad = ~(np.isfinite(x) & np.isfinite(d))
    status = OK
    if bad.any():
        T = int(np.argmax(bad))
        status = NONFINITE_INPUT
        istate[6] = T

    # oldest-first extended signals: ext[H + t] is chunk sample t
    x_ext = np.concatenate([_ring_window(xbuf, istate[1])[::-1], x[:T]])
    xp_new = np.convolve(x_ext, s_hat)[Lx : Lx + T]
    xp_ext = np.concatenate([_ring_window(xpbuf, istate[3])[::-1], xp_new])
    y_ext = np.concatenate([_ring_window(ybuf, istate[2])[::-1], np.zeros(T)])
    e_ext = np.concatenate([_ring_window(ebuf, istate[4])[::-1], np.zeros(T)])
    xwin = sliding_window_view(x_ext, N)  # row r ends at x_ext[r + N - 1]
    ywin = sliding_window_view(y_ext, Ly)
    s_rev = s_true[::-1]

    first = (-n0) % D
    frame_ts = np.arange(first, T, D)
    bounds = np.concatenate([frame_ts + 1, [T]])
    start = 0
    done = T
    for stop in bounds:
        if stop <= start:
            continue
        rows = np.arange(start, stop) + Lx - N + 1
        y = xwin[rows] @ w_full[::-1]
        y_ext[Ly + start : Ly + stop] = y
        sy = ywin[np.arange(start, stop) + 1] @ s_rev
        e = d[start:stop] - sy
        e_ext[Lp + start : Lp + stop] = e
        y_out[start:stop] = y
        e_out[start:stop] = e
        if not np.all(np.isfinite(e)):
            t_bad = start + int(np.argmax(~np.isfinite(e)))
            status = NONFINITE_STATE
            istate[6] = t_bad
            done = t_bad + 1
            break
        t = stop - 1
        n = n0 + t
        if n % D == 0:
            j = n // D
            xr[:, 1:] = xr[:, :-1].copy()
            xr[:, 0] = _frame(xp_ext[Lp + t - np.arange(Lp)], proto, M, j, K)
            if gate[t] and mu != 0.0:
                last_e[:] = _frame(e_ext[Lp + t - np.arange(Lp)], proto, M, j, K)
                nlms_rows(w_sub, xr, last_e, mu, alpha)
                stack_inplace(w_sub, w_full, M, N)
                istate[5] += 1
                if not np.all(np.isfinite(w_full)):
                    status = NONFINITE_STATE
                    istate[6] = t
                    done = t + 1
                    break
        start = stop
    if status == NONFINITE_INPUT:
        done = T

    # write histories back (newest first, position reset to 0)
    _ring_store(xbuf, x_ext[: Lx + done][::-1][:Lx])
    _ring_store(xpbuf, xp_ext[: Lp + done][::-1][:Lp])
    _ring_store(ybuf, y_ext[: Ly + done][::-1][:Ly])
    _ring_store(ebuf, e_ext[: Lp + done][::-1][:Lp])
    istate[1] = istate[2] = istate[3] = istate[4] = 0
    istate[0] = n0 + done
    return status


def _hard_sigmoid(v):
    return np.clip(0.2 * v + 0.5, 0.0, 1.0)


def gru_scan(xz, xr, xh, Uz, Ur, Uh):
    T, U = xz.shape
    out = np.empty((T, U))
    h = np.zeros(U)
    for t in range(T):
        z = _hard_sigmoid(xz[t] + h @ Uz)
        r = _hard_sigmoid(xr[t] + h @ Ur)
        cand = np.tanh(xh[t] + (r * h) @ Uh)
        h = z * h + (1.0 - z) * cand
        out[t] = h
    return out
