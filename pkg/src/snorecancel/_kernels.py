"""numba-compiled inner loops.

Everything here operates on preallocated arrays and returns status codes instead
of raising, so it can run in nopython mode. The numpy counterparts live in
``_npkernels``; the public modules pick one of the two through ``_accel``.
"""

import functools
import math

import numpy as np

from ._accel import njit

# status codes returned by engine_run
OK = 0
NONFINITE_INPUT = 1
NONFINITE_STATE = 2


@njit(cache=True)
def twiddles(n):
    """exp(-2j*pi*k/n) for k < n/2."""
    tw = np.empty(max(n // 2, 1), dtype=np.complex128)
    for k in range(n // 2):
        ang = -2.0 * math.pi * k / n
        tw[k] = complex(math.cos(ang), math.sin(ang))
    return tw


@njit(cache=True)
def bitrev(n):
    rev = np.zeros(n, dtype=np.int64)
    bits = 0
    while (1 << bits) < n:
        bits += 1
    for i in range(n):
        r = 0
        v = i
        for _ in range(bits):
            r = (r << 1) | (v & 1)
            v >>= 1
        rev[i] = r
    return rev


@njit(cache=True)
def fft_planned(a, rev, tw):
    """Unscaled radix-2 DIT transform in place.

    ``tw`` holds exp(-+2j*pi*k/n) (conjugate it for the inverse direction).
    """
    n = a.shape[0]
    for i in range(n):
        j = rev[i]
        if i < j:
            tmp = a[i]
            a[i] = a[j]
            a[j] = tmp
    length = 2
    while length <= n:
        half = length >> 1
        step = n // length
        for start in range(0, n, length):
            for k in range(half):
                v = a[start + k + half] * tw[k * step]
                u = a[start + k]
                a[start + k] = u + v
                a[start + k + half] = u - v
        length <<= 1


@njit(cache=True)
def fft_inplace(a, tw, inverse):
    """Radix-2 transform of ``a`` (length a power of two); inverse applies 1/n.

    ``tw`` must come from ``twiddles(len(a))``.
    """
    n = a.shape[0]
    rev = bitrev(n)
    if inverse:
        fft_planned(a, rev, tw.conjugate())
        for i in range(n):
            a[i] = a[i] / n
    else:
        fft_planned(a, rev, tw)


@njit(cache=True)
def nlms_inplace(w, x, e, mu, alpha):
    """w += mu * conj(x) * e / (alpha + ||x||^2), in place."""
    norm = 0.0
    for i in range(x.shape[0]):
        norm += x[i].real * x[i].real + x[i].imag * x[i].imag
    g = mu * e / (alpha + norm)
    for i in range(w.shape[0]):
        w[i] = w[i] + x[i].conjugate() * g


@functools.lru_cache(maxsize=16)
def stack_plan(M, N, Lw):
    """Tables for the fullband stacking of (M/2+1, Lw) subband weights.

    Returns (src_k, dft_rows, rot, rev_half, tw_half_inv): for each fullband bin
    f < N/2 the source subband and the row of the Lw-point DFT matrix that
    evaluates its bin (f - k*N/M) mod Lw, plus tables for an N/2-point inverse
    transform of the even/odd packed Hermitian spectrum.
    """
    f = np.arange(N // 2)
    k = (2 * f * M + N) // (2 * N)
    b = (f - k * (N // M)) % Lw
    i = np.arange(Lw)
    rows = np.exp(-2j * np.pi * np.outer(b, i) / Lw)
    rot = np.exp(2j * np.pi * f / N)
    return (
        np.ascontiguousarray(k, dtype=np.int64),
        np.ascontiguousarray(rows),
        np.ascontiguousarray(rot),
        bitrev(N // 2),
        np.ascontiguousarray(twiddles(N // 2).conjugate()),
    )


@njit(cache=True, fastmath=True)
def stack_inplace(w_sub, w_full, src_k, rows, rot, rev_half, tw_half_inv, spec, z):
    """Assemble the real fullband filter from the retained subband weights.

    ``spec`` (N complex) receives the full Hermitian spectrum; ``z`` is an
    N/2 complex work buffer.
    """
    N = w_full.shape[0]
    half = N // 2
    Lw = w_sub.shape[1]
    for f in range(half):
        k = src_k[f]
        acc = 0j
        for i in range(Lw):
            acc += w_sub[k, i] * rows[f, i]
        spec[f] = acc
    spec[0] = complex(spec[0].real, 0.0)
    spec[half] = 0.0
    for f in range(1, half):
        spec[N - f] = spec[f].conjugate()
    # even samples come from F[f] + F[f+N/2], odd ones from the rotated difference
    for f in range(half):
        a = spec[f] + spec[f + half]
        b = (spec[f] - spec[f + half]) * rot[f]
        z[f] = a + 1j * b
    fft_planned(z, rev_half, tw_half_inv)
    for m in range(half):
        w_full[2 * m] = z[m].real / N
        w_full[2 * m + 1] = z[m].imag / N


@njit(cache=True, fastmath=True)
def _dot(h, buf, pos):
    acc = 0.0
    for i in range(h.shape[0]):
        acc += h[i] * buf[pos + i]
    return acc


@njit(cache=True)
def _push(buf, pos, L, v):
    pos -= 1
    if pos < 0:
        pos = L - 1
    buf[pos] = v
    buf[pos + L] = v
    return pos


@njit(cache=True)
def _analysis_frame(buf, pos, Lp, proto, M, j, rev_m, tw_m, cbuf, out):
    # subband m of frame j: (-1)^(m j) * conj(FFT_M(u))[m], u the polyphase sums
    for r in range(M):
        acc = 0.0
        for i in range(r, Lp, M):
            acc += proto[i] * buf[pos + i]
        cbuf[r] = acc
    fft_planned(cbuf, rev_m, tw_m)
    odd = j & 1
    for m in range(out.shape[0]):
        v = cbuf[m].conjugate()
        if odd and (m & 1):
            v = -v
        out[m] = v


@njit(cache=True)
def engine_run(
    x, d, gate, y_out, e_out,
    s_hat, s_true, proto, M, mu, alpha,
    w_sub, w_full, xr, last_e,
    xbuf, ybuf, xpbuf, ebuf, istate, plan,
):
    """Run the gated delayless subband FxLMS loop over one chunk.

    Ring buffers hold each history twice so that buf[pos:pos+L] is the window
    newest-first. ``istate`` = [n, pos_x, pos_y, pos_xp, pos_e, frames_updated,
    fault_index]. Returns a status code; on fault, istate[6] holds the offending
    chunk index and the state is left at that sample.
    """
    T = x.shape[0]
    N = w_full.shape[0]
    K, Lw = w_sub.shape
    D = M // 2
    Lx = xbuf.shape[0] // 2
    Ly = ybuf.shape[0] // 2
    Lp = xpbuf.shape[0] // 2
    tw_m = twiddles(M)
    rev_m = bitrev(M)
    cbuf = np.empty(M, dtype=np.complex128)
    xframe = np.empty(K, dtype=np.complex128)
    spec = np.empty(N, dtype=np.complex128)
    z = np.empty(N // 2, dtype=np.complex128)
    src_k, rows, rot, rev_half, tw_half_inv = plan

    n = istate[0]
    px = istate[1]
    py = istate[2]
    pxp = istate[3]
    pe = istate[4]
    status = OK
    for t in range(T):
        xv = x[t]
        dv = d[t]
        if not (math.isfinite(xv) and math.isfinite(dv)):
            status = NONFINITE_INPUT
            istate[6] = t
            break
        px = _push(xbuf, px, Lx, xv)
        pxp = _push(xpbuf, pxp, Lp, _dot(s_hat, xbuf, px))
        yv = _dot(w_full, xbuf, px)
        py = _push(ybuf, py, Ly, yv)
        ev = dv - _dot(s_true, ybuf, py)
        pe = _push(ebuf, pe, Lp, ev)
        y_out[t] = yv
        e_out[t] = ev
        if not math.isfinite(ev):
            status = NONFINITE_STATE
            istate[6] = t
            n += 1
            break

        if n % D == 0:
            j = n // D
            _analysis_frame(xpbuf, pxp, Lp, proto, M, j, rev_m, tw_m, cbuf, xframe)
            for k in range(K):
                for i in range(Lw - 1, 0, -1):
                    xr[k, i] = xr[k, i - 1]
                xr[k, 0] = xframe[k]
            if gate[t] and mu != 0.0:
                _analysis_frame(ebuf, pe, Lp, proto, M, j, rev_m, tw_m, cbuf, last_e)
                for k in range(K):
                    nlms_inplace(w_sub[k], xr[k], last_e[k], mu, alpha)
                stack_inplace(w_sub, w_full, src_k, rows, rot, rev_half, tw_half_inv, spec, z)
                istate[5] += 1
                bad = False
                for i in range(N):
                    if not math.isfinite(w_full[i]):
                        bad = True
                        break
                if bad:
                    status = NONFINITE_STATE
                    istate[6] = t
                    n += 1
                    break
        n += 1

    istate[0] = n
    istate[1] = px
    istate[2] = py
    istate[3] = pxp
    istate[4] = pe
    return status


@njit(cache=True)
def _hard_sigmoid(v):
    v = 0.2 * v + 0.5
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


@njit(cache=True)
def gru_scan(xz, xr, xh, Uz, Ur, Uh):
    """GRU recurrence given the input projections (bias included).

    z, r use the hard sigmoid, the candidate uses tanh with the reset gate
    applied to the state before U_h; h = z*h_prev + (1-z)*candidate.
    """
    T, U = xz.shape
    out = np.empty((T, U))
    h = np.zeros(U)
    z = np.empty(U)
    r = np.empty(U)
    rh = np.empty(U)
    for t in range(T):
        for j in range(U):
            az = xz[t, j]
            ar = xr[t, j]
            for i in range(U):
                az += h[i] * Uz[i, j]
                ar += h[i] * Ur[i, j]
            z[j] = _hard_sigmoid(az)
            r[j] = _hard_sigmoid(ar)
        for i in range(U):
            rh[i] = r[i] * h[i]
        for j in range(U):
            ah = xh[t, j]
            for i in range(U):
                ah += rh[i] * Uh[i, j]
            cand = math.tanh(ah)
            out[t, j] = z[j] * h[j] + (1.0 - z[j]) * cand
        for j in range(U):
            h[j] = out[t, j]
    return out
