import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snorecancel.metrics import DEFAULT_BAND, LsdBand, format_db, lsd, misalignment, mix_at_snr, snr_gain

SIX_DB = 20 * math.log10(2)


@pytest.fixture
def path(rng):
    return rng.normal(size=256) * np.exp(-np.arange(256) / 40)


def test_default_band_bins():
    assert (DEFAULT_BAND.k1, DEFAULT_BAND.k2) == (10, 1857)
    lo, hi = DEFAULT_BAND.edges_hz
    assert 100 <= lo < 110 and 19990 < hi <= 20000


def test_band_beyond_nyquist():
    with pytest.raises(ValueError):
        LsdBand.from_hz(100, 30000)


class TestLsd:
    def test_identity(self, path):
        assert lsd(path, path) == 0.0

    def test_doubling(self, path):
        assert abs(lsd(path, 2 * path) - SIX_DB) < 1e-6
        assert abs(lsd(2 * path, path) - SIX_DB) < 1e-6

    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
    def test_scale_law(self, path, c):
        assert abs(lsd(path, c * path) - abs(20 * math.log10(c))) < 1e-9

    def test_sign_is_invisible(self, path):
        assert lsd(path, -path) == 0.0

    def test_direct_oracle(self, rng):
        p = rng.normal(size=64)
        w = rng.normal(size=40)
        k = np.arange(10, 1858)
        n = np.arange(64)
        P = np.abs(np.exp(-2j * np.pi * np.outer(k, n) / 4096) @ p)
        W = np.abs(np.exp(-2j * np.pi * np.outer(k, n[:40]) / 4096) @ w)
        expect = np.sqrt(np.mean((20 * np.log10(P / W)) ** 2))
        assert abs(lsd(p, w) - expect) < 1e-9

    def test_zero_response_is_floored(self, path):
        value, floored = lsd(path, np.zeros(4), return_floored=True)
        assert floored == DEFAULT_BAND.k2 - DEFAULT_BAND.k1 + 1
        assert math.isfinite(value) and value > 100

    def test_too_long(self):
        with pytest.raises(ValueError):
            lsd(np.ones(5000), np.ones(3))

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=4, max_size=64), st.floats(0.05, 20))
    def test_symmetric_and_nonnegative(self, taps, c):
        p = np.array(taps) + 0.5
        w = c * p[::-1]
        a, b = lsd(p, w), lsd(w, p)
        assert a >= 0 and abs(a - b) < 1e-9


class TestMisalignment:
    def test_zero_estimate(self, path):
        assert abs(misalignment(path, np.zeros_like(path))) < 1e-12

    def test_half(self, path):
        assert abs(misalignment(path, path / 2) + SIX_DB) < 1e-6

    def test_exact_match_sentinel(self, path):
        v = misalignment(path, path.copy())
        assert v == float("-inf")
        assert format_db(v) == "< -300 dB"
        assert format_db(-6.0206) == "-6.0206 dB"

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            misalignment(np.zeros(8), np.ones(8))

    def test_extra_taps_count(self):
        # w = [1, 0, 1] against p = [1]: error norm 1, ref norm 1 -> 0 dB
        assert misalignment([1.0], [1.0, 0.0, 1.0]) == 0.0


class TestMixing:
    def test_unit_gain_at_zero_db(self, rng):
        x = rng.normal(size=1000)
        assert abs(snr_gain(x, x.copy(), 0.0) - 1.0) < 1e-12

    @pytest.mark.parametrize("snr", [10.0, 15.0, 20.0])
    def test_post_mix_snr(self, rng, snr):
        clean = rng.normal(size=20000)
        noise = 3 * rng.normal(size=20000)
        mixed = mix_at_snr(clean, noise, snr)
        resid = mixed - clean
        got = 10 * math.log10(np.mean(clean**2) / np.mean(resid**2))
        assert abs(got - snr) < 0.01

    def test_active_region_only(self, rng):
        clean = rng.normal(size=2000)
        clean[1000:] *= 100
        noise = rng.normal(size=2000)
        active = np.zeros(2000, bool)
        active[:1000] = True
        g = snr_gain(clean, noise, 10.0, active)
        resid = g * noise[:1000]
        got = 10 * math.log10(np.mean(clean[:1000] ** 2) / np.mean(resid**2))
        assert abs(got - 10.0) < 1e-9

    def test_additive(self, rng):
        clean = rng.normal(size=500)
        noise = rng.normal(size=500)
        g = snr_gain(clean, noise, 12.0)
        np.testing.assert_allclose(mix_at_snr(clean, noise, 12.0), clean + g * noise, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("which", ["clean", "noise", "mask"])
    def test_degenerate(self, rng, which):
        clean, noise, mask = rng.normal(size=50), rng.normal(size=50), None
        if which == "clean":
            clean[:] = 0
        elif which == "noise":
            noise[:] = 0
        else:
            mask = np.zeros(50, bool)
        with pytest.raises(ValueError):
            snr_gain(clean, noise, 10.0, mask)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            snr_gain(np.ones(4), np.ones(5), 0.0)
