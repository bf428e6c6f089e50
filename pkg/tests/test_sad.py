import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snorecancel import sad
from snorecancel.sad import LOG_FLOOR, binarize, crnn_forward, energy_detector, frame_count, logmel, to_mono
from snorecancel.weights import (
    LAYER_NAMES,
    CrnnWeights,
    WeightFormatError,
    load_weights,
    random_weights,
    save_weights,
    zero_weights,
)

FS = 44100


def oracle_forward(feats, w):
    """Loop-per-element CRNN forward, written without reusing any production code."""
    F = feats.shape[1]
    T = feats.shape[0]
    a = [[[feats[t, f]] for t in range(T)] for f in range(F)]
    for b, pool in zip((1, 2, 3), w.pools):
        K = w[f"conv{b}.kernel"]
        cin, cout = K.shape[2], K.shape[3]
        conv = np.zeros((F, T, cout))
        for f in range(F):
            for t in range(T):
                for c in range(cout):
                    acc = w[f"conv{b}.bias"][c]
                    for df in (-1, 0, 1):
                        for dt in (-1, 0, 1):
                            ff, tt = f + df, t + dt
                            if 0 <= ff < F and 0 <= tt < T:
                                for ci in range(cin):
                                    acc += a[ff][tt][ci] * K[df + 1, dt + 1, ci, c]
                    v = (acc - w[f"bn{b}.mean"][c]) / math.sqrt(w[f"bn{b}.var"][c] + w.bn_eps)
                    v = v * w[f"bn{b}.gamma"][c] + w[f"bn{b}.beta"][c]
                    conv[f, t, c] = v if v > 0 else w.leaky_slope * v
        F //= pool
        a = [[[max(conv[f * pool + q, t, c] for q in range(pool)) for c in range(cout)] for t in range(T)] for f in range(F)]
    seq = [list(a[0][t]) for t in range(T)]

    def hs(x):
        return min(1.0, max(0.0, 0.2 * x + 0.5))

    for g in (1, 2):
        Wz, Wr, Wh = w[f"gru{g}.W_z"], w[f"gru{g}.W_r"], w[f"gru{g}.W_h"]
        Uz, Ur, Uh = w[f"gru{g}.U_z"], w[f"gru{g}.U_r"], w[f"gru{g}.U_h"]
        bz, br, bh = w[f"gru{g}.b_z"], w[f"gru{g}.b_r"], w[f"gru{g}.b_h"]
        U = Uz.shape[0]
        h = [0.0] * U
        out = []
        for x in seq:
            z = [hs(sum(x[i] * Wz[i, u] for i in range(len(x))) + sum(h[j] * Uz[j, u] for j in range(U)) + bz[u]) for u in range(U)]
            r = [hs(sum(x[i] * Wr[i, u] for i in range(len(x))) + sum(h[j] * Ur[j, u] for j in range(U)) + br[u]) for u in range(U)]
            rh = [r[j] * h[j] for j in range(U)]
            c = [math.tanh(sum(x[i] * Wh[i, u] for i in range(len(x))) + sum(rh[j] * Uh[j, u] for j in range(U)) + bh[u]) for u in range(U)]
            h = [z[u] * h[u] + (1 - z[u]) * c[u] for u in range(U)]
            out.append(h)
        seq = out
    probs = []
    for h in seq:
        logit = sum(h[u] * w["out.W"][u, 0] for u in range(len(h))) + w["out.b"][0]
        probs.append(1.0 / (1.0 + math.exp(-logit)))
    return np.array(probs)


def tone(freq, seconds, amp=0.5):
    t = np.arange(int(seconds * FS)) / FS
    return amp * np.sin(2 * np.pi * freq * t)


class TestMono:
    def test_average(self):
        np.testing.assert_array_equal(to_mono([1.0, 0.0], [0.0, 1.0]), [0.5, 0.5])
        np.testing.assert_array_equal(to_mono([0.2, -0.4], [0.2, -0.4]), [0.2, -0.4])

    def test_cancel(self):
        np.testing.assert_array_equal(to_mono([0.3], [-0.3]), [0.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            to_mono(np.zeros(3), np.zeros(4))


class TestMel:
    def test_scale_anchor_points(self):
        assert abs(sad.hz_to_mel(1000.0) - 15.0) < 1e-12
        assert abs(sad.hz_to_mel(200.0) - 3.0) < 1e-12
        for m in (0.0, 7.5, 15.0, 30.0, 60.0):
            assert abs(sad.hz_to_mel(sad.mel_to_hz(m)) - m) < 1e-9

    def test_filterbank_shape_and_area(self):
        fb = sad.mel_filterbank(FS, 2048, 40)
        assert fb.shape == (40, 1025)
        df = FS / 2048
        areas = fb.sum(axis=1) * df
        # area normalisation: each triangle integrates to ~1 over Hz (upper filters are well sampled)
        np.testing.assert_allclose(areas[20:], 1.0, rtol=0.02)
        assert np.all(fb >= 0)

    def test_tone_lands_in_its_band(self):
        feats = logmel(tone(2000.0, 1.0))
        fb = sad.mel_filterbank(FS, 2048, 40)
        expect = int(np.argmax(fb[:, int(round(2000 * 2048 / FS))]))
        assert np.all(np.argmax(feats, axis=1) == expect)


class TestLogmel:
    def test_one_second_gives_98_frames(self):
        assert logmel(np.zeros(FS)).shape == (98, 40)

    def test_silence_is_log_floor(self):
        np.testing.assert_array_equal(logmel(np.zeros(5000)), np.full((9, 40), math.log(LOG_FLOOR)))

    def test_gain_of_ten_adds_log_hundred(self, rng):
        x = rng.normal(size=FS // 2)
        np.testing.assert_allclose(logmel(10 * x) - logmel(x), math.log(100.0), atol=1e-6)

    def test_short_input(self):
        assert logmel(np.zeros(1322)).shape == (0, 40)
        assert logmel(np.zeros(1323)).shape == (1, 40)

    def test_chunking_is_invisible(self, rng):
        x = rng.normal(size=FS)
        np.testing.assert_allclose(logmel(x, chunk=7), logmel(x), rtol=0, atol=1e-12)

    def test_direct_frame_oracle(self, rng):
        x = rng.normal(size=3000)
        n = np.arange(1323)
        window = 0.5 - 0.5 * np.cos(2 * np.pi * n / 1323)
        frame = x[441 : 441 + 1323] * window
        k = np.arange(1025)
        spec = np.exp(-2j * np.pi * np.outer(k, n) / 2048) @ frame
        expect = np.log(sad.mel_filterbank(FS, 2048) @ np.abs(spec) ** 2 + 1e-10)
        np.testing.assert_allclose(logmel(x)[1], expect, rtol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 20000))
    def test_frame_count_property(self, n):
        expect = 0 if n < 1323 else (n - 1323) // 441 + 1
        assert frame_count(n, 1323, 441) == expect
        if n < 4000:
            assert logmel(np.zeros(n)).shape[0] == expect


class TestDetectors:
    def test_binarize_strict(self):
        np.testing.assert_array_equal(binarize([0.0, 0.5, 0.5000001, 1.0, 0.49]), [0, 0, 1, 1, 0])

    def test_energy_threshold_extremes(self, rng):
        feats = rng.normal(size=(20, 40))
        assert energy_detector(feats, -np.inf).all()
        assert not energy_detector(feats, np.inf).any()
        assert energy_detector(np.zeros((0, 40)), 0.0).shape == (0,)

    def test_energy_burst_and_silence(self, rng):
        # a pure tone leaves most bands at the log floor; a broadband burst does not
        x = np.concatenate([np.zeros(FS), 0.1 * rng.normal(size=FS), np.zeros(FS)])
        bits = energy_detector(logmel(x), -6.0)
        assert not bits[:90].any()
        assert bits[105:190].all()
        assert not bits[205:].any()


@pytest.fixture(scope="module")
def small_weights():
    return random_weights(seed=3, channels=3, units=4, scale=1.0)


class TestCrnn:
    def test_zero_weights_give_half(self, rng):
        probs = crnn_forward(rng.normal(size=(50, 40)), zero_weights())
        np.testing.assert_array_equal(probs, 0.5)

    def test_output_range(self, rng):
        w = random_weights(seed=1, scale=3.0)
        probs = crnn_forward(30 * rng.normal(size=(200, 40)), w)
        assert probs.shape == (200,)
        assert np.all((probs > 0) & (probs < 1))

    def test_oracle_agreement(self, rng, small_weights):
        feats = rng.normal(size=(12, 40))
        np.testing.assert_allclose(crnn_forward(feats, small_weights), oracle_forward(feats, small_weights), atol=1e-5, rtol=0)

    def test_conv_chunks_with_halo(self, rng, small_weights):
        feats = rng.normal(size=(40, 40))
        whole = sad._conv_stack(feats, small_weights, chunk=4096)
        np.testing.assert_array_equal(sad._conv_stack(feats, small_weights, chunk=5), whole)

    def test_pooling_chain(self, rng, small_weights):
        assert small_weights.pools == (5, 4, 2)
        assert sad._conv_stack(rng.normal(size=(7, 40)), small_weights).shape == (7, 3)

    def test_deterministic(self, rng, small_weights):
        feats = rng.normal(size=(30, 40))
        np.testing.assert_array_equal(crnn_forward(feats, small_weights), crnn_forward(feats, small_weights))

    def test_causal_recurrence(self, rng, small_weights):
        # the conv stack sees one frame of future per block, so frames before t - 3 are unaffected
        feats = rng.normal(size=(30, 40))
        other = feats.copy()
        other[20:] += 5
        a, b = crnn_forward(feats, small_weights), crnn_forward(other, small_weights)
        np.testing.assert_array_equal(a[:17], b[:17])
        assert not np.array_equal(a[17:], b[17:])

    def test_empty_and_bad_shapes(self, small_weights):
        assert crnn_forward(np.zeros((0, 40)), small_weights).shape == (0,)
        with pytest.raises(ValueError):
            crnn_forward(np.zeros((5, 39)), small_weights)
        with pytest.raises(TypeError):
            crnn_forward(np.zeros((5, 40)), {})


class TestWeightFile:
    def test_round_trip(self, tmp_path, rng, small_weights):
        path = tmp_path / "w.sadw"
        save_weights(small_weights, path)
        back = load_weights(path)
        assert back.n_mels == 40 and back.mel_variant == small_weights.mel_variant
        for name in LAYER_NAMES:
            np.testing.assert_allclose(back[name], small_weights[name], rtol=1e-6, atol=1e-7)
        feats = rng.normal(size=(20, 40))
        np.testing.assert_allclose(crnn_forward(feats, back), crnn_forward(feats, small_weights), atol=1e-5)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.sadw"
        path.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(path)

    def test_truncated_names_layer(self, tmp_path, small_weights):
        path = tmp_path / "w.sadw"
        save_weights(small_weights, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(WeightFormatError, match="out.b"):
            load_weights(path)

    def test_shape_mismatch_names_layer(self, small_weights):
        t = dict(small_weights.tensors)
        t["gru2.U_h"] = np.zeros((4, 5))
        with pytest.raises(WeightFormatError, match="gru2.U_h"):
            CrnnWeights(t)

    def test_missing_layer(self, small_weights):
        t = dict(small_weights.tensors)
        del t["bn2.var"]
        with pytest.raises(WeightFormatError, match="bn2.var"):
            CrnnWeights(t)

    def test_pooling_must_reach_one(self, small_weights):
        with pytest.raises(WeightFormatError, match="not 1"):
            CrnnWeights(dict(small_weights.tensors), n_mels=64)

    def test_non_finite(self, small_weights):
        t = dict(small_weights.tensors)
        t["conv1.bias"] = np.full(3, np.nan)
        with pytest.raises(WeightFormatError, match="conv1.bias"):
            CrnnWeights(t)


def test_numpy_backend_agrees(run_python, tmp_path):
    code = (
        "import numpy as np, sys\n"
        "from snorecancel.sad import crnn_forward\n"
        "from snorecancel.weights import random_weights\n"
        "f = np.random.default_rng(7).normal(size=(300, 40))\n"
        "sys.stdout.write(repr(crnn_forward(f, random_weights(seed=2)).tolist()))\n"
    )
    a = np.array(eval(run_python(code, "numpy")))
    b = np.array(eval(run_python(code, "numba")))
    np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)
