import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hangover_reference import hangover_reference, random_streams
from snorecancel.hangover import HangoverParams, HangoverStream, gate_stream, hangover


def test_all_zero():
    assert not hangover(np.zeros(500, int), k=100, X=3).any()


def test_hand_traced_fixture():
    pred = np.zeros(20, int)
    pred[4:6] = 1
    out = hangover(pred, k=6, X=3)
    expect = np.zeros(20, int)
    expect[3:9] = 1
    np.testing.assert_array_equal(out, expect)


@pytest.mark.parametrize("pos", [0, 1, 5, 18, 19])
def test_isolated_one_passes_through(pos):
    pred = np.zeros(20, int)
    pred[pos] = 1
    np.testing.assert_array_equal(hangover(pred, k=10, X=3), pred)


def test_no_majority_window_is_identity(rng):
    for _ in range(200):
        pred = np.zeros(300, int)
        # ones at least X apart: no 3-window holds two of them
        idx = np.cumsum(rng.integers(3, 12, size=40))
        pred[idx[idx < 300]] = 1
        np.testing.assert_array_equal(hangover(pred, k=50, X=3), pred)


def test_each_onset_gives_k_ones():
    pred = np.zeros(400, int)
    pred[100:103] = 1
    out = hangover(pred, k=100, X=3)
    # the majority window is frames 99..101; its positions are backfilled
    assert out.sum() == 100 and out[99:199].all()


def test_fn_repair(rng):
    k, X = 60, 3
    for _ in range(100):
        pred = np.zeros(300, int)
        block = np.ones(k + rng.integers(0, 40), int)
        # isolated single-frame misses, never two in a row
        for pos in rng.choice(np.arange(2, block.size - 1, 3), size=8, replace=False):
            block[pos] = 0
        pred[50 : 50 + block.size] = block
        out = hangover(pred, k=k, X=X)
        first = np.flatnonzero(out)[0]
        assert out[first : first + k].all()


@pytest.mark.parametrize("L", [1, 2, 5, 7, 200])
def test_length_preserved(L, rng):
    pred = rng.integers(0, 2, size=L)
    assert hangover(pred, k=5, X=5).shape == (L,)


def test_short_stream_copied():
    np.testing.assert_array_equal(hangover([1, 1], k=5, X=3), [1, 1])


def test_matches_reference_trace():
    for pred, k, X in random_streams(2000, 500, seed=1):
        ref = hangover_reference(pred, pred.size, k, X)
        np.testing.assert_array_equal(hangover(pred, k=k, X=X), ref)


def test_reference_tail_and_edge_cases():
    # onsets right at the end, at the start, and X = 1
    cases = [
        (np.array([0, 0, 0, 0, 0, 0, 1, 1]), 6, 3),
        (np.array([1, 1, 1, 0, 0, 0, 0, 0]), 4, 3),
        (np.array([1, 1, 0, 1, 0, 0, 1]), 3, 1),
        (np.array([1, 1, 1, 1, 1]), 5, 5),
    ]
    for pred, k, X in cases:
        np.testing.assert_array_equal(hangover(pred, k=k, X=X), hangover_reference(pred, pred.size, k, X))


class TestParams:
    def test_defaults(self):
        p = HangoverParams()
        assert (p.k, p.X) == (100, 3)

    def test_even_buffer(self):
        with pytest.raises(ValueError):
            HangoverParams(X=4)

    def test_k_below_x(self):
        with pytest.raises(ValueError):
            HangoverParams(k=2, X=3)

    def test_declared_length_must_match(self):
        with pytest.raises(ValueError):
            hangover(np.zeros(10, int), HangoverParams(L=60001))

    def test_non_binary(self):
        with pytest.raises(ValueError):
            hangover([0, 2, 1])


@settings(max_examples=300, deadline=None)
@given(
    bits=st.lists(st.integers(0, 1), min_size=0, max_size=400),
    X=st.sampled_from([1, 3, 5]),
    extra=st.integers(0, 60),
)
def test_stream_equals_batch(bits, X, extra):
    k = X + extra
    s = HangoverStream(k=k, X=X)
    out = []
    for b in bits:
        out += s.push(b)
    out += s.finish()
    np.testing.assert_array_equal(np.array(out, dtype=int), hangover(np.array(bits, dtype=int), k=k, X=X))


def test_stream_lag_grows_one_frame_per_event():
    # each event ends with a discarded read, so output falls one frame behind
    pred = np.zeros(400, int)
    pred[50:53] = 1
    pred[200:203] = 1
    s = HangoverStream(k=20, X=3)
    lags = []
    for n, b in enumerate(pred, start=1):
        s.push(int(b))
        lags.append(n - s._emitted)
    assert lags[40] == 2 and lags[150] == 3 and lags[-1] == 4
    assert max(len(s.push(0)) for _ in range(50)) <= 1


class TestGateStream:
    def test_zero_order_hold(self):
        g = gate_stream([1, 0], 882)
        assert g[:441].all() and not g[441:].any()

    def test_all_ones(self):
        assert gate_stream(np.ones(10, int), 4410).all()

    def test_trailing_samples_hold_last_bit(self):
        g = gate_stream([0, 1], 882 + 300)
        assert g.size == 1182 and g[882:].all()

    def test_truncates_to_signal(self):
        assert gate_stream([1, 1, 1], 500).size == 500
