import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neuroloop.fixed_point import Prng
from neuroloop.readout import (
    NO_SEIZURE,
    SEIZURE,
    LutParams,
    ReadoutParams,
    ReadoutState,
    build_lut,
    classify_segment,
    init_readout_weights,
    label_index,
    lut_from_params,
    readout_step,
    rstdp_update,
)

from oracles import ScalarReadout, lut_value

LUT = build_lut()


def test_lut_matches_closed_form():
    p = LUT.params
    for i in range(64):
        assert abs(LUT.ltp[i] - lut_value(p.a_plus, p.tau_plus, i)) <= 0.5
        assert abs(LUT.ltd[i] - lut_value(p.a_minus, p.tau_minus, i)) <= 0.5
    assert LUT.ltp[0] == 24 and LUT.ltd[0] == -18
    assert LUT.ltp[63] == 0 and LUT.ltd[63] == 0


def test_lut_clamps_to_bytes():
    big = build_lut(a_plus=500.0, a_minus=-500.0)
    assert big.ltp.max() == 127 and big.ltd.min() == -128
    with pytest.raises(ValueError):
        build_lut(tau_plus=0.0)
    assert np.array_equal(lut_from_params(LutParams()).ltp, LUT.ltp)


def test_init_weights_seeded_and_bounded():
    a = init_readout_weights(Prng(3), 64)
    b = init_readout_weights(Prng(3), 64)
    assert np.array_equal(a, b) and a.shape == (64, 2)
    assert a.min() >= 0 and a.max() <= 127
    assert abs(a.mean() - 64) < 4


def test_readout_step_by_hand():
    w = np.array([[1000, 10], [1100, 10]], dtype=np.int16)
    stt = ReadoutState.with_weights(w)
    ro = ReadoutParams(lam=128, theta=2048)
    fired = readout_step(stt, np.array([True, True]), ro, 0)
    assert fired.tolist() == [True, False]
    assert stt.v.tolist() == [0, 20]
    readout_step(stt, np.array([False, False]), ro, 1)
    assert stt.v.tolist() == [0, 10]
    assert stt.last_post.tolist()[0] == 0 and stt.last_pre.tolist() == [0, 0]


def test_membrane_saturates_at_16_bits():
    w = np.full((64, 2), -2048, dtype=np.int16)
    stt = ReadoutState.with_weights(w)
    for t in range(3):
        readout_step(stt, np.ones(64, bool), ReadoutParams(lam=255), t)
    assert stt.v.tolist() == [-32768, -32768]


def test_stdp_pairs_by_hand():
    w = np.zeros((2, 2), dtype=np.int16)
    stt = ReadoutState.with_weights(w)
    stt.last_pre[:] = [5, 6]
    stt.last_post[:] = [-(1 << 40), -(1 << 40)]
    # neuron 0 fires at t=8 under the seizure label: pre->post LTP on column 0
    stt.last_post[0] = 8
    rstdp_update(stt, LUT, SEIZURE, np.array([False, False]), np.array([True, False]), 8)
    assert stt.w[:, 0].tolist() == [LUT.ltp[3], LUT.ltp[2]]
    assert stt.w[:, 1].tolist() == [0, 0]
    # tap 1 fires at t=10, after the t=8 post spike: LTD on column 0
    stt.last_pre[1] = 10
    rstdp_update(stt, LUT, SEIZURE, np.array([False, True]), np.array([False, False]), 10)
    assert stt.w[1, 0] == LUT.ltp[2] + LUT.ltd[2]


def test_anti_stdp_on_mismatched_neuron():
    stt = ReadoutState.with_weights(np.zeros((1, 2), dtype=np.int16))
    stt.last_pre[0] = 0
    stt.last_post[1] = 4
    rstdp_update(stt, LUT, SEIZURE, np.array([False]), np.array([False, True]), 4)
    assert stt.w[0, 1] == -LUT.ltp[4]


def test_simultaneous_pairs_are_skipped():
    stt = ReadoutState.with_weights(np.full((1, 2), 100, dtype=np.int16))
    fired = readout_step(stt, np.array([True]), ReadoutParams(theta=50), 3)
    assert fired.all()
    rstdp_update(stt, LUT, 0, np.array([True]), fired, 3)
    assert stt.w.tolist() == [[100, 100]]


@given(st.integers(0, 2**32), st.sampled_from([0, 1]))
def test_rstdp_matches_reference_and_stays_in_12_bits(seed, label):
    rng = np.random.default_rng(seed)
    w0 = rng.integers(-2048, 2048, size=(8, 2)).astype(np.int16)
    stt = ReadoutState.with_weights(w0)
    ro = ReadoutParams(theta=300)
    ref = ScalarReadout(w0.tolist(), ro.lam, ro.theta, ro.v_reset, LUT.ltp, LUT.ltd)
    for t in range(80):
        taps = rng.random(8) < 0.3
        post = readout_step(stt, taps, ro, t)
        rstdp_update(stt, LUT, label, taps, post, t)
        assert np.flatnonzero(post).tolist() == ref.step(np.flatnonzero(taps).tolist(), t, label)
        assert stt.w.tolist() == ref.w and stt.v.tolist() == ref.v
    assert stt.w.min() >= -2048 and stt.w.max() <= 2047


def test_classify_segment():
    assert classify_segment((3, 1)) == SEIZURE
    assert classify_segment((1, 3)) == NO_SEIZURE
    assert classify_segment((2, 2)) == NO_SEIZURE
    assert classify_segment((0, 0)) == NO_SEIZURE
    with pytest.raises(ValueError):
        classify_segment((-1, 0))
    with pytest.raises(ValueError):
        label_index("maybe")
