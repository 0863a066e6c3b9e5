import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neuroloop.encoder import (
    HIGH,
    LOW,
    EncoderConfig,
    EncoderState,
    adc_quantize,
    adc_quantize_array,
    blank,
    decode_reconstruct,
    encode_step,
    encode_trace,
)

CFG = EncoderConfig()


def test_adc_endpoints():
    assert adc_quantize(0.5) == 0
    assert adc_quantize(0.0) == -2048
    assert adc_quantize(1.0) == 2047
    assert adc_quantize(-3.0) == -2048 and adc_quantize(7.0) == 2047
    v = np.linspace(-0.1, 1.1, 101)
    assert adc_quantize_array(v).tolist() == [adc_quantize(x) for x in v]


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(theta_low=80, theta_high=64)
    with pytest.raises(ValueError):
        EncoderConfig(theta_comp=0)


def test_constant_signal_is_silent():
    assert encode_trace([100] * 50, CFG) == []


def test_step_up_emits_one_spike_per_threshold():
    x = [0] + [5 * CFG.theta_low + 1] * 10
    ev = encode_trace(x, CFG)
    assert [(e.t, e.channel, e.polarity) for e in ev] == [(t, LOW, 1) for t in range(1, 6)]


def test_spike_needs_strict_excess():
    # exactly theta away is not enough
    assert encode_trace([0, CFG.theta_low, CFG.theta_low + 1], CFG)[0].t == 2


def test_channel_switch_reseeds_without_spike():
    st_ = EncoderState()
    assert encode_step(st_, CFG, 0, 0) is None
    assert encode_step(st_, CFG, 1000, 1) is None
    assert st_.active == HIGH and st_.baseline_high == 1000 and st_.switched
    ev = encode_step(st_, CFG, 1000 + CFG.theta_high + 1, 2)
    assert ev is not None and ev.channel == HIGH and ev.polarity == 1
    assert not st_.switched


def test_blanking_freezes_and_silences():
    st_ = EncoderState()
    encode_step(st_, CFG, 0, 0)
    blank(st_, 1, 4)
    for t in range(1, 5):
        assert encode_step(st_, CFG, 1000 if t % 2 else -300, t) is None
    assert st_.baseline_low == 0 and st_.active == LOW
    assert encode_step(st_, CFG, 100, 5) is not None
    with pytest.raises(ValueError):
        blank(st_, 0, -1)


def test_blank_windows_only_grow():
    st_ = EncoderState()
    blank(st_, 10, 5)
    blank(st_, 11, 1)
    assert st_.blank_until == 15


def slew_limited(draw, lo, hi, theta, n):
    steps = draw(st.lists(st.integers(-theta, theta), min_size=n, max_size=n))
    x = [draw(st.integers(lo, hi))]
    for d in steps:
        x.append(min(hi, max(lo, x[-1] + d)))
    return x


@st.composite
def single_regime(draw):
    if draw(st.booleans()):
        return LOW, slew_limited(draw, -CFG.theta_comp, CFG.theta_comp, CFG.theta_low, 200)
    sign = draw(st.sampled_from([1, -1]))
    x = slew_limited(draw, CFG.theta_comp + 1, 2047, CFG.theta_high, 200)
    return HIGH, [sign * v for v in x]


@given(single_regime())
def test_reconstruction_within_threshold(case):
    ch, x = case
    ev = encode_trace(x, CFG)
    assert all(e.channel == ch for e in ev)
    rec = decode_reconstruct(ev, CFG, len(x), initial=(x[0], x[0]))
    assert np.all(np.abs(np.asarray(x) - rec) <= CFG.theta(ch))


@given(st.lists(st.integers(-2048, 2047), min_size=1, max_size=300))
def test_at_most_one_spike_per_step(x):
    ev = encode_trace(x, CFG)
    ts = [e.t for e in ev]
    assert ts == sorted(set(ts))
    assert all(e.polarity in (1, -1) for e in ev)
