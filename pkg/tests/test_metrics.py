import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neuroloop.metrics import (
    LabelParams,
    MetricsReport,
    freq_summary,
    inst_freq_histogram,
    interval_iou,
    label_events,
    match_iou,
    percent_time_ictal,
)
from neuroloop.plant import PlantConfig, simulate


def test_percent_time_ictal_examples():
    assert percent_time_ictal([], 0.0, 1200.0) == 0.0
    assert percent_time_ictal([("ictal", 100.0, 160.0)], 0.0, 1200.0) == pytest.approx(5.0)
    assert percent_time_ictal([("ictal", -5.0, 50.0)], 0.0, 10.0) == pytest.approx(100.0)
    assert percent_time_ictal([("interictal", 0.0, 10.0)], 0.0, 10.0) == 0.0
    # overlapping events are not double counted
    assert percent_time_ictal([("ictal", 0.0, 6.0), ("ictal", 4.0, 8.0)], 0.0, 10.0) == pytest.approx(80.0)
    assert percent_time_ictal([{"kind": "ictal", "start_s": 0.0, "end_s": 1.0}], 0.0, 2.0) == pytest.approx(50.0)
    with pytest.raises(ValueError):
        percent_time_ictal([], 1.0, 1.0)


intervals = st.lists(st.tuples(st.floats(0, 100), st.floats(0, 30)).map(lambda p: ("ictal", p[0], p[0] + p[1])), max_size=8)


@given(intervals, st.floats(1, 99))
def test_percent_time_ictal_additive(events, cut):
    whole = percent_time_ictal(events, 0.0, 100.0) * 100.0
    left = percent_time_ictal(events, 0.0, cut) * cut
    right = percent_time_ictal(events, cut, 100.0) * (100.0 - cut)
    assert whole == pytest.approx(left + right, abs=1e-6)
    assert 0.0 <= whole / 100.0 <= 100.0


def test_histogram_examples():
    t = np.cumsum([0.0, 1 / 4, 1 / 12, 1 / 103])
    edges, prob = inst_freq_histogram(t, 5.0)
    mass = {float(edges[k]): p for k, p in enumerate(prob) if p}
    assert mass.keys() == {0.0, 10.0, 100.0}
    assert all(p == pytest.approx(1 / 3) for p in mass.values())
    edges, prob = inst_freq_histogram([0.0, 0.05], 5.0)  # exactly 20 Hz
    assert edges[np.flatnonzero(prob)[0]] == 20.0
    e, p = inst_freq_histogram([1.0], 5.0)
    assert e.size == 0 and p.size == 0
    with pytest.raises(ValueError):
        inst_freq_histogram([1.0, 1.0], 5.0)
    with pytest.raises(ValueError):
        inst_freq_histogram([0, 1], 0.0)


@given(st.lists(st.integers(0, 2_400_000), min_size=2, max_size=50, unique=True), st.randoms())
def test_histogram_normalized_and_order_free(steps, rnd):
    times = [s / 2000.0 for s in steps]
    e1, p1 = inst_freq_histogram(times, 5.0)
    shuffled = list(times)
    rnd.shuffle(shuffled)
    e2, p2 = inst_freq_histogram(shuffled, 5.0)
    assert p1.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.array_equal(e1, e2) and np.array_equal(p1, p2)


def test_freq_summary():
    s = freq_summary([5.0, 10.0, 20.0, 50.0, 150.0])
    assert s["pct_le_20Hz"] == 60.0 and s["pct_le_10Hz"] == 40.0 and s["pct_ge_100Hz"] == 20.0
    assert s["min_Hz"] == 5.0 and s["max_Hz"] == 150.0
    assert math.isnan(freq_summary([])["pct_le_20Hz"])


def test_report_serializes_without_nan():
    rep = MetricsReport.build([], [1.0], 10.0)
    d = rep.to_dict()
    assert d["pulse_count"] == 1 and d["freq_summary"]["min_Hz"] is None


def test_labeler_examples():
    assert label_events(np.zeros(1000), 2000.0) == []
    x = np.zeros(20000, dtype=np.int16)
    x[2000:5000:10] = 800  # 1.5 s transient
    (ev,) = label_events(x, 2000.0)
    assert ev.kind == "interictal" and not ev.flagged
    x[:] = 0
    x[2000:12000:10] = 800  # 5 s: intermediate band
    (ev,) = label_events(x, 2000.0)
    assert ev.kind == "interictal" and ev.flagged
    with pytest.raises(ValueError):
        LabelParams(amp_threshold=0)


def test_labeler_recovers_plant_seizures():
    samples, truth, _ = simulate(PlantConfig(), 77, 1200.0)
    # a seizure cut off by the end of the recording is too short to be ictal
    complete = [e for e in truth if e.end_s < 1200.0]
    ious = match_iou(complete, label_events(samples, 2000.0))
    assert ious and min(ious) >= 0.8


def test_interval_iou():
    assert interval_iou((0, 10), (5, 15)) == pytest.approx(5 / 15)
    assert interval_iou((0, 1), (2, 3)) == 0.0
