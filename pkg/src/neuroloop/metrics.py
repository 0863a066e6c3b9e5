"""Session endpoints and an automatic event labeler.

Pure functions: ictal burden, instantaneous stimulation frequencies and
their histogram, and a threshold/merge labeler for recorded traces.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .gate import pulse_train_stats


def _intervals(events, kind: str) -> list[tuple[float, float]]:
    out = []
    for e in events:
        if isinstance(e, dict):
            k, a, b = e.get("kind", e.get("label")), e["start_s"], e["end_s"]
        else:
            k, a, b = e[0], e[1], e[2]
        if k == kind:
            out.append((float(a), float(b)))
    return out


def percent_time_ictal(events, t0: float, t1: float) -> float:
    """100 * (ictal time inside [t0, t1]) / (t1 - t0). Overlaps are merged."""
    if not t1 > t0:
        raise ValueError("window must have t1 > t0")
    spans = sorted((max(a, t0), min(b, t1)) for a, b in _intervals(events, "ictal"))
    total, cur_a, cur_b = 0.0, None, None
    for a, b in spans:
        if b <= a:
            continue
        if cur_b is None or a > cur_b:
            if cur_b is not None:
                total += cur_b - cur_a
            cur_a, cur_b = a, b
        else:
            cur_b = max(cur_b, b)
    if cur_b is not None:
        total += cur_b - cur_a
    return 100.0 * total / (t1 - t0)


def inst_frequencies(pulse_times_s) -> np.ndarray:
    return pulse_train_stats(np.sort(np.asarray(pulse_times_s, dtype=np.float64)))


def inst_freq_histogram(pulse_times_s, bin_hz: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Left-closed bins ``[k*bin, (k+1)*bin)``; probabilities sum to one.

    Returns empty arrays when fewer than two pulses are given.
    """
    if bin_hz <= 0:
        raise ValueError("bin_hz must be positive")
    t = np.sort(np.asarray(pulse_times_s, dtype=np.float64))
    if (np.diff(t) <= 0).any():
        raise ValueError("pulse times must be distinct")
    f = pulse_train_stats(t)
    if f.size == 0:
        return np.empty(0), np.empty(0)
    k = np.floor(f / bin_hz).astype(np.int64)
    counts = np.bincount(k)
    edges = np.arange(counts.size + 1) * bin_hz
    return edges, counts / f.size


def freq_summary(freqs) -> dict:
    f = np.asarray(freqs, dtype=np.float64)
    if f.size == 0:
        return {"pct_le_20Hz": math.nan, "pct_le_10Hz": math.nan, "pct_ge_100Hz": math.nan, "min_Hz": math.nan, "max_Hz": math.nan}
    return {
        "pct_le_20Hz": 100.0 * float(np.mean(f <= 20.0)),
        "pct_le_10Hz": 100.0 * float(np.mean(f <= 10.0)),
        "pct_ge_100Hz": 100.0 * float(np.mean(f >= 100.0)),
        "min_Hz": float(f.min()),
        "max_Hz": float(f.max()),
    }


@dataclass
class MetricsReport:
    pct_time_ictal: float
    pulse_count: int
    duration_s: float
    bin_hz: float
    hist_edges_hz: list = field(default_factory=list)
    hist_prob: list = field(default_factory=list)
    freq_summary: dict = field(default_factory=dict)

    @classmethod
    def build(cls, truth, pulse_times_s, duration_s: float, bin_hz: float = 5.0) -> "MetricsReport":
        edges, prob = inst_freq_histogram(pulse_times_s, bin_hz)
        return cls(
            pct_time_ictal=percent_time_ictal(truth, 0.0, duration_s),
            pulse_count=len(pulse_times_s),
            duration_s=duration_s,
            bin_hz=bin_hz,
            hist_edges_hz=edges.tolist(),
            hist_prob=prob.tolist(),
            freq_summary=freq_summary(inst_frequencies(pulse_times_s)),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        # NaN is not JSON; absent statistics become null
        d["freq_summary"] = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d["freq_summary"].items()}
        return d


# --- event labeler ----------------------------------------------------------


class LabeledEvent(NamedTuple):
    kind: str  # "interictal" or "ictal"
    start_s: float
    end_s: float
    flagged: bool  # duration between the interictal and ictal bounds


@dataclass(frozen=True)
class LabelParams:
    amp_threshold: float = 400.0
    merge_gap_ms: float = 1000.0
    ictal_min_s: float = 10.0
    interictal_max_s: float = 2.0

    def __post_init__(self):
        if min(self.amp_threshold, self.merge_gap_ms, self.ictal_min_s, self.interictal_max_s) <= 0:
            raise ValueError("label parameters must be positive")


def label_events(trace, f_in: float, params: LabelParams = LabelParams()) -> list[LabeledEvent]:
    """Threshold |x|, merge crossings closer than the gap, classify by length.

    Events of at least ``ictal_min_s`` are ictal. Anything shorter is
    interictal; those longer than ``interictal_max_s`` are flagged.
    """
    x = np.abs(np.asarray(trace, dtype=np.int64))
    idx = np.flatnonzero(x > params.amp_threshold)
    if idx.size == 0:
        return []
    gap = params.merge_gap_ms * f_in / 1000.0
    breaks = np.flatnonzero(np.diff(idx) > gap)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]]) + 1
    out = []
    for a, b in zip(starts.tolist(), ends.tolist()):
        dur = (b - a) / f_in
        if dur >= params.ictal_min_s:
            out.append(LabeledEvent("ictal", a / f_in, b / f_in, False))
        else:
            out.append(LabeledEvent("interictal", a / f_in, b / f_in, dur > params.interictal_max_s))
    return out


def interval_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union if union > 0 else 0.0


def match_iou(truth: Iterable, detected: Iterable, kind: str = "ictal") -> list[float]:
    """Best IoU of each ground-truth interval of ``kind`` against detections."""
    det = _intervals(detected, kind)
    return [max((interval_iou(t, d) for d in det), default=0.0) for t in _intervals(truth, kind)]
