"""Two-channel step-forward spike encoder with ADC front end and blanking.

An amplitude comparator routes each sample to a low or a high channel. The
active channel tracks the signal with a baseline that moves by one threshold
per timestep, emitting a +1/-1 spike for each move.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

ADC_MAX_CODE = 4095
ADC_MID = 2048
COUNTS_MIN = -2048
COUNTS_MAX = 2047

LOW = 0
HIGH = 1
CHANNEL_NAMES = ("low", "high")


class SpikeEvent(NamedTuple):
    t: int
    channel: int  # LOW or HIGH
    polarity: int  # +1 or -1


@dataclass(frozen=True)
class EncoderConfig:
    theta_comp: int = 400
    theta_low: int = 16
    theta_high: int = 64
    f_in: float = 2000.0

    def __post_init__(self):
        if not 0 < self.theta_low <= self.theta_high:
            raise ValueError("need 0 < theta_low <= theta_high")
        if self.theta_comp <= 0:
            raise ValueError("theta_comp must be positive")
        if self.f_in <= 0:
            raise ValueError("f_in must be positive")

    def theta(self, channel: int) -> int:
        return self.theta_high if channel == HIGH else self.theta_low


@dataclass
class EncoderState:
    baseline_low: int = 0
    baseline_high: int = 0
    blank_until: int = 0
    active: int = LOW
    primed: bool = False
    switched: bool = False  # comparator changed channel on the last step

    def baseline(self, channel: int) -> int:
        return self.baseline_high if channel == HIGH else self.baseline_low

    def set_baseline(self, channel: int, value: int) -> None:
        if channel == HIGH:
            self.baseline_high = value
        else:
            self.baseline_low = value


def adc_quantize(sample: float) -> int:
    """Map a 0..1 V sample to signed 12-bit counts (0.5 V -> 0)."""
    v = min(max(float(sample), 0.0), 1.0)
    return int(np.floor(v * ADC_MAX_CODE + 0.5)) - ADC_MID


def adc_quantize_array(samples) -> np.ndarray:
    v = np.clip(np.asarray(samples, dtype=np.float64), 0.0, 1.0)
    return (np.floor(v * ADC_MAX_CODE + 0.5).astype(np.int64) - ADC_MID).astype(np.int16)


def blank(st: EncoderState, t_now: int, duration: int) -> EncoderState:
    """Ground the encoder input for ``duration`` steps starting at ``t_now``.

    Windows only ever grow. Baselines are frozen, not reset, while blanked.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if duration:
        st.blank_until = max(st.blank_until, t_now + duration)
    return st


def encode_step(st: EncoderState, cfg: EncoderConfig, x: int, t: int) -> Optional[SpikeEvent]:
    """Encode one sample, updating ``st`` in place.

    The first sample seeds the active baseline. On a channel switch the newly
    active baseline is re-seeded to ``x`` and no spike is emitted that step.
    """
    st.switched = False
    if t < st.blank_until:
        return None
    ch = HIGH if abs(x) > cfg.theta_comp else LOW
    if not st.primed or ch != st.active:
        st.switched = st.primed
        st.primed = True
        st.active = ch
        st.set_baseline(ch, x)
        return None
    b = st.baseline(ch)
    th = cfg.theta(ch)
    if x > b + th:
        st.set_baseline(ch, b + th)
        return SpikeEvent(t, ch, 1)
    if x < b - th:
        st.set_baseline(ch, b - th)
        return SpikeEvent(t, ch, -1)
    return None


def encode_trace(
    samples: Sequence[int], cfg: EncoderConfig, st: EncoderState | None = None, t0: int = 0
) -> list[SpikeEvent]:
    st = st if st is not None else EncoderState()
    out = []
    for i, x in enumerate(samples):
        ev = encode_step(st, cfg, int(x), t0 + i)
        if ev is not None:
            out.append(ev)
    return out


def decode_reconstruct(
    spikes: Iterable[SpikeEvent],
    cfg: EncoderConfig,
    n_steps: int,
    initial: tuple[int, int] = (0, 0),
    t0: int = 0,
) -> np.ndarray:
    """Replay baseline walks; return the active-channel baseline per step.

    The active channel is the one that carried the most recent spike (low
    before any spike). Channel-switch re-seeding is invisible in a spike
    stream, so exact reconstruction holds for single-regime signals only.
    """
    base = [int(initial[0]), int(initial[1])]
    active = LOW
    out = np.empty(n_steps, dtype=np.int64)
    by_t = {}
    for ev in spikes:
        by_t.setdefault(ev.t, []).append(ev)
    for i in range(n_steps):
        for ev in by_t.get(t0 + i, ()):
            base[ev.channel] += ev.polarity * cfg.theta(ev.channel)
            active = ev.channel
        out[i] = base[active]
    return out
