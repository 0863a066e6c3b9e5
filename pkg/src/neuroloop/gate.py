"""Decision gate: readout forecasts -> single stimulation pulses.

A sliding window over the encoder output classifies the signal into three
regimes. High-channel activity at or above ``r_tonic`` enters the veto;
the veto holds while the rate stays at or above ``r_release`` and for
``hold_ms`` afterwards. A pulse needs a spike of readout neuron 0, no
veto, and at least ``t_min_ms`` since the previous pulse.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

NOISE_FLOOR = 0
ACTIVE = 1
TONIC_VETO = 2
REGIME_NAMES = ("noise_floor", "active", "tonic_veto")
NEVER = -(1 << 40)


@dataclass(frozen=True)
class GateConfig:
    window_ms: float = 200.0
    r_tonic: float = 5.0
    r_release: float = 5.0
    hold_ms: float = 50.0
    r_noise: float = 100.0
    t_min_ms: float = 1.4

    def __post_init__(self):
        if self.r_release > self.r_tonic:
            raise ValueError("r_release must not exceed r_tonic")
        if self.t_min_ms <= 0:
            raise ValueError("t_min_ms must be positive")
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")
        if self.hold_ms < 0:
            raise ValueError("hold_ms must be non-negative")


class StimPulse(NamedTuple):
    t: int
    phase_us: int = 100
    positive_first: bool = True
    amplitude_code: int = 150


@dataclass
class GateTiming:
    """Config converted to timesteps and per-window event counts."""

    window: int
    hold: int
    tonic_count: float
    release_count: float
    noise_count: float
    t_min_s: float
    f_in: float

    @classmethod
    def from_config(cls, cfg: GateConfig, f_in: float) -> "GateTiming":
        window_s = cfg.window_ms / 1000.0
        return cls(
            window=max(1, int(round(cfg.window_ms * f_in / 1000.0))),
            hold=int(round(cfg.hold_ms * f_in / 1000.0)),
            tonic_count=cfg.r_tonic * window_s,
            release_count=cfg.r_release * window_s,
            noise_count=cfg.r_noise * window_s,
            t_min_s=cfg.t_min_ms / 1000.0,
            f_in=f_in,
        )


@dataclass
class GateState:
    regime: int = NOISE_FLOOR
    veto_until: int = 0
    last_pulse_t: int = NEVER
    count_low: int = 0
    count_high: int = 0
    history: deque = field(default_factory=deque)  # (t, channel) of in-window events


def gate_step(
    st: GateState,
    timing: GateTiming,
    readout_spikes,
    encoder_event,
    t: int,
    amplitude_code: int = 150,
) -> Optional[StimPulse]:
    """Advance the gate by one timestep, updating ``st`` in place."""
    hist = st.history
    while hist and hist[0][0] <= t - timing.window:
        _, ch = hist.popleft()
        if ch:
            st.count_high -= 1
        else:
            st.count_low -= 1
    if encoder_event is not None:
        hist.append((t, encoder_event.channel))
        if encoder_event.channel:
            st.count_high += 1
        else:
            st.count_low += 1

    high = st.count_high
    if high >= timing.tonic_count or (st.regime == TONIC_VETO and high >= timing.release_count):
        st.regime = TONIC_VETO
        st.veto_until = max(st.veto_until, t + timing.hold)
    elif st.regime == TONIC_VETO and t < st.veto_until:
        pass
    elif st.count_low + high < timing.noise_count:
        st.regime = NOISE_FLOOR
    else:
        st.regime = ACTIVE

    if not readout_spikes[0] or st.regime == TONIC_VETO:
        return None
    if (t - st.last_pulse_t) / timing.f_in < timing.t_min_s:
        return None
    st.last_pulse_t = t
    return StimPulse(t, amplitude_code=amplitude_code)


def pulse_train_stats(pulse_times_s) -> np.ndarray:
    """Instantaneous frequencies (Hz): reciprocal of consecutive intervals."""
    ts = np.asarray(pulse_times_s, dtype=np.float64)
    if ts.size < 2:
        return np.empty(0)
    return 1.0 / np.diff(ts)
