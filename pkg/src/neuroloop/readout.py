"""Two-neuron LIF readout trained by LUT-sampled reward-modulated STDP.

Neuron 0 is the seizure-risk ("forecast") neuron, neuron 1 the
no-seizure neuron. During training the neuron assigned to the current label
gets ordinary STDP and the other one gets the sign-flipped (anti-STDP) curve.
Pairing is nearest-neighbour: only the latest pre and post spike times are
kept, which is all a 64-entry table can address anyway.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fixed_point import I12, I16, Prng

SEIZURE = "seizure"
NO_SEIZURE = "no_seizure"
LABELS = (SEIZURE, NO_SEIZURE)
LUT_SIZE = 64
NEVER = -(1 << 40)


def label_index(label: str) -> int:
    try:
        return LABELS.index(label)
    except ValueError:
        raise ValueError(f"unknown label {label!r}; expected one of {LABELS}") from None


@dataclass(frozen=True)
class LutParams:
    a_plus: float = 24.0
    a_minus: float = -18.0
    tau_plus: float = 8.0
    tau_minus: float = 8.0


@dataclass(frozen=True)
class ReadoutParams:
    lam: int = 243
    theta: int = 2048
    v_reset: int = 0
    init_mu: float = 64.0
    init_sigma: float = 12.0

    def __post_init__(self):
        if not 0 <= self.lam <= 255:
            raise ValueError("lam must be an unsigned byte")
        if self.theta <= self.v_reset:
            raise ValueError("theta must exceed v_reset")


@dataclass
class StdpLut:
    ltp: np.ndarray  # int8[64]
    ltd: np.ndarray  # int8[64]
    params: LutParams

    def tables(self) -> bytes:
        return self.ltp.astype(np.int8).tobytes() + self.ltd.astype(np.int8).tobytes()


def build_lut(a_plus=24.0, a_minus=-18.0, tau_plus=8.0, tau_minus=8.0) -> StdpLut:
    """Sample both exponential learning curves at integer lags 0..63."""
    if tau_plus <= 0 or tau_minus <= 0:
        raise ValueError("time constants must be positive")
    i = np.arange(LUT_SIZE, dtype=np.float64)
    ltp = np.floor(a_plus * np.exp(-i / tau_plus) + 0.5)
    ltd = np.floor(a_minus * np.exp(-i / tau_minus) + 0.5)
    ltp = np.clip(ltp, -128, 127).astype(np.int8)
    ltd = np.clip(ltd, -128, 127).astype(np.int8)
    return StdpLut(ltp, ltd, LutParams(a_plus, a_minus, tau_plus, tau_minus))


def lut_from_params(p: LutParams) -> StdpLut:
    return build_lut(p.a_plus, p.a_minus, p.tau_plus, p.tau_minus)


@dataclass
class ReadoutState:
    v: np.ndarray  # int32[2], holds 16-bit values
    w: np.ndarray  # int16[n_taps, 2], 12-bit payload
    last_pre: np.ndarray  # int64[n_taps]
    last_post: np.ndarray  # int64[2]

    @classmethod
    def with_weights(cls, w: np.ndarray) -> "ReadoutState":
        n_taps = w.shape[0]
        return cls(
            np.zeros(2, dtype=np.int32),
            np.asarray(w, dtype=np.int16).copy(),
            np.full(n_taps, NEVER, dtype=np.int64),
            np.full(2, NEVER, dtype=np.int64),
        )

    def reset_dynamics(self) -> None:
        """Back to rest; weights are kept."""
        self.v[:] = 0
        self.last_pre[:] = NEVER
        self.last_post[:] = NEVER


def init_readout_weights(rng: Prng, n_taps: int, params: ReadoutParams = ReadoutParams()) -> np.ndarray:
    """Gaussian magnitudes, rounded and clamped to [0, 127]; tap-major draw order."""
    w = np.empty((n_taps, 2), dtype=np.int16)
    for j in range(n_taps):
        for k in range(2):
            mag = int(np.floor(rng.gaussian(params.init_mu, params.init_sigma) + 0.5))
            w[j, k] = min(max(mag, 0), 127)
    return w


def readout_step(st: ReadoutState, tap_spikes: np.ndarray, params: ReadoutParams, t: int) -> np.ndarray:
    """Feed-forward LIF update with 16-bit saturating membranes.

    Records spike times in ``last_pre``/``last_post`` for the plasticity rule.
    """
    tap_spikes = np.asarray(tap_spikes, dtype=bool)
    drive = st.w[tap_spikes].sum(axis=0, dtype=np.int32)
    v = (st.v.astype(np.int32) * params.lam >> 8) + drive
    np.clip(v, I16.min, I16.max, out=v)
    fired = v >= params.theta
    v[fired] = params.v_reset
    st.v = v.astype(np.int32)
    st.last_pre[tap_spikes] = t
    st.last_post[fired] = t
    return fired


def rstdp_update(
    st: ReadoutState,
    lut: StdpLut,
    label: str | int,
    tap_spikes: np.ndarray,
    post_spikes: np.ndarray,
    t: int,
) -> None:
    """Apply the label-modulated weight change for this timestep in place.

    Must run after :func:`readout_step` for the same ``t`` so that
    simultaneous pre/post pairs see a lag of 0 and are skipped.
    """
    k_match = label if isinstance(label, (int, np.integer)) else label_index(label)
    ltp = lut.ltp.astype(np.int32)
    ltd = lut.ltd.astype(np.int32)
    w = st.w.astype(np.int32)
    for k in np.flatnonzero(post_spikes):
        m = 1 if k == k_match else -1
        lag = t - st.last_pre
        ok = (lag > 0) & (lag < LUT_SIZE)
        w[ok, k] += m * ltp[lag[ok]]
    for j in np.flatnonzero(tap_spikes):
        for k in range(2):
            lag = t - int(st.last_post[k])
            if 0 < lag < LUT_SIZE:
                m = 1 if k == k_match else -1
                w[j, k] += m * ltd[lag]
    np.clip(w, I12.min, I12.max, out=w)
    st.w = w.astype(np.int16)


def classify_segment(counts) -> str:
    """Argmax over readout spike counts; ties go to no_seizure."""
    c0, c1 = int(counts[0]), int(counts[1])
    if c0 < 0 or c1 < 0:
        raise ValueError("spike counts must be non-negative")
    return SEIZURE if c0 > c1 else NO_SEIZURE
