"""Synthetic epileptiform field-potential generator (the "plant").

A seeded, hazard-modulated automaton stands in for the biological testbed:

    baseline/interictal <-> preictal -> tonic -> clonic -> postictal -> baseline

A latent excitability ``x`` in [0, 1] relaxes toward ``x_drive``. It sets the
rate of interictal events, of small sub-threshold microdischarges in the
noise floor, and the hazard of entering a preictal barrage. Each stimulation
pulse lowers ``x`` and evokes a short interictal-like response. A barrage
whose excitability falls below ``x_release`` is aborted before the tonic
phase. All draws come from one SplitMix64 stream in a fixed order, so a seed
plus a pulse schedule determines the output bit for bit.

Per-step draw order (conditional draws happen only when their condition is
met): evoked-response uniform (on a pulse), excitability gaussian, hazard
uniform, interictal onset uniform + amplitude gaussian, microdischarge
onset uniform + amplitude uniform, noise gaussian.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np

from .fixed_point import Prng

ICTAL_PHENOTYPE = "interictal_plus_ictal"
INTERICTAL_PHENOTYPE = "interictal_only"
PHENOTYPES = (ICTAL_PHENOTYPE, INTERICTAL_PHENOTYPE)

BASELINE, INTERICTAL, PREICTAL, TONIC, CLONIC, POSTICTAL = range(6)
REGIME_NAMES = ("baseline", "interictal", "preictal", "tonic", "clonic", "postictal")

EV_INTERICTAL, EV_ICTAL, EV_EVOKED = range(3)
EVENT_KINDS = ("interictal", "ictal", "evoked")


class GroundTruthEvent(NamedTuple):
    kind: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class PlantConfig:
    phenotype: str = ICTAL_PHENOTYPE
    # excitability
    x0: float = 0.3
    x_drive: float = 0.95
    tau_x: float = 45.0
    sigma_x: float = 0.02
    # seizure hazard h0 * exp(k_x * x), per second
    h0: float = 2.0e-5
    k_x: float = 9.0
    x_release: float = 0.45
    # stimulation
    delta_stim: float = 0.04
    evoked_prob: float = 0.95
    evoked_amp: float = 800.0
    evoked_s: float = 0.1
    # interictal events
    ii_rate0: float = 0.04
    ii_rate_x: float = 0.2
    ii_amp: float = 900.0
    ii_amp_jitter: float = 0.12
    ii_s: float = 0.4
    ii_refractory_s: float = 1.5
    # noise-floor microdischarges (forecast signature, ictal phenotype only)
    md_rate: float = 6.0
    md_amp_lo: float = 140.0
    md_amp_hi: float = 240.0
    md_s: float = 0.06
    # preictal barrage
    barrage_s: float = 15.0
    barrage_rate: float = 0.6
    # tonic phase
    tonic_s: float = 14.0
    tonic_hz: float = 16.0
    tonic_amp: float = 1300.0
    # clonic phase
    clonic_i0: float = 0.3
    clonic_growth: float = 1.08
    clonic_imax: float = 1.0
    burst_s: float = 0.2
    burst_amp: float = 1400.0
    # postictal
    postictal_s: float = 20.0
    x_post: float = 0.0
    postictal_noise: float = 0.5
    # background noise (AR(1), counts)
    noise_sigma: float = 10.0
    noise_alpha: float = 0.9

    def __post_init__(self):
        if self.phenotype not in PHENOTYPES:
            raise ValueError(f"unknown phenotype {self.phenotype!r}")
        if self.tau_x <= 0:
            raise ValueError("tau_x must be positive")
        if self.delta_stim < 0:
            raise ValueError("delta_stim must be non-negative")
        if self.ii_s > 2.0:
            raise ValueError("interictal events must last at most 2 s")
        if self.phenotype == ICTAL_PHENOTYPE and self.tonic_s + self.clonic_duration() <= 10.0:
            raise ValueError("tonic + clonic duration must exceed 10 s")

    @property
    def has_ictal(self) -> bool:
        return self.phenotype == ICTAL_PHENOTYPE

    def clonic_intervals(self) -> list[float]:
        """Inter-burst intervals: geometric growth until the cap is passed."""
        out, iv = [], self.clonic_i0
        while True:
            out.append(iv)
            iv *= self.clonic_growth
            if iv > self.clonic_imax or len(out) > 10_000:
                return out

    def clonic_duration(self) -> float:
        ivs = self.clonic_intervals()
        return sum(ivs[:-1]) + self.burst_s

    def with_phenotype(self, phenotype: str) -> "PlantConfig":
        return replace(self, phenotype=phenotype)

    def to_dict(self) -> dict:
        return asdict(self)


def biexp_peak(rise: float, decay: float) -> float:
    tp = math.log(decay / rise) * rise * decay / (decay - rise)
    return math.exp(-tp / decay) - math.exp(-tp / rise)


# waveform time constants (s); kept fixed, amplitudes live in PlantConfig
II_RISE, II_DECAY = 0.003, 0.02
IIO_RISE, IIO_DECAY = 0.006, 0.03
MD_RISE, MD_DECAY = 0.004, 0.012
BURST_RISE, BURST_DECAY = 0.005, 0.04
EVOKED_RISE, EVOKED_DECAY = 0.001, 0.01
II_NORM = 1.0 / biexp_peak(II_RISE, II_DECAY)
IIO_NORM = 1.0 / biexp_peak(IIO_RISE, IIO_DECAY)
MD_NORM = 1.0 / biexp_peak(MD_RISE, MD_DECAY)
BURST_NORM = 1.0 / biexp_peak(BURST_RISE, BURST_DECAY)
EVOKED_NORM = 1.0 / biexp_peak(EVOKED_RISE, EVOKED_DECAY)
TWO_PI = 2.0 * math.pi


def _biexp(tau: float, rise: float, decay: float, norm: float) -> float:
    return norm * (math.exp(-tau / decay) - math.exp(-tau / rise))


def _slow_wave(tau: float) -> float:
    if 0.05 < tau < 0.35:
        return math.sin(math.pi * (tau - 0.05) / 0.3)
    return 0.0


def interictal_wave(tau: float, amp: float, ictal_type: bool) -> float:
    """Sharp transient + slow wave. The ictal-phenotype variant is positive
    with a 40 Hz polyspike tail; the isolated variant is a broader negative
    sharp wave."""
    if ictal_type:
        return (
            amp * _biexp(tau, II_RISE, II_DECAY, II_NORM)
            + 0.3 * amp * math.sin(TWO_PI * 40.0 * tau) * math.exp(-tau / 0.04)
            - 0.25 * amp * _slow_wave(tau)
        )
    return -0.8 * amp * _biexp(tau, IIO_RISE, IIO_DECAY, IIO_NORM) + 0.2 * amp * _slow_wave(tau)


def microdischarge_wave(tau: float, amp: float) -> float:
    return amp * _biexp(tau, MD_RISE, MD_DECAY, MD_NORM)


def burst_wave(tau: float, amp: float) -> float:
    return amp * _biexp(tau, BURST_RISE, BURST_DECAY, BURST_NORM) + 0.5 * amp * math.sin(
        TWO_PI * 30.0 * tau
    ) * math.exp(-tau / 0.05)


def evoked_wave(tau: float, amp: float) -> float:
    """Short interictal-like population response: sharp peak, 150 Hz ringing."""
    return amp * _biexp(tau, EVOKED_RISE, EVOKED_DECAY, EVOKED_NORM) - 0.5 * amp * math.sin(
        TWO_PI * 150.0 * tau
    ) * math.exp(-tau / 0.03)


def tonic_wave(tau: float, amp: float, hz: float) -> float:
    """Cosine phase with a 2 ms onset overshoot: the discharge opens with an
    abrupt full-amplitude shift."""
    return amp * math.cos(TWO_PI * hz * tau) * (1.0 + 0.3 * math.exp(-tau / 0.002))


@dataclass
class PlantState:
    x: float
    prng: Prng
    regime: int = BASELINE  # underlying phase; INTERICTAL is reported, never stored
    regime_t: int = 0
    step: int = 0
    noise: float = 0.0
    ii_start: int = -1
    ii_amp: float = 0.0
    ii_quiet_until: int = 0
    md_start: int = -1
    md_amp: float = 0.0
    ev_start: int = -1
    phase_end: int = 0
    ictal_start: int = -1
    burst_start: int = -1
    next_burst: int = 0
    clonic_iv: float = 0.0
    last_burst: bool = False

    @property
    def reported_regime(self) -> int:
        if self.regime == BASELINE and self.ii_start >= 0:
            return INTERICTAL
        return self.regime


def init_plant(cfg: PlantConfig, seed: int) -> PlantState:
    return PlantState(x=cfg.x0, prng=Prng(seed))


class PlantTiming(NamedTuple):
    """Durations in steps for a given sample rate."""

    dt: float
    ii_len: int
    ii_refractory: int
    md_len: int
    evoked_len: int
    barrage: int
    tonic: int
    burst_len: int
    postictal: int
    noise_b: float
    sqrt_dt: float

    @classmethod
    def build(cls, cfg: PlantConfig, f_in: float) -> "PlantTiming":
        def steps(s):
            return int(math.floor(s * f_in + 0.5))

        return cls(
            dt=1.0 / f_in,
            ii_len=steps(cfg.ii_s),
            ii_refractory=steps(cfg.ii_refractory_s),
            md_len=steps(cfg.md_s),
            evoked_len=steps(cfg.evoked_s),
            barrage=steps(cfg.barrage_s),
            tonic=steps(cfg.tonic_s),
            burst_len=steps(cfg.burst_s),
            postictal=steps(cfg.postictal_s),
            noise_b=cfg.noise_sigma * math.sqrt(1.0 - cfg.noise_alpha * cfg.noise_alpha),
            sqrt_dt=math.sqrt(1.0 / f_in),
        )


def plant_step(
    st: PlantState, cfg: PlantConfig, tm: PlantTiming, pulse: bool = False
) -> tuple[int, list[tuple[int, int, int]]]:
    """Advance one sample in place.

    Returns the 12-bit sample and the ground-truth events completed this
    step as ``(kind, start_step, end_step)`` tuples (end exclusive).
    """
    t = st.step
    rng = st.prng
    dt = tm.dt
    done: list[tuple[int, int, int]] = []

    if pulse:
        st.x = max(0.0, st.x - cfg.delta_stim)
        if rng.uniform() < cfg.evoked_prob:
            if st.ev_start >= 0:
                done.append((EV_EVOKED, st.ev_start, t))
            st.ev_start = t

    x = st.x + dt * (cfg.x_drive - st.x) / cfg.tau_x + cfg.sigma_x * tm.sqrt_dt * rng.gaussian()
    st.x = x = min(1.0, max(0.0, x))

    # phase automaton
    reg = st.regime
    if reg == BASELINE:
        if cfg.has_ictal and rng.uniform() < cfg.h0 * math.exp(cfg.k_x * x) * dt:
            reg = PREICTAL
            st.phase_end = t + tm.barrage
    elif reg == PREICTAL:
        if x < cfg.x_release:
            reg = BASELINE
        elif t >= st.phase_end and st.ii_start < 0 and t >= st.ii_quiet_until:
            reg = TONIC
            st.ictal_start = t
            st.phase_end = t + tm.tonic
    elif reg == TONIC:
        if t >= st.phase_end:
            reg = CLONIC
            st.clonic_iv = cfg.clonic_i0
            st.next_burst = t
            st.last_burst = False
    elif reg == CLONIC:
        if st.last_burst and t >= st.burst_start + tm.burst_len:
            done.append((EV_ICTAL, st.ictal_start, t))
            st.burst_start = -1
            reg = POSTICTAL
            st.phase_end = t + tm.postictal
            st.x = x = cfg.x_post
        elif not st.last_burst and t >= st.next_burst:
            st.burst_start = t
            st.next_burst = t + int(math.floor(st.clonic_iv / dt + 0.5))
            st.clonic_iv *= cfg.clonic_growth
            st.last_burst = st.clonic_iv > cfg.clonic_imax
    elif reg == POSTICTAL:
        if t >= st.phase_end:
            reg = BASELINE
            st.ii_quiet_until = max(st.ii_quiet_until, t + tm.ii_refractory)
    if reg != st.regime:
        st.regime = reg
        st.regime_t = 0
    else:
        st.regime_t += 1

    # interictal events (baseline and barrage only)
    if st.ii_start >= 0 and t - st.ii_start >= tm.ii_len:
        done.append((EV_INTERICTAL, st.ii_start, t))
        st.ii_start = -1
        st.ii_quiet_until = t + tm.ii_refractory
    if st.ii_start < 0 and (reg == BASELINE or reg == PREICTAL) and t >= st.ii_quiet_until:
        rate = cfg.barrage_rate if reg == PREICTAL else cfg.ii_rate0 + cfg.ii_rate_x * x
        if rng.uniform() < rate * dt:
            st.ii_start = t
            st.ii_amp = cfg.ii_amp * (1.0 + cfg.ii_amp_jitter * rng.gaussian())

    # microdischarges
    if st.md_start >= 0 and t - st.md_start >= tm.md_len:
        st.md_start = -1
    if (
        cfg.has_ictal
        and st.md_start < 0
        and st.ii_start < 0
        and (reg == BASELINE or reg == PREICTAL)
        and rng.uniform() < cfg.md_rate * x * x * dt
    ):
        st.md_start = t
        st.md_amp = cfg.md_amp_lo + (cfg.md_amp_hi - cfg.md_amp_lo) * rng.uniform()

    # waveform
    st.noise = cfg.noise_alpha * st.noise + tm.noise_b * rng.gaussian()
    s = st.noise * (cfg.postictal_noise if reg == POSTICTAL else 1.0)
    if st.ii_start >= 0:
        s += interictal_wave((t - st.ii_start) * dt, st.ii_amp, cfg.has_ictal)
    if st.md_start >= 0:
        s += microdischarge_wave((t - st.md_start) * dt, st.md_amp)
    if reg == TONIC:
        s += tonic_wave((t - st.ictal_start) * dt, cfg.tonic_amp, cfg.tonic_hz)
    elif reg == CLONIC and st.burst_start >= 0 and t - st.burst_start < tm.burst_len:
        s += burst_wave((t - st.burst_start) * dt, cfg.burst_amp)
    if st.ev_start >= 0:
        if t - st.ev_start >= tm.evoked_len:
            done.append((EV_EVOKED, st.ev_start, t))
            st.ev_start = -1
        else:
            s += evoked_wave((t - st.ev_start) * dt, cfg.evoked_amp)

    st.step = t + 1
    return _to_counts(s), done


def _to_counts(s: float) -> int:
    v = math.floor(s + 0.5)
    if v < -2048:
        return -2048
    if v > 2047:
        return 2047
    return int(v)


def plant_flush(st: PlantState) -> list[tuple[int, int, int]]:
    """Close events still open at the end of a run (end = current step)."""
    t = st.step
    out = []
    if st.regime == TONIC or st.regime == CLONIC:
        out.append((EV_ICTAL, st.ictal_start, t))
    if st.ii_start >= 0:
        out.append((EV_INTERICTAL, st.ii_start, t))
    if st.ev_start >= 0:
        out.append((EV_EVOKED, st.ev_start, t))
    return out


def events_to_truth(done, f_in: float) -> list[GroundTruthEvent]:
    return [GroundTruthEvent(EVENT_KINDS[k], a / f_in, b / f_in) for k, a, b in done]


def simulate(
    cfg: PlantConfig, seed: int, duration_s: float, f_in: float = 2000.0, pulse_steps=()
) -> tuple[np.ndarray, list[GroundTruthEvent], np.ndarray]:
    """Open-loop run (optionally with a fixed pulse schedule).

    Returns samples, ground-truth events and the per-step reported regime.
    Dispatches to the compiled core when it is available.
    """
    from . import _backend

    return _backend.kernels().simulate_plant(cfg, seed, duration_s, f_in, pulse_steps)
