# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Same signatures and bit-identical results as
``neuroloop._pykernels``; floating-point expressions are written in the
same order as their Python twins so libm returns the same bits.
"""

from libc.math cimport exp, sin, cos, log, sqrt, floor
from libc.stdint cimport uint64_t, int64_t, int32_t, int16_t, int8_t, uint16_t

import numpy as np

from . import plant as _plant
from ._raw import Raster, RawRun
from .gate import GateTiming
from .plant import PlantTiming

BACKEND = "compiled"

cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = _plant.TWO_PI
cdef double PI = np.pi
cdef double II_RISE = _plant.II_RISE, II_DECAY = _plant.II_DECAY, II_NORM = _plant.II_NORM
cdef double IIO_RISE = _plant.IIO_RISE, IIO_DECAY = _plant.IIO_DECAY, IIO_NORM = _plant.IIO_NORM
cdef double MD_RISE = _plant.MD_RISE, MD_DECAY = _plant.MD_DECAY, MD_NORM = _plant.MD_NORM
cdef double BURST_RISE = _plant.BURST_RISE, BURST_DECAY = _plant.BURST_DECAY, BURST_NORM = _plant.BURST_NORM
cdef double EV_RISE = _plant.EVOKED_RISE, EV_DECAY = _plant.EVOKED_DECAY, EV_NORM = _plant.EVOKED_NORM

cdef enum:
    BASELINE = 0
    INTERICTAL = 1
    PREICTAL = 2
    TONIC = 3
    CLONIC = 4
    POSTICTAL = 5
    K_INTERICTAL = 0
    K_ICTAL = 1
    K_EVOKED = 2
    TONIC_VETO = 2
    NOISE_FLOOR = 0
    ACTIVE = 1
    I12_MIN = -2048
    I12_MAX = 2047
    I16_MIN = -32768
    I16_MAX = 32767
    LUT_SIZE = 64


# --- SplitMix64 + Box-Muller ------------------------------------------------

cdef struct Rng:
    uint64_t state
    double spare
    bint has_spare


cdef inline uint64_t rng_next(Rng* r) nogil:
    r.state = r.state + <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = r.state
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double rng_uniform(Rng* r) nogil:
    return <double>(rng_next(r) >> 11) * INV_2_53


cdef inline double rng_gauss(Rng* r) nogil:
    cdef double u1, u2, rr, z
    if r.has_spare:
        r.has_spare = False
        z = r.spare
    else:
        u1 = 1.0 - <double>(rng_next(r) >> 11) * INV_2_53
        u2 = <double>(rng_next(r) >> 11) * INV_2_53
        rr = sqrt(-2.0 * log(u1))
        z = rr * cos(TWO_PI * u2)
        r.spare = rr * sin(TWO_PI * u2)
        r.has_spare = True
    return 0.0 + 1.0 * z


# --- plant -----------------------------------------------------------------

cdef struct PlantP:
    bint has_ictal
    double dt, sqrt_dt
    double x0, x_drive, tau_x, sigma_x, h0, k_x, x_release
    double delta_stim, evoked_prob, evoked_amp
    double ii_rate0, ii_rate_x, ii_amp, ii_amp_jitter
    double md_rate, md_amp_lo, md_amp_hi
    double barrage_rate, tonic_hz, tonic_amp
    double clonic_i0, clonic_growth, clonic_imax, burst_amp
    double x_post, postictal_noise, noise_alpha, noise_b
    int64_t ii_len, ii_refractory, md_len, evoked_len, barrage, tonic, burst_len, postictal


cdef struct PlantS:
    Rng rng
    double x
    int regime
    int64_t regime_t, step
    double noise
    int64_t ii_start
    double ii_amp
    int64_t ii_quiet_until, md_start
    double md_amp
    int64_t ev_start, phase_end, ictal_start, burst_start, next_burst
    double clonic_iv
    bint last_burst


cdef PlantP pack_plant(cfg, double f_in):
    cdef PlantP p
    tm = PlantTiming.build(cfg, f_in)
    p.has_ictal = cfg.has_ictal
    p.dt = tm.dt
    p.sqrt_dt = tm.sqrt_dt
    p.x0 = cfg.x0
    p.x_drive = cfg.x_drive
    p.tau_x = cfg.tau_x
    p.sigma_x = cfg.sigma_x
    p.h0 = cfg.h0
    p.k_x = cfg.k_x
    p.x_release = cfg.x_release
    p.delta_stim = cfg.delta_stim
    p.evoked_prob = cfg.evoked_prob
    p.evoked_amp = cfg.evoked_amp
    p.ii_rate0 = cfg.ii_rate0
    p.ii_rate_x = cfg.ii_rate_x
    p.ii_amp = cfg.ii_amp
    p.ii_amp_jitter = cfg.ii_amp_jitter
    p.md_rate = cfg.md_rate
    p.md_amp_lo = cfg.md_amp_lo
    p.md_amp_hi = cfg.md_amp_hi
    p.barrage_rate = cfg.barrage_rate
    p.tonic_hz = cfg.tonic_hz
    p.tonic_amp = cfg.tonic_amp
    p.clonic_i0 = cfg.clonic_i0
    p.clonic_growth = cfg.clonic_growth
    p.clonic_imax = cfg.clonic_imax
    p.burst_amp = cfg.burst_amp
    p.x_post = cfg.x_post
    p.postictal_noise = cfg.postictal_noise
    p.noise_alpha = cfg.noise_alpha
    p.noise_b = tm.noise_b
    p.ii_len = tm.ii_len
    p.ii_refractory = tm.ii_refractory
    p.md_len = tm.md_len
    p.evoked_len = tm.evoked_len
    p.barrage = tm.barrage
    p.tonic = tm.tonic
    p.burst_len = tm.burst_len
    p.postictal = tm.postictal
    return p


cdef PlantS init_plant_state(PlantP* p, uint64_t seed):
    cdef PlantS s
    s.rng.state = seed
    s.rng.spare = 0.0
    s.rng.has_spare = False
    s.x = p.x0
    s.regime = BASELINE
    s.regime_t = 0
    s.step = 0
    s.noise = 0.0
    s.ii_start = -1
    s.ii_amp = 0.0
    s.ii_quiet_until = 0
    s.md_start = -1
    s.md_amp = 0.0
    s.ev_start = -1
    s.phase_end = 0
    s.ictal_start = -1
    s.burst_start = -1
    s.next_burst = 0
    s.clonic_iv = 0.0
    s.last_burst = False
    return s


cdef inline double biexp(double tau, double rise, double decay, double norm) nogil:
    return norm * (exp(-tau / decay) - exp(-tau / rise))


cdef inline double slow_wave(double tau) nogil:
    if 0.05 < tau and tau < 0.35:
        return sin(PI * (tau - 0.05) / 0.3)
    return 0.0


cdef inline int reported(PlantS* s) nogil:
    if s.regime == BASELINE and s.ii_start >= 0:
        return INTERICTAL
    return s.regime


cdef inline int to_counts(double v) nogil:
    cdef double f = floor(v + 0.5)
    if f < -2048.0:
        return -2048
    if f > 2047.0:
        return 2047
    return <int>f


cdef int plant_step(PlantS* s, PlantP* p, bint pulse, list done):
    cdef int64_t t = s.step
    cdef double dt = p.dt
    cdef double x, rate, tau, v
    cdef int reg

    if pulse:
        s.x = s.x - p.delta_stim
        if s.x < 0.0:
            s.x = 0.0
        if rng_uniform(&s.rng) < p.evoked_prob:
            if s.ev_start >= 0:
                done.append((K_EVOKED, s.ev_start, t))
            s.ev_start = t

    x = s.x + dt * (p.x_drive - s.x) / p.tau_x + p.sigma_x * p.sqrt_dt * rng_gauss(&s.rng)
    if x < 0.0:
        x = 0.0
    if x > 1.0:
        x = 1.0
    s.x = x

    reg = s.regime
    if reg == BASELINE:
        if p.has_ictal and rng_uniform(&s.rng) < p.h0 * exp(p.k_x * x) * dt:
            reg = PREICTAL
            s.phase_end = t + p.barrage
    elif reg == PREICTAL:
        if x < p.x_release:
            reg = BASELINE
        elif t >= s.phase_end and s.ii_start < 0 and t >= s.ii_quiet_until:
            reg = TONIC
            s.ictal_start = t
            s.phase_end = t + p.tonic
    elif reg == TONIC:
        if t >= s.phase_end:
            reg = CLONIC
            s.clonic_iv = p.clonic_i0
            s.next_burst = t
            s.last_burst = False
    elif reg == CLONIC:
        if s.last_burst and t >= s.burst_start + p.burst_len:
            done.append((K_ICTAL, s.ictal_start, t))
            s.burst_start = -1
            reg = POSTICTAL
            s.phase_end = t + p.postictal
            s.x = p.x_post
            x = p.x_post
        elif (not s.last_burst) and t >= s.next_burst:
            s.burst_start = t
            s.next_burst = t + <int64_t>floor(s.clonic_iv / dt + 0.5)
            s.clonic_iv = s.clonic_iv * p.clonic_growth
            s.last_burst = s.clonic_iv > p.clonic_imax
    elif reg == POSTICTAL:
        if t >= s.phase_end:
            reg = BASELINE
            if t + p.ii_refractory > s.ii_quiet_until:
                s.ii_quiet_until = t + p.ii_refractory
    if reg != s.regime:
        s.regime = reg
        s.regime_t = 0
    else:
        s.regime_t += 1

    if s.ii_start >= 0 and t - s.ii_start >= p.ii_len:
        done.append((K_INTERICTAL, s.ii_start, t))
        s.ii_start = -1
        s.ii_quiet_until = t + p.ii_refractory
    if s.ii_start < 0 and (reg == BASELINE or reg == PREICTAL) and t >= s.ii_quiet_until:
        if reg == PREICTAL:
            rate = p.barrage_rate
        else:
            rate = p.ii_rate0 + p.ii_rate_x * x
        if rng_uniform(&s.rng) < rate * dt:
            s.ii_start = t
            s.ii_amp = p.ii_amp * (1.0 + p.ii_amp_jitter * rng_gauss(&s.rng))

    if s.md_start >= 0 and t - s.md_start >= p.md_len:
        s.md_start = -1
    if (p.has_ictal and s.md_start < 0 and s.ii_start < 0
            and (reg == BASELINE or reg == PREICTAL)
            and rng_uniform(&s.rng) < p.md_rate * x * x * dt):
        s.md_start = t
        s.md_amp = p.md_amp_lo + (p.md_amp_hi - p.md_amp_lo) * rng_uniform(&s.rng)

    s.noise = p.noise_alpha * s.noise + p.noise_b * rng_gauss(&s.rng)
    if reg == POSTICTAL:
        v = s.noise * p.postictal_noise
    else:
        v = s.noise * 1.0
    if s.ii_start >= 0:
        tau = <double>(t - s.ii_start) * dt
        if p.has_ictal:
            v += (s.ii_amp * biexp(tau, II_RISE, II_DECAY, II_NORM)
                  + 0.3 * s.ii_amp * sin(TWO_PI * 40.0 * tau) * exp(-tau / 0.04)
                  - 0.25 * s.ii_amp * slow_wave(tau))
        else:
            v += (-0.8 * s.ii_amp * biexp(tau, IIO_RISE, IIO_DECAY, IIO_NORM)
                  + 0.2 * s.ii_amp * slow_wave(tau))
    if s.md_start >= 0:
        tau = <double>(t - s.md_start) * dt
        v += s.md_amp * biexp(tau, MD_RISE, MD_DECAY, MD_NORM)
    if reg == TONIC:
        tau = <double>(t - s.ictal_start) * dt
        v += p.tonic_amp * cos(TWO_PI * p.tonic_hz * tau) * (1.0 + 0.3 * exp(-tau / 0.002))
    elif reg == CLONIC and s.burst_start >= 0 and t - s.burst_start < p.burst_len:
        tau = <double>(t - s.burst_start) * dt
        v += (p.burst_amp * biexp(tau, BURST_RISE, BURST_DECAY, BURST_NORM)
              + 0.5 * p.burst_amp * sin(TWO_PI * 30.0 * tau) * exp(-tau / 0.05))
    if s.ev_start >= 0:
        if t - s.ev_start >= p.evoked_len:
            done.append((K_EVOKED, s.ev_start, t))
            s.ev_start = -1
        else:
            tau = <double>(t - s.ev_start) * dt
            v += (p.evoked_amp * biexp(tau, EV_RISE, EV_DECAY, EV_NORM)
                  - 0.5 * p.evoked_amp * sin(TWO_PI * 150.0 * tau) * exp(-tau / 0.03))

    s.step = t + 1
    return to_counts(v)


cdef void plant_flush(PlantS* s, list done):
    cdef int64_t t = s.step
    if s.regime == TONIC or s.regime == CLONIC:
        done.append((K_ICTAL, s.ictal_start, t))
    if s.ii_start >= 0:
        done.append((K_INTERICTAL, s.ii_start, t))
    if s.ev_start >= 0:
        done.append((K_EVOKED, s.ev_start, t))


def simulate_plant(cfg, seed, duration_s, f_in=2000.0, pulse_steps=()):
    cdef int64_t n = int(round(duration_s * f_in))
    cdef PlantP p = pack_plant(cfg, f_in)
    cdef PlantS s = init_plant_state(&p, <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF))
    samples = np.empty(n, dtype=np.int16)
    regimes = np.empty(n, dtype=np.int8)
    cdef int16_t[::1] sv = samples
    cdef int8_t[::1] rv = regimes
    pulse_mask = np.zeros(n, dtype=np.uint8)
    for q in pulse_steps:
        if 0 <= q < n:
            pulse_mask[q] = 1
    cdef unsigned char[::1] pm = pulse_mask
    cdef list done = []
    cdef int64_t t
    for t in range(n):
        sv[t] = plant_step(&s, &p, pm[t] != 0, done)
        rv[t] = reported(&s)
    plant_flush(&s, done)
    return samples, _plant.events_to_truth(done, f_in), regimes


# --- encoder -----------------------------------------------------------------

cdef struct EncP:
    int theta_comp, theta_low, theta_high


cdef struct EncS:
    int base_low, base_high, active
    int64_t blank_until
    bint primed


cdef inline EncP pack_enc(cfg):
    cdef EncP e
    e.theta_comp = cfg.theta_comp
    e.theta_low = cfg.theta_low
    e.theta_high = cfg.theta_high
    return e


cdef inline void enc_reset(EncS* s) nogil:
    s.base_low = 0
    s.base_high = 0
    s.active = 0
    s.blank_until = 0
    s.primed = False


cdef inline int enc_step(EncS* s, EncP* p, int x, int64_t t, int* channel) nogil:
    """Returns polarity (+1/-1), 2 for a comparator channel switch (no
    spike) or 0; channel written on spike and switch."""
    cdef int ch, b, th
    cdef bint was_primed
    if t < s.blank_until:
        return 0
    ch = 1 if (x if x >= 0 else -x) > p.theta_comp else 0
    if (not s.primed) or ch != s.active:
        was_primed = s.primed
        s.primed = True
        s.active = ch
        if ch:
            s.base_high = x
        else:
            s.base_low = x
        if was_primed:
            channel[0] = ch
            return 2
        return 0
    if ch:
        b = s.base_high
        th = p.theta_high
    else:
        b = s.base_low
        th = p.theta_low
    if x > b + th:
        if ch:
            s.base_high = b + th
        else:
            s.base_low = b + th
        channel[0] = ch
        return 1
    if x < b - th:
        if ch:
            s.base_high = b - th
        else:
            s.base_low = b - th
        channel[0] = ch
        return -1
    return 0


# --- reservoir / readout -----------------------------------------------------

cdef class Net:
    """Flat C views of a topology plus readout weights and neuron params."""
    cdef int n, n_taps, lam, theta, v_reset
    cdef int ro_lam, ro_theta, ro_reset
    cdef object _keep
    cdef int8_t[:, ::1] W
    cdef int32_t[::1] in_post0, in_post1
    cdef int32_t[::1] in_w0, in_w1
    cdef int32_t[::1] taps
    cdef int32_t[::1] tap_of  # neuron -> tap position or -1
    cdef int32_t[::1] v, drive, fired_list
    cdef int n_fired
    cdef int32_t[::1] rv

    def __init__(self, topo, neuron, ro=None):
        self.n = topo.n_total
        self.n_taps = len(topo.taps)
        self.lam = neuron.lam
        self.theta = neuron.theta
        self.v_reset = neuron.v_reset
        if ro is not None:
            self.ro_lam = ro.lam
            self.ro_theta = ro.theta
            self.ro_reset = ro.v_reset
        W = np.ascontiguousarray(topo.weights, dtype=np.int8)
        p0 = np.ascontiguousarray(topo.input_posts[0], dtype=np.int32)
        p1 = np.ascontiguousarray(topo.input_posts[1], dtype=np.int32)
        w0 = np.ascontiguousarray(topo.input_weights[0], dtype=np.int32)
        w1 = np.ascontiguousarray(topo.input_weights[1], dtype=np.int32)
        taps = np.ascontiguousarray(topo.taps, dtype=np.int32)
        tap_of = np.full(self.n, -1, dtype=np.int32)
        tap_of[taps] = np.arange(len(taps), dtype=np.int32)
        v = np.zeros(self.n, dtype=np.int32)
        drive = np.zeros(self.n, dtype=np.int32)
        fl = np.zeros(self.n, dtype=np.int32)
        rv = np.zeros(2, dtype=np.int32)
        self._keep = (W, p0, p1, w0, w1, taps, tap_of, v, drive, fl, rv)
        self.W = W
        self.in_post0 = p0
        self.in_post1 = p1
        self.in_w0 = w0
        self.in_w1 = w1
        self.taps = taps
        self.tap_of = tap_of
        self.v = v
        self.drive = drive
        self.fired_list = fl
        self.n_fired = 0
        self.rv = rv

    cdef void reset(self) nogil:
        cdef int i
        for i in range(self.n):
            self.v[i] = 0
        self.n_fired = 0
        self.rv[0] = 0
        self.rv[1] = 0

    cdef bint quiet(self) nogil:
        """No pending spikes and every membrane at a leak fixed point."""
        cdef int i
        if self.n_fired:
            return False
        for i in range(self.n):
            if ((self.v[i] * self.lam) >> 8) != self.v[i]:
                return False
        return True

    cdef int step(self, int channel, int polarity) nogil:
        """Synchronous reservoir update; fills fired_list, returns its length."""
        cdef int i, j, k, pre, val
        cdef int n = self.n
        cdef int8_t* row
        for j in range(n):
            self.drive[j] = 0
        for k in range(self.n_fired):
            pre = self.fired_list[k]
            row = &self.W[pre, 0]
            for j in range(n):
                self.drive[j] += row[j]
        if polarity != 0:
            if channel == 0:
                for k in range(self.in_post0.shape[0]):
                    self.drive[self.in_post0[k]] += polarity * self.in_w0[k]
            else:
                for k in range(self.in_post1.shape[0]):
                    self.drive[self.in_post1[k]] += polarity * self.in_w1[k]
        self.n_fired = 0
        for j in range(n):
            val = ((self.v[j] * self.lam) >> 8) + self.drive[j]
            if val < I12_MIN:
                val = I12_MIN
            elif val > I12_MAX:
                val = I12_MAX
            if val >= self.theta:
                val = self.v_reset
                self.fired_list[self.n_fired] = j
                self.n_fired += 1
            self.v[j] = val
        return self.n_fired


cdef inline int ro_leak_step(int32_t* v, int lam) nogil:
    v[0] = (v[0] * lam) >> 8
    v[1] = (v[1] * lam) >> 8
    return 0


cdef inline int clamp16(int64_t x) nogil:
    if x < I16_MIN:
        return I16_MIN
    if x > I16_MAX:
        return I16_MAX
    return <int>x


cdef inline int clamp12(int x) nogil:
    if x < I12_MIN:
        return I12_MIN
    if x > I12_MAX:
        return I12_MAX
    return x


cdef inline int ro_fire(int32_t* v, int16_t[:, ::1] w, int32_t* tap_idx, int n_tap_hit,
                        int lam, int theta, int v_reset, int* post) nogil:
    cdef int k, j
    cdef int64_t acc
    for k in range(2):
        acc = (v[k] * lam) >> 8
        for j in range(n_tap_hit):
            acc += w[tap_idx[j], k]
        v[k] = clamp16(acc)
        if v[k] >= theta:
            v[k] = v_reset
            post[k] = 1
        else:
            post[k] = 0
    return post[0] + post[1]


cdef inline void stdp(int16_t[:, ::1] w, int64_t[::1] last_pre, int64_t* last_post,
                      int8_t[::1] ltp, int8_t[::1] ltd, int k_match,
                      int32_t* tap_idx, int n_tap_hit, int* post, int64_t t, int n_taps) nogil:
    cdef int k, j, m
    cdef int64_t lag
    for k in range(2):
        if post[k]:
            m = 1 if k == k_match else -1
            for j in range(n_taps):
                lag = t - last_pre[j]
                if lag > 0 and lag < LUT_SIZE:
                    w[j, k] = clamp12(w[j, k] + m * ltp[lag])
    for j in range(n_tap_hit):
        for k in range(2):
            lag = t - last_post[k]
            if lag > 0 and lag < LUT_SIZE:
                m = 1 if k == k_match else -1
                w[tap_idx[j], k] = clamp12(w[tap_idx[j], k] + m * ltd[lag])


def tap_raster(samples, enc_cfg, topo, neuron):
    cdef Net net = Net(topo, neuron)
    cdef EncP ep = pack_enc(enc_cfg)
    cdef EncS es
    enc_reset(&es)
    arr = np.ascontiguousarray(samples, dtype=np.int16)
    cdef int16_t[::1] xs = arr
    cdef int64_t n = xs.shape[0]
    cdef int64_t cap = 1 << 16, used = 0
    out_t = np.empty(cap, dtype=np.int32)
    out_k = np.empty(cap, dtype=np.int16)
    cdef int32_t[::1] ot = out_t
    cdef int16_t[::1] ok = out_k
    cdef int64_t t
    cdef int pol, ch = 0, nf, q, pos
    cdef bint quiet = True
    for t in range(n):
        pol = enc_step(&es, &ep, xs[t], t, &ch)
        if pol == 2:
            pol = 0
        if pol == 0 and quiet:
            continue
        nf = net.step(ch, pol)
        if used + nf > cap:
            while used + nf > cap:
                cap *= 2
            out_t = np.resize(out_t, cap)
            out_k = np.resize(out_k, cap)
            ot = out_t
            ok = out_k
        for q in range(nf):
            pos = net.tap_of[net.fired_list[q]]
            if pos >= 0:
                ot[used] = <int32_t>t
                ok[used] = <int16_t>pos
                used += 1
        quiet = net.quiet()
    # fired_list is in neuron order; tap positions are monotone in neuron id
    return Raster(out_t[:used].copy(), out_k[:used].copy(), int(n))


def readout_epoch(rasters, order, labels, w, ro, lut, learn, independent):
    cdef int16_t[:, ::1] wv
    wk = np.ascontiguousarray(w, dtype=np.int16)
    wv = wk
    cdef int n_taps = wk.shape[0]
    cdef int lam = ro.lam, theta = ro.theta, v_reset = ro.v_reset
    ltp_a = np.ascontiguousarray(lut.ltp, dtype=np.int8)
    ltd_a = np.ascontiguousarray(lut.ltd, dtype=np.int8)
    cdef int8_t[::1] ltp = ltp_a
    cdef int8_t[::1] ltd = ltd_a
    last_pre_a = np.empty(n_taps, dtype=np.int64)
    cdef int64_t[::1] last_pre = last_pre_a
    cdef int64_t last_post[2]
    cdef int32_t v[2]
    cdef int post[2]
    tap_buf_a = np.empty(n_taps, dtype=np.int32)
    cdef int32_t[::1] tap_buf = tap_buf_a
    counts = np.zeros((len(order), 2), dtype=np.int64)
    cdef int64_t[:, ::1] cv = counts
    cdef int32_t[::1] et
    cdef int16_t[::1] ek
    cdef int64_t t0 = 0, step, n_steps, k, n_ev
    cdef int i, j, nh, label
    cdef bint do_learn = bool(learn)
    cdef int64_t NEVER = -(1 << 40)

    for j in range(n_taps):
        last_pre[j] = NEVER
    last_post[0] = NEVER
    last_post[1] = NEVER
    v[0] = 0
    v[1] = 0
    for i, s in enumerate(order):
        r = rasters[s]
        if independent:
            v[0] = 0
            v[1] = 0
            for j in range(n_taps):
                last_pre[j] = NEVER
            last_post[0] = NEVER
            last_post[1] = NEVER
            t0 = 0
        label = int(labels[s]) if do_learn else 0
        et = np.ascontiguousarray(r.t, dtype=np.int32)
        ek = np.ascontiguousarray(r.tap, dtype=np.int16)
        n_ev = et.shape[0]
        n_steps = r.n_steps
        k = 0
        with nogil:
            for step in range(n_steps):
                if k < n_ev and et[k] == step:
                    nh = 0
                    while k < n_ev and et[k] == step:
                        tap_buf[nh] = ek[k]
                        nh += 1
                        k += 1
                    ro_fire(v, wv, &tap_buf[0], nh, lam, theta, v_reset, post)
                    for j in range(nh):
                        last_pre[tap_buf[j]] = t0 + step
                    if post[0]:
                        last_post[0] = t0 + step
                        cv[i, 0] += 1
                    if post[1]:
                        last_post[1] = t0 + step
                        cv[i, 1] += 1
                    if do_learn:
                        stdp(wv, last_pre, last_post, ltp, ltd, label,
                             &tap_buf[0], nh, post, t0 + step, n_taps)
                else:
                    v[0] = (v[0] * lam) >> 8
                    v[1] = (v[1] * lam) >> 8
        t0 += n_steps
    if do_learn:
        w[...] = wk
    return counts


# --- closed loop ---------------------------------------------------------------

cdef struct GateP:
    int64_t window, hold
    double tonic_count, release_count, noise_count, t_min_s, f_in


cdef struct GateS:
    int regime
    int64_t veto_until, last_pulse_t
    int count_low, count_high


def run_loop(mode, n_steps, plant_cfg, plant_seed, trace, enc_cfg, topo, neuron, ro, ro_w,
             gate_cfg, f_in, blank_steps, latency_steps, amplitude_code=150):
    cdef int imode = mode
    cdef bint live = imode != 1
    cdef bint log_pulses = imode != 2
    cdef bint effect = imode == 0
    cdef int64_t n = n_steps
    cdef int64_t nblank = blank_steps, latency = latency_steps
    cdef PlantP pp
    cdef PlantS ps
    cdef int16_t[::1] tr
    if live:
        pp = pack_plant(plant_cfg, f_in)
        ps = init_plant_state(&pp, <uint64_t>(plant_seed & 0xFFFFFFFFFFFFFFFF))
    else:
        trace_a = np.ascontiguousarray(trace, dtype=np.int16)
        if trace_a.shape[0] < n:
            raise ValueError("trace shorter than the requested run")
        tr = trace_a
    cdef Net net = Net(topo, neuron, ro)
    cdef EncP ep = pack_enc(enc_cfg)
    cdef EncS es
    enc_reset(&es)
    wk = np.ascontiguousarray(ro_w, dtype=np.int16).copy()
    cdef int16_t[:, ::1] wv = wk
    cdef int n_taps = wk.shape[0]

    tm = GateTiming.from_config(gate_cfg, f_in)
    cdef GateP gp
    gp.window = tm.window
    gp.hold = tm.hold
    gp.tonic_count = tm.tonic_count
    gp.release_count = tm.release_count
    gp.noise_count = tm.noise_count
    gp.t_min_s = tm.t_min_s
    gp.f_in = tm.f_in
    cdef GateS gs
    gs.regime = NOISE_FLOOR
    gs.veto_until = 0
    gs.last_pulse_t = -(1 << 40)
    gs.count_low = 0
    gs.count_high = 0
    ring_a = np.full(gp.window, -1, dtype=np.int8)
    cdef int8_t[::1] ring = ring_a

    samples = np.empty(n, dtype=np.int16)
    res_count = np.zeros(n, dtype=np.uint16)
    enc_t = np.empty(n, dtype=np.int32)
    enc_ch = np.empty(n, dtype=np.int8)
    enc_pol = np.empty(n, dtype=np.int8)
    ro_t = np.empty(2 * n, dtype=np.int32)
    ro_k = np.empty(2 * n, dtype=np.int8)
    pulse_t = np.empty(n, dtype=np.int32)
    gate_t = np.empty(n, dtype=np.int32)
    gate_r = np.empty(n, dtype=np.int8)
    plant_t = np.empty(n, dtype=np.int32)
    plant_r = np.empty(n, dtype=np.int8)
    cdef int16_t[::1] sv = samples
    cdef uint16_t[::1] rc = res_count
    cdef int32_t[::1] et = enc_t, rt = ro_t, pt = pulse_t, gt = gate_t, plt = plant_t
    cdef int8_t[::1] ech = enc_ch, epo = enc_pol, rk = ro_k, gr = gate_r, plr = plant_r
    cdef int64_t n_enc = 0, n_ro = 0, n_pulse = 0, n_gate = 0, n_plant = 0
    queue_a = np.empty(n + 1, dtype=np.int64)
    cdef int64_t[::1] queue = queue_a
    cdef int64_t q_head = 0, q_tail = 0
    cdef list done = []

    cdef int32_t tap_buf[4096]
    cdef int32_t v[2]
    cdef int post[2]
    v[0] = 0
    v[1] = 0
    cdef int64_t t, slot
    cdef int x, pol, ch = 0, nf, q, pos, nh, pr, old, k
    cdef bint onset
    cdef int last_gate = -1, last_plant = -1
    cdef bint actuate
    cdef int64_t high
    if n_taps > 4096:
        raise ValueError("too many taps")

    for t in range(n):
        actuate = q_head < q_tail and queue[q_head] == t
        if actuate:
            q_head += 1
        if live:
            x = plant_step(&ps, &pp, actuate and effect, done)
            pr = reported(&ps)
            if pr != last_plant:
                plt[n_plant] = <int32_t>t
                plr[n_plant] = <int8_t>pr
                n_plant += 1
                last_plant = pr
        else:
            x = tr[t]
        sv[t] = <int16_t>x
        if actuate and effect and nblank > 0:
            if t + nblank > es.blank_until:
                es.blank_until = t + nblank
        pol = enc_step(&es, &ep, x, t, &ch)
        onset = pol == 2
        if onset:
            pol = 0
        if pol != 0:
            et[n_enc] = <int32_t>t
            ech[n_enc] = <int8_t>ch
            epo[n_enc] = <int8_t>pol
            n_enc += 1
        nf = net.step(ch, pol)
        rc[t] = <uint16_t>nf
        nh = 0
        for q in range(nf):
            pos = net.tap_of[net.fired_list[q]]
            if pos >= 0:
                tap_buf[nh] = pos
                nh += 1
        ro_fire(v, wv, tap_buf, nh, net.ro_lam, net.ro_theta, net.ro_reset, post)
        for k in range(2):
            if post[k]:
                rt[n_ro] = <int32_t>t
                rk[n_ro] = <int8_t>k
                n_ro += 1

        # gate
        slot = t % gp.window
        old = ring[slot]
        if old == 1:
            gs.count_high -= 1
        elif old == 0:
            gs.count_low -= 1
        if pol != 0 or onset:
            ring[slot] = <int8_t>ch
            if ch:
                gs.count_high += 1
            else:
                gs.count_low += 1
        else:
            ring[slot] = -1
        high = gs.count_high
        if high >= gp.tonic_count or (gs.regime == TONIC_VETO and high >= gp.release_count):
            gs.regime = TONIC_VETO
            if t + gp.hold > gs.veto_until:
                gs.veto_until = t + gp.hold
        elif gs.regime == TONIC_VETO and t < gs.veto_until:
            pass
        elif gs.count_low + high < gp.noise_count:
            gs.regime = NOISE_FLOOR
        else:
            gs.regime = ACTIVE
        if gs.regime != last_gate:
            gt[n_gate] = <int32_t>t
            gr[n_gate] = <int8_t>gs.regime
            n_gate += 1
            last_gate = gs.regime
        if post[0] and gs.regime != TONIC_VETO and not (<double>(t - gs.last_pulse_t) / gp.f_in < gp.t_min_s):
            gs.last_pulse_t = t
            if log_pulses:
                pt[n_pulse] = <int32_t>t
                n_pulse += 1
                queue[q_tail] = t + latency
                q_tail += 1
    if live:
        plant_flush(&ps, done)
    return RawRun(
        samples,
        enc_t[:n_enc].copy(), enc_ch[:n_enc].copy(), enc_pol[:n_enc].copy(),
        res_count,
        ro_t[:n_ro].copy(), ro_k[:n_ro].copy(),
        pulse_t[:n_pulse].copy(),
        gate_t[:n_gate].copy(), gate_r[:n_gate].copy(),
        plant_t[:n_plant].copy(), plant_r[:n_plant].copy(),
        done,
    )
