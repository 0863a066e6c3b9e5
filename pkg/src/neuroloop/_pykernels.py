"""Pure-Python kernels, composed from the public step functions.

This is the reference backend: slow, but each loop is the literal
composition of ``plant_step -> encode_step -> reservoir_step ->
readout_step -> gate_step``. The compiled core must reproduce its output
bit for bit. Quiet stretches are skipped only where the state is provably
at a fixed point, which keeps the result exact.
"""

from __future__ import annotations

import numpy as np

from ._raw import MODE_CLOSED_LOOP, MODE_OPEN_LOOP, MODE_REPLAY, Raster, RawRun
from .encoder import EncoderState, SpikeEvent, blank, encode_step
from .gate import GateState, GateTiming, gate_step
from .plant import PlantTiming, events_to_truth, init_plant, plant_flush, plant_step
from .readout import ReadoutState, readout_step, rstdp_update
from .reservoir import ReservoirState, reservoir_step

BACKEND = "python"


def simulate_plant(cfg, seed, duration_s, f_in=2000.0, pulse_steps=()):
    n = int(round(duration_s * f_in))
    tm = PlantTiming.build(cfg, f_in)
    st = init_plant(cfg, seed)
    pulses = set(int(p) for p in pulse_steps)
    samples = np.empty(n, dtype=np.int16)
    regimes = np.empty(n, dtype=np.int8)
    done = []
    for t in range(n):
        s, ev = plant_step(st, cfg, tm, t in pulses)
        samples[t] = s
        regimes[t] = st.reported_regime
        done.extend(ev)
    done.extend(plant_flush(st))
    return samples, events_to_truth(done, f_in), regimes


def _at_rest(v: np.ndarray, lam: int) -> bool:
    return bool(np.array_equal((v.astype(np.int32) * lam) >> 8, v))


def tap_raster(samples, enc_cfg, topo, neuron) -> Raster:
    """Encoder + reservoir from rest over ``samples``; tap firings only."""
    enc = EncoderState()
    res = ReservoirState.zeros(topo.n_total)
    taps = topo.taps
    ts, idx = [], []
    quiet = True
    for t, x in enumerate(np.asarray(samples).tolist()):
        ev = encode_step(enc, enc_cfg, x, t)
        if ev is None and quiet:
            continue
        fired = reservoir_step(res, topo, neuron, ev)
        hit = np.flatnonzero(fired[taps])
        if hit.size:
            ts.extend([t] * hit.size)
            idx.extend(hit.tolist())
        quiet = not fired.any() and _at_rest(res.v, neuron.lam)
    return Raster(np.array(ts, dtype=np.int32), np.array(idx, dtype=np.int16), len(samples))


def _leak_idle(st: ReadoutState, lam: int, n: int) -> None:
    """``n`` input-free readout steps; stops early at the fixed point."""
    v = st.v
    for _ in range(n):
        nv = (v * lam) >> 8
        if np.array_equal(nv, v):
            break
        v = nv
    st.v = v.astype(np.int32)


def readout_epoch(rasters, order, labels, w, ro, lut, learn, independent):
    """Run the readout over ``rasters[order]`` back to back.

    ``labels`` holds the matched neuron index per raster (used when
    ``learn``). ``w`` is updated in place when learning. Returns spike counts
    per visited raster, shape ``(len(order), 2)``.
    """
    st = ReadoutState.with_weights(w)
    counts = np.zeros((len(order), 2), dtype=np.int64)
    n_taps = w.shape[0]
    t0 = 0
    for i, s in enumerate(order):
        r: Raster = rasters[s]
        if independent:
            st.reset_dynamics()
            t0 = 0
        label = int(labels[s]) if learn else 0
        ev_t = r.t.tolist()
        ev_tap = r.tap.tolist()
        k = 0
        local = 0
        while k < len(ev_t):
            step = ev_t[k]
            _leak_idle(st, ro.lam, step - local)
            spikes = np.zeros(n_taps, dtype=bool)
            while k < len(ev_t) and ev_t[k] == step:
                spikes[ev_tap[k]] = True
                k += 1
            post = readout_step(st, spikes, ro, t0 + step)
            counts[i] += post
            if learn:
                rstdp_update(st, lut, label, spikes, post, t0 + step)
            local = step + 1
        _leak_idle(st, ro.lam, r.n_steps - local)
        t0 += r.n_steps
    if learn:
        w[...] = st.w
    return counts


def run_loop(
    mode,
    n_steps,
    plant_cfg,
    plant_seed,
    trace,
    enc_cfg,
    topo,
    neuron,
    ro,
    ro_w,
    gate_cfg,
    f_in,
    blank_steps,
    latency_steps,
    amplitude_code=150,
):
    live = mode != MODE_REPLAY
    log_pulses = mode != MODE_OPEN_LOOP
    effect = mode == MODE_CLOSED_LOOP
    if live:
        ptm = PlantTiming.build(plant_cfg, f_in)
        pst = init_plant(plant_cfg, plant_seed)
    enc = EncoderState()
    res = ReservoirState.zeros(topo.n_total)
    rst = ReadoutState.with_weights(ro_w)
    timing = GateTiming.from_config(gate_cfg, f_in)
    gst = GateState()
    taps = topo.taps

    samples = np.empty(n_steps, dtype=np.int16)
    res_count = np.zeros(n_steps, dtype=np.uint16)
    enc_t, enc_ch, enc_pol = [], [], []
    ro_t, ro_k, pulse_t = [], [], []
    gate_t, gate_r = [], []
    plant_t, plant_r = [], []
    done = []
    pending = []  # actuation steps, increasing
    last_gate = last_plant = -1
    for t in range(n_steps):
        actuate = bool(pending) and pending[0] == t
        if actuate:
            pending.pop(0)
        if live:
            x, ev = plant_step(pst, plant_cfg, ptm, actuate and effect)
            done.extend(ev)
            pr = pst.reported_regime
            if pr != last_plant:
                plant_t.append(t)
                plant_r.append(pr)
                last_plant = pr
        else:
            x = int(trace[t])
        samples[t] = x
        if actuate and effect:
            blank(enc, t, blank_steps)
        spike = encode_step(enc, enc_cfg, x, t)
        if spike is not None:
            enc_t.append(t)
            enc_ch.append(spike.channel)
            enc_pol.append(spike.polarity)
        fired = reservoir_step(res, topo, neuron, spike)
        res_count[t] = int(fired.sum())
        post = readout_step(rst, fired[taps], ro, t)
        for k in (0, 1):
            if post[k]:
                ro_t.append(t)
                ro_k.append(k)
        # the gate also sees comparator channel switches, which carry no spike
        seen = spike if spike is not None or not enc.switched else SpikeEvent(t, enc.active, 0)
        pulse = gate_step(gst, timing, post, seen, t, amplitude_code)
        if gst.regime != last_gate:
            gate_t.append(t)
            gate_r.append(gst.regime)
            last_gate = gst.regime
        if pulse is not None and log_pulses:
            pulse_t.append(t)
            pending.append(t + latency_steps)
    if live:
        done.extend(plant_flush(pst))
    return RawRun(
        samples,
        np.array(enc_t, dtype=np.int32),
        np.array(enc_ch, dtype=np.int8),
        np.array(enc_pol, dtype=np.int8),
        res_count,
        np.array(ro_t, dtype=np.int32),
        np.array(ro_k, dtype=np.int8),
        np.array(pulse_t, dtype=np.int32),
        np.array(gate_t, dtype=np.int32),
        np.array(gate_r, dtype=np.int8),
        np.array(plant_t, dtype=np.int32),
        np.array(plant_r, dtype=np.int8),
        done,
    )
