"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one PASS/FAIL line with the measured values; the lines
are repeated in the pytest terminal summary.
"""

import hashlib
import time

import numpy as np
import pytest

from neuroloop import _backend
from neuroloop.cli import main
from neuroloop.encoder import HIGH, LOW, EncoderConfig, EncoderState, blank, decode_reconstruct, encode_step, encode_trace
from neuroloop.formats import WeightSnapshot
from neuroloop.harness import SessionConfig, SessionLog, check_log, default_snapshot_path, pulses_in_plant_regime, run_replay, run_session
from neuroloop.metrics import freq_summary, inst_frequencies
from neuroloop.plant import TONIC
from neuroloop.readout import build_lut
from neuroloop.reservoir import ReservoirParams, ReservoirState, build_topology, membrane_image, weight_image
from neuroloop.training import accuracy, infer_counts, segment_rasters, train
from neuroloop.dataset import load_dataset

from chain_check import compare_chain
from conftest import ACCEPTANCE_LINES
from oracles import lut_value

SEEDS = range(10)
SESSION_S = 1200.0


def report(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def sha(path):
    if path.is_dir():
        h = hashlib.sha256()
        for f in sorted(path.iterdir()):
            h.update(f.name.encode() + f.read_bytes())
        return h.hexdigest()
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def ensemble(snapshot):
    t0 = time.perf_counter()
    closed = [run_session(SessionConfig(mode="closed_loop", duration_s=SESSION_S, seed=s), snapshot) for s in SEEDS]
    nostim = [run_session(SessionConfig(mode="open_loop_baseline", duration_s=SESSION_S, seed=s), snapshot) for s in SEEDS]
    elapsed = time.perf_counter() - t0
    replay = [run_replay(SessionConfig(mode="replay", duration_s=SESSION_S), snapshot, (r.raw.samples, 2000)) for r in nostim]
    return closed, nostim, replay, elapsed


def test_criterion_01_closed_loop_suppression(ensemble):
    closed, nostim, _, elapsed = ensemble
    c = np.array([r.report().pct_time_ictal for r in closed])
    b = np.array([r.report().pct_time_ictal for r in nostim])
    reduction = 1.0 - c.mean() / b.mean()
    ok = c.mean() <= 2.0 and 12.0 <= b.mean() <= 35.0 and reduction >= 0.90 and elapsed <= 300.0
    detail = (
        f"closed {c.mean():.2f} +/- {c.std(ddof=1):.2f}% vs no-stim {b.mean():.2f} +/- {b.std(ddof=1):.2f}%, "
        f"reduction {100 * reduction:.1f}%, 20 sessions in {elapsed:.1f} s ({_backend.name()} backend)"
    )
    assert report(1, "closed-loop suppression", ok, detail), detail


def test_criterion_02_low_frequency_regime(ensemble):
    closed = ensemble[0]
    f = np.concatenate([inst_frequencies(r.pulse_times()) for r in closed])
    s = freq_summary(f)
    ok = f.size > 0 and s["pct_le_20Hz"] >= 60.0 and s["pct_ge_100Hz"] <= 10.0
    detail = (
        f"{s['pct_le_20Hz']:.1f}% within 20 Hz (target ~80%), {s['pct_ge_100Hz']:.1f}% at >= 100 Hz (target ~3.4%), "
        f"{sum(r.raw.pulse_t.size for r in closed)} pulses"
    )
    assert report(2, "low-frequency regime", ok, detail), detail


def test_criterion_03_tonic_veto_compliance(ensemble):
    closed, nostim, replay, _ = ensemble
    in_tonic = sum(pulses_in_plant_regime(r, TONIC) for r in closed)
    tonic_steps = sum(int(np.count_nonzero(r.plant_regimes() == TONIC)) for r in closed)
    # replaying the unstimulated traces exposes the gate to every seizure
    replay_tonic = 0
    for base, rep in zip(nostim, replay):
        reg = base.plant_regimes()
        replay_tonic += int(np.count_nonzero(reg[rep.raw.pulse_t] == TONIC)) if rep.raw.pulse_t.size else 0
    n_seizures = sum(1 for r in nostim for k, *_ in r.truth() if k == "ictal")
    ok = in_tonic == 0 and replay_tonic == 0
    detail = (
        f"{in_tonic} closed-loop pulses in tonic ({tonic_steps} tonic steps); "
        f"{replay_tonic} replay pulses in tonic over {n_seizures} unstimulated seizures"
    )
    assert report(3, "tonic-veto compliance", ok, detail), detail


def test_criterion_04_lut_fidelity():
    lut = build_lut()
    p = lut.params
    err_p = max(abs(float(lut.ltp[i]) - lut_value(p.a_plus, p.tau_plus, i)) for i in range(64))
    err_m = max(abs(float(lut.ltd[i]) - lut_value(p.a_minus, p.tau_minus, i)) for i in range(64))
    ok = err_p <= 0.5 and err_m <= 0.5
    detail = f"max |LUT - closed form| = {err_p:.3f} (LTP), {err_m:.3f} (LTD) over 64 entries"
    assert report(4, "LUT fidelity", ok, detail), detail


def test_criterion_05_oracle_equivalence():
    parts, ok = [], True
    for n in (128, 256):
        bad, stats = compare_chain(n, 10_000, seed=n + 1, learn=True)
        ok &= bad is None and stats["res_spikes"] > 0 and stats["ro_spikes"] > 0 and stats["w_moved"] > 0
        parts.append(
            f"n={n}: {'exact' if bad is None else f'diverged at step {bad}'} over 10000 steps "
            f"({stats['res_spikes']} reservoir / {stats['ro_spikes']} readout spikes, {stats['w_moved']} weights moved)"
        )
    detail = "; ".join(parts)
    assert report(5, "oracle equivalence", ok, detail), detail


def random_single_regime(rng, n=2000):
    cfg = EncoderConfig()
    if rng.random() < 0.5:
        ch, lo, hi, th = LOW, -cfg.theta_comp, cfg.theta_comp, cfg.theta_low
    else:
        ch, lo, hi, th = HIGH, cfg.theta_comp + 1, 2047, cfg.theta_high
    x = np.empty(n, dtype=np.int64)
    x[0] = rng.integers(lo, hi + 1)
    for i in range(1, n):
        x[i] = min(hi, max(lo, x[i - 1] + rng.integers(-th, th + 1)))
    if ch == HIGH and rng.random() < 0.5:
        x = -x
    return ch, x


def test_criterion_06_encoder_round_trip():
    cfg = EncoderConfig()
    worst, blank_spikes, n_blank = 0.0, 0, 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ch, x = random_single_regime(rng)
        ev = encode_trace(x.tolist(), cfg)
        rec = decode_reconstruct(ev, cfg, len(x), initial=(int(x[0]), int(x[0])))
        worst = max(worst, float(np.max(np.abs(x - rec))) / cfg.theta(ch))
        # same signal with random blanking windows
        st = EncoderState()
        starts = set(rng.choice(np.arange(10, len(x) - 10), size=20, replace=False).tolist())
        windows = []
        for t, v in enumerate(x.tolist()):
            if t in starts:
                d = int(rng.integers(1, 9))
                blank(st, t, d)
                windows.append((t, t + d))
            e = encode_step(st, cfg, v, t)
            if e is not None and any(a <= t < b for a, b in windows):
                blank_spikes += 1
        n_blank += len(windows)
    ok = worst <= 1.0 and blank_spikes == 0
    detail = f"max error {worst:.3f} x theta over 100 signals; {blank_spikes} spikes inside {n_blank} blanking windows"
    assert report(6, "encoder round-trip", ok, detail), detail


@pytest.fixture(scope="module")
def default_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("acc") / "ds"
    assert main(["-q", "gen", "--out", str(root), "--seed", "5"]) == 0
    return root


def test_criterion_07_training_efficacy(default_dataset):
    ds = load_dataset(default_dataset)
    res = train(ds, epochs=50, seed=0)
    cfg = res.snapshot.config
    rasters = segment_rasters(ds, cfg, res.snapshot.topology)
    labels = ds.labels()
    init_acc = accuracy(infer_counts(rasters, res.test_idx, res.initial_w, cfg), [labels[i] for i in res.test_idx])
    first, final = res.test_accuracy[0], res.test_accuracy[-1]
    ok = final >= 0.80 and final >= first and len(res.test_accuracy) == 50
    detail = (
        f"held-out accuracy {100 * final:.1f}% after 50 epochs on {len(res.test_idx)} segments "
        f"(epoch 1 {100 * first:.1f}%, untrained {100 * init_acc:.1f}%, chance 50%)"
    )
    assert report(7, "training efficacy", ok, detail), detail


def test_criterion_08_determinism(default_dataset, tmp_path):
    checks = {}
    assert main(["-q", "gen", "--out", str(tmp_path / "ds"), "--seed", "5"]) == 0
    checks["gen"] = sha(tmp_path / "ds") == sha(default_dataset)
    for name in ("a", "b"):
        assert main(["-q", "train", "--data", str(default_dataset), "--out", str(tmp_path / f"{name}.nlws")]) == 0
        assert main(["-q", "run", "--seed", "3", "--duration", "120", "--out", str(tmp_path / f"run_{name}"), "--csv"]) == 0
    checks["train"] = sha(tmp_path / "a.nlws") == sha(tmp_path / "b.nlws")
    checks["shipped snapshot reproduced"] = sha(tmp_path / "a.nlws") == sha(default_snapshot_path())
    checks["run"] = sha(tmp_path / "run_a") == sha(tmp_path / "run_b")
    data = (tmp_path / "a.nlws").read_bytes()
    checks["snapshot round-trip"] = WeightSnapshot.from_bytes(data).to_bytes() == data
    topo = build_topology(42, ReservoirParams.hardware_profile())
    w_size, m_size = len(weight_image(topo)), len(membrane_image(ReservoirState.zeros(256)))
    checks["n=256 images"] = (w_size, m_size) == (65536, 384)
    ok = all(checks.values())
    detail = ", ".join(f"{k} {'ok' if v else 'MISMATCH'}" for k, v in checks.items()) + f" ({w_size} B / {m_size} B)"
    assert report(8, "determinism", ok, detail), detail


def test_criterion_09_rate_cap_and_causality(ensemble, tmp_path):
    closed, nostim, replay, _ = ensemble
    violations, n_logs, n_pulses = [], 0, 0
    for i, r in enumerate(closed + nostim + replay):
        log = r.log()
        if i == 0:
            # one log also goes through the file format
            log.write(tmp_path / "s.jsonl")
            log = SessionLog.read(tmp_path / "s.jsonl")
        violations += check_log(log)
        n_logs += 1
        n_pulses += len(log.pulse_times())
    ok = not violations
    detail = f"{len(violations)} violations in {n_logs} logs ({n_pulses} pulses checked)"
    if violations:
        detail += f"; first: {violations[0]}"
    assert report(9, "rate cap and causality", ok, detail), detail


def test_criterion_10_throughput(snapshot):
    cfg = SessionConfig(mode="closed_loop", duration_s=SESSION_S, seed=123)
    t0 = time.perf_counter()
    run_session(cfg, snapshot)
    elapsed = time.perf_counter() - t0
    speed = SESSION_S / elapsed
    ok = speed >= 50.0
    detail = f"20-min closed-loop session in {elapsed:.2f} s = {speed:.0f}x real time ({_backend.name()} backend, n_total=128)"
    assert report(10, "throughput", ok, detail), detail
