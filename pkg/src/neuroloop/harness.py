"""Closed-loop sessions, offline replay, the session log and config sweeps.

Per timestep: plant -> (blanking) -> encoder -> reservoir -> readout ->
gate. A pulse emitted at step t reaches the plant at t + latency_steps and
blanks the encoder for ceil(blank_ms * f_in / 1000) steps starting at that
same step. Replay feeds a recorded trace instead of the plant; pulses are
logged but have no effect. The open-loop baseline runs the plant with the
stimulator disconnected (no pulses at all).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import _backend
from ._raw import MODE_CLOSED_LOOP, MODE_OPEN_LOOP, MODE_REPLAY, MODES, RawRun
from .config import ConfigError, LoopConfig, loop_from_dict
from .encoder import CHANNEL_NAMES, EncoderConfig
from .formats import FormatError, WeightSnapshot, read_trace
from .gate import REGIME_NAMES as GATE_REGIMES
from .gate import TONIC_VETO
from .metrics import MetricsReport
from .plant import EVENT_KINDS, REGIME_NAMES as PLANT_REGIMES
from .plant import TONIC

DEFAULT_SNAPSHOT = "default_snapshot.nlws"

# record order within one timestep
_ORDER = ("session", "sample", "regime", "gate", "enc_spike", "res_spike_count", "readout_spike", "pulse", "truth_event")


class SessionError(RuntimeError):
    """Session cannot start (missing snapshot, short trace, bad mode)."""


def default_snapshot_path() -> Path:
    return Path(str(resources.files("neuroloop") / "data" / DEFAULT_SNAPSHOT))


def load_snapshot(path: str | Path | None) -> WeightSnapshot:
    p = Path(path) if path is not None else default_snapshot_path()
    if not p.exists():
        raise SessionError(f"weight snapshot not found: {p}")
    return WeightSnapshot.load(p)


def blank_steps(blank_ms: float, f_in: float) -> int:
    # round first so 2 ms at 2 kHz is exactly 4 steps despite float noise
    return int(math.ceil(round(blank_ms * f_in / 1000.0, 9)))


@dataclass(frozen=True)
class SessionConfig:
    mode: str = "closed_loop"
    duration_s: float = 1200.0
    seed: int = 0
    trace_path: Optional[str] = None
    snapshot_path: Optional[str] = None
    loop: LoopConfig = field(default_factory=LoopConfig)
    encoder: Optional[EncoderConfig] = None  # overrides the snapshot's encoder
    verbose: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.duration_s > 0:
            raise ConfigError("duration_s must be positive")

    @property
    def mode_code(self) -> int:
        return MODES.index(self.mode)


# --- session log -------------------------------------------------------------


class SessionLog:
    """Ordered JSON-lines records; the first record describes the session."""

    def __init__(self, records: list[dict]):
        self.records = records

    @property
    def header(self) -> dict:
        if not self.records or self.records[0].get("type") != "session":
            raise FormatError("session log lacks its header record")
        return self.records[0]

    def of_type(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["type"] == kind]

    def pulse_times(self) -> list[float]:
        return [r["t_s"] for r in self.records if r["type"] == "pulse"]

    def truth(self) -> list[dict]:
        return [r for r in self.records if r["type"] == "truth_event"]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":"), sort_keys=True) + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def read(cls, path: str | Path) -> "SessionLog":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise FormatError(f"cannot read log {path}: {e}") from e
        recs = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                r = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{n}: {e}") from e
            if not isinstance(r, dict) or "t_s" not in r or "type" not in r:
                raise FormatError(f"{path}:{n}: record needs t_s and type")
            recs.append(r)
        log = cls(recs)
        log.header  # validates
        return log

    @classmethod
    def from_raw(cls, raw: RawRun, header: dict, f_in: float, verbose: bool = False) -> "SessionLog":
        steps, order, recs = [], [], []

        def add(step_arr, kind, make):
            step_arr = np.asarray(step_arr, dtype=np.int64)
            steps.append(step_arr)
            order.append(np.full(step_arr.size, _ORDER.index(kind), dtype=np.int64))
            recs.extend(make(i, int(s)) for i, s in enumerate(step_arr.tolist()))

        n = len(raw.samples)
        if verbose:
            xs = raw.samples.tolist()
            add(np.arange(n), "sample", lambda i, s: {"t_s": s / f_in, "type": "sample", "value": xs[i]})
            rc = raw.res_count.tolist()
            add(np.arange(n), "res_spike_count", lambda i, s: {"t_s": s / f_in, "type": "res_spike_count", "count": rc[i]})
        pr = raw.plant_regime.tolist()
        add(raw.plant_t, "regime", lambda i, s: {"t_s": s / f_in, "type": "regime", "regime": PLANT_REGIMES[pr[i]]})
        gr = raw.gate_regime.tolist()
        add(raw.gate_t, "gate", lambda i, s: {"t_s": s / f_in, "type": "gate", "regime": GATE_REGIMES[gr[i]]})
        ch, pol = raw.enc_ch.tolist(), raw.enc_pol.tolist()
        add(
            raw.enc_t,
            "enc_spike",
            lambda i, s: {"t_s": s / f_in, "type": "enc_spike", "channel": CHANNEL_NAMES[ch[i]], "polarity": pol[i]},
        )
        rk = raw.ro_k.tolist()
        add(raw.ro_t, "readout_spike", lambda i, s: {"t_s": s / f_in, "type": "readout_spike", "neuron": rk[i]})
        add(raw.pulse_t, "pulse", lambda i, s: {"t_s": s / f_in, "type": "pulse"})
        truth = sorted(raw.truth, key=lambda e: (e[2], e[1], e[0]))
        add(
            [e[2] for e in truth],
            "truth_event",
            lambda i, s: {
                "t_s": s / f_in,
                "type": "truth_event",
                "kind": EVENT_KINDS[truth[i][0]],
                "start_s": truth[i][1] / f_in,
                "end_s": truth[i][2] / f_in,
            },
        )
        if recs:
            key = np.lexsort((np.concatenate(order), np.concatenate(steps)))
            recs = [recs[k] for k in key.tolist()]
        return cls([header] + recs)


# --- running -----------------------------------------------------------------


@dataclass
class SessionResult:
    config: SessionConfig
    raw: RawRun
    f_in: float
    n_steps: int

    @property
    def duration_s(self) -> float:
        return self.n_steps / self.f_in

    def log(self) -> SessionLog:
        return SessionLog.from_raw(self.raw, self.header(), self.f_in, self.config.verbose)

    def header(self) -> dict:
        c = self.config
        return {
            "t_s": 0.0,
            "type": "session",
            "mode": c.mode,
            "seed": c.seed,
            "f_in": self.f_in,
            "n_steps": self.n_steps,
            "duration_s": self.duration_s,
            "blank_steps": blank_steps(c.loop.blank_ms, self.f_in),
            "latency_steps": c.loop.latency_steps,
            "t_min_ms": c.loop.gate.t_min_ms,
            "loop": c.loop.to_dict(),
        }

    def pulse_times(self) -> np.ndarray:
        return self.raw.pulse_t / self.f_in

    def truth(self) -> list[tuple[str, float, float]]:
        return [(EVENT_KINDS[k], a / self.f_in, b / self.f_in) for k, a, b in self.raw.truth]

    def report(self, bin_hz: float = 5.0) -> MetricsReport:
        return MetricsReport.build(self.truth(), self.pulse_times().tolist(), self.duration_s, bin_hz)

    def plant_regimes(self) -> np.ndarray:
        """Per-step reported plant regime (live modes only)."""
        return _expand(self.raw.plant_t, self.raw.plant_regime, self.n_steps)

    def gate_regimes(self) -> np.ndarray:
        return _expand(self.raw.gate_t, self.raw.gate_regime, self.n_steps)


def _expand(t, values, n) -> np.ndarray:
    out = np.zeros(n, dtype=np.int8)
    if len(t) == 0:
        return out
    bounds = np.append(np.asarray(t, dtype=np.int64), n)
    for a, b, v in zip(bounds[:-1], bounds[1:], values):
        out[a:b] = v
    return out


def run_session(cfg: SessionConfig, snapshot: WeightSnapshot | None = None, trace=None) -> SessionResult:
    """Run one session. ``trace`` (samples, rate) may be passed instead of a path."""
    snap = snapshot if snapshot is not None else load_snapshot(cfg.snapshot_path)
    net = snap.config
    f_in = net.f_in
    n = int(round(cfg.duration_s * f_in))
    enc = cfg.encoder or net.encoder
    samples = None
    if cfg.mode_code == MODE_REPLAY:
        if trace is None:
            if cfg.trace_path is None:
                raise SessionError("replay needs a recorded trace")
            trace = read_trace(cfg.trace_path)
        samples, rate = trace
        if rate != int(f_in):
            raise FormatError(f"trace sampled at {rate} Hz, network expects {f_in} Hz")
        if len(samples) < n:
            raise SessionError(f"trace holds {len(samples)} samples, session needs {n}")
        samples = np.asarray(samples[:n], dtype=np.int16)
    raw = _backend.kernels().run_loop(
        cfg.mode_code,
        n,
        cfg.loop.plant,
        cfg.seed,
        samples,
        enc,
        snap.topology,
        net.neuron,
        net.readout,
        snap.readout_w,
        cfg.loop.gate,
        f_in,
        blank_steps(cfg.loop.blank_ms, f_in),
        cfg.loop.latency_steps,
    )
    return SessionResult(cfg, raw, f_in, n)


def run_replay(cfg: SessionConfig, snapshot: WeightSnapshot | None = None, trace=None) -> SessionResult:
    if cfg.mode != "replay":
        cfg = replace(cfg, mode="replay")
    return run_session(cfg, snapshot, trace)


# --- log checking ------------------------------------------------------------


def check_log(log: SessionLog) -> list[str]:
    """Replay a log against the loop's invariants; returns violations.

    Checks: non-decreasing time; pulse gaps >= t_min; every pulse shares its
    step with a readout-0 spike; no pulse under the tonic veto; in closed
    loop, every evoked response starts exactly ``latency`` steps after a
    pulse and no encoder spike falls inside a blanking window.
    """
    h = log.header
    f_in = float(h["f_in"])
    t_min_s = float(h["t_min_ms"]) / 1000.0
    latency = int(h["latency_steps"])
    nblank = int(h["blank_steps"])
    errors = []

    def step(r):
        return int(round(r["t_s"] * f_in))

    last_t = -math.inf
    for r in log.records:
        if r["t_s"] < last_t:
            errors.append(f"time goes backwards at {r['t_s']}")
            break
        last_t = r["t_s"]

    pulses = [step(r) for r in log.records if r["type"] == "pulse"]
    for a, b in zip(pulses, pulses[1:]):
        if (b - a) / f_in < t_min_s:
            errors.append(f"pulse gap {(b - a) / f_in * 1000:.3f} ms below t_min at {b / f_in}")
    ro0 = {step(r) for r in log.records if r["type"] == "readout_spike" and r["neuron"] == 0}
    for p in pulses:
        if p not in ro0:
            errors.append(f"pulse at {p / f_in} without a readout-0 spike")

    gate = [(step(r), r["regime"]) for r in log.records if r["type"] == "gate"]
    if gate:
        gsteps = [g[0] for g in gate]
        for p in pulses:
            k = int(np.searchsorted(gsteps, p, side="right")) - 1
            if k >= 0 and gate[k][1] == GATE_REGIMES[TONIC_VETO]:
                errors.append(f"pulse at {p / f_in} during tonic veto")

    if h["mode"] == "closed_loop":
        actuated = {p + latency for p in pulses}
        for r in log.records:
            if r["type"] == "truth_event" and r["kind"] == "evoked":
                s = int(round(r["start_s"] * f_in))
                if s not in actuated:
                    errors.append(f"evoked response at {r['start_s']} not caused by a pulse")
        enc = sorted(step(r) for r in log.records if r["type"] == "enc_spike")
        for a in sorted(actuated):
            k = int(np.searchsorted(enc, a))
            if k < len(enc) and enc[k] < a + nblank:
                errors.append(f"encoder spike at {enc[k] / f_in} inside blanking window")
    elif h["mode"] == "open_loop_baseline" and pulses:
        errors.append("open-loop baseline log contains pulses")
    return errors


def pulses_in_plant_regime(result: SessionResult, regime: int = TONIC) -> int:
    reg = result.plant_regimes()
    return int(np.count_nonzero(reg[result.raw.pulse_t] == regime)) if len(result.raw.pulse_t) else 0


def report_from_log(log: SessionLog, bin_hz: float = 5.0) -> MetricsReport:
    h = log.header
    return MetricsReport.build(log.truth(), log.pulse_times(), float(h["duration_s"]), bin_hz)


# --- sweeps ------------------------------------------------------------------


@dataclass
class SweepRow:
    rank: int
    params: dict
    pct_time_ictal: float
    pulse_count: float
    veto_violations: int
    noise_floor_fraction: float
    per_seed: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _canonical(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def apply_params(base: SessionConfig, snap: WeightSnapshot, params: dict) -> SessionConfig:
    """Apply dotted overrides such as ``gate.r_tonic`` or ``encoder.theta_low``."""
    loop = base.loop.to_dict()
    enc = asdict(base.encoder or snap.config.encoder)
    for key, value in params.items():
        section, _, name = key.partition(".")
        if section == "encoder" and name:
            if name not in enc:
                raise ConfigError(f"unknown sweep key {key!r}")
            enc[name] = value
        elif section in ("gate", "plant") and name:
            if name not in loop[section]:
                raise ConfigError(f"unknown sweep key {key!r}")
            loop[section][name] = value
        elif key in ("blank_ms", "latency_steps"):
            loop[key] = value
        else:
            raise ConfigError(f"unknown sweep key {key!r}")
    try:
        encoder = EncoderConfig(**enc)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return replace(base, loop=loop_from_dict(loop), encoder=encoder, verbose=False)


def _run_point(args) -> dict:
    base, snap, params, seeds = args
    cfg = apply_params(base, snap, params)
    rows = []
    for s in seeds:
        res = run_session(replace(cfg, seed=s), snap)
        gate = res.gate_regimes()
        pt = res.raw.pulse_t
        rep = res.report()
        rows.append(
            {
                "seed": s,
                "pct_time_ictal": rep.pct_time_ictal,
                "pulse_count": rep.pulse_count,
                "veto_violations": int(np.count_nonzero(gate[pt] == TONIC_VETO)) if len(pt) else 0,
                "noise_floor_pulses": int(np.count_nonzero(gate[pt] == 0)) if len(pt) else 0,
            }
        )
    return {"params": params, "rows": rows}


def sweep(
    grid: Iterable[dict],
    base: SessionConfig,
    snapshot: WeightSnapshot | None = None,
    seeds: Iterable[int] = (0,),
    workers: int = 1,
) -> list[SweepRow]:
    """Run every grid point over ``seeds`` and rank the results.

    Ranking: zero veto violations first, then lower mean % time ictal, fewer
    pulses, larger noise-floor pulse fraction; remaining ties are broken by
    the canonical JSON of the point, so the order of ``grid`` never matters.
    """
    points = [dict(p) for p in grid]
    if not points:
        raise ValueError("empty sweep grid")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    snap = snapshot if snapshot is not None else load_snapshot(base.snapshot_path)
    points.sort(key=_canonical)
    for p in points:
        apply_params(base, snap, p)  # fail fast on bad keys
    jobs = [(base, snap, p, seeds) for p in points]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    rows = []
    for res in results:
        r = res["rows"]
        pulses = sum(x["pulse_count"] for x in r)
        nf = sum(x["noise_floor_pulses"] for x in r)
        rows.append(
            SweepRow(
                rank=0,
                params=res["params"],
                pct_time_ictal=float(np.mean([x["pct_time_ictal"] for x in r])),
                pulse_count=float(np.mean([x["pulse_count"] for x in r])),
                veto_violations=sum(x["veto_violations"] for x in r),
                noise_floor_fraction=nf / pulses if pulses else 0.0,
                per_seed=r,
            )
        )
    rows.sort(
        key=lambda row: (
            row.veto_violations > 0,
            row.pct_time_ictal,
            row.pulse_count,
            -row.noise_floor_fraction,
            _canonical(row.params),
        )
    )
    for i, row in enumerate(rows, 1):
        row.rank = i
    return rows


__all__ = [
    "MODE_CLOSED_LOOP",
    "MODE_OPEN_LOOP",
    "MODE_REPLAY",
    "SessionConfig",
    "SessionError",
    "SessionLog",
    "SessionResult",
    "apply_params",
    "blank_steps",
    "check_log",
    "default_snapshot_path",
    "load_snapshot",
    "pulses_in_plant_regime",
    "report_from_log",
    "run_replay",
    "run_session",
    "sweep",
]
