"""Command line: ``neuroloop gen | train | run | sweep | eval``.

Exit codes: 0 success, 2 usage or configuration error, 3 malformed input
file. Every file written is a pure function of inputs, flags and seed.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .dataset import generate_dataset, load_dataset
from .formats import FormatError, read_trace
from .harness import SessionConfig, SessionError, SessionLog, check_log, load_snapshot, report_from_log, run_session, sweep
from .training import train

EXIT_OK, EXIT_USAGE, EXIT_FORMAT = 0, 2, 3


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _cmd_gen(args) -> int:
    net, loop = load_config(args.config)
    ds = generate_dataset(
        args.out,
        args.seed,
        n_recordings=args.recordings,
        duration_s=args.duration,
        segment_s=args.segment,
        f_in=net.f_in,
        plant=loop.plant,
    )
    counts = {lab: ds.labels().count(lab) for lab in sorted(set(ds.labels()))}
    print(_dump({"out": str(args.out), "recordings": len(ds.traces), "segments": counts}), end="")
    return EXIT_OK


def _cmd_train(args) -> int:
    net, _ = load_config(args.config)
    ds = load_dataset(args.data)
    res = train(ds, net, epochs=args.epochs, seed=args.seed, test_fraction=args.test_fraction)
    res.snapshot.save(args.out)
    report = {
        "epochs": args.epochs,
        "seed": args.seed,
        "train_segments": len(res.train_idx),
        "test_segments": len(res.test_idx),
        "train_accuracy": res.train_accuracy,
        "test_accuracy": res.test_accuracy,
    }
    if args.report:
        Path(args.report).write_text(_dump(report))
    final = res.test_accuracy[-1] if res.test_accuracy else None
    print(_dump({"snapshot": str(args.out), "test_accuracy": final}), end="")
    return EXIT_OK


def _write_plot_csv(out: Path, result, report) -> None:
    with open(out / "hist.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bin_lo_hz", "bin_hi_hz", "probability"])
        edges = report.hist_edges_hz
        for k, p in enumerate(report.hist_prob):
            w.writerow([edges[k], edges[k + 1], repr(p)])
    with open(out / "ictal.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["kind", "start_s", "end_s"])
        for kind, a, b in sorted(result.truth(), key=lambda e: (e[1], e[2], e[0])):
            w.writerow([kind, repr(a), repr(b)])


def _cmd_run(args) -> int:
    _, loop = load_config(args.config)
    cfg = SessionConfig(
        mode=args.mode,
        duration_s=args.duration,
        seed=args.seed,
        trace_path=args.trace,
        snapshot_path=args.snapshot,
        loop=loop,
        verbose=args.verbose,
    )
    snap = load_snapshot(args.snapshot)
    trace = read_trace(args.trace) if args.trace else None
    if trace is not None and args.mode != "replay":
        raise ConfigError("--trace is only meaningful with --mode replay")
    result = run_session(cfg, snap, trace)
    report = result.report(args.bin_hz)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.log().write(out / "session.jsonl")
    (out / "metrics.json").write_text(_dump(report.to_dict()))
    if args.csv:
        _write_plot_csv(out, result, report)
    print(_dump({"out": str(out), "pct_time_ictal": report.pct_time_ictal, "pulse_count": report.pulse_count}), end="")
    return EXIT_OK


def _load_grid(path: str) -> list[dict]:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read grid {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from e
    if isinstance(data, dict):
        # {"gate.r_tonic": [..], ...} expands to the cartesian product
        keys = sorted(data)
        values = [v if isinstance(v, list) else [v] for v in (data[k] for k in keys)]
        return [dict(zip(keys, combo)) for combo in itertools.product(*values)]
    if isinstance(data, list) and all(isinstance(p, dict) for p in data):
        return data
    raise ConfigError("grid must be a list of objects or an object of lists")


def _cmd_sweep(args) -> int:
    _, loop = load_config(args.config)
    grid = _load_grid(args.grid)
    if not grid:
        raise ConfigError("empty sweep grid")
    base = SessionConfig(mode="closed_loop", duration_s=args.duration, snapshot_path=args.snapshot, loop=loop)
    rows = sweep(grid, base, load_snapshot(args.snapshot), seeds=args.seeds, workers=args.workers)
    keys = sorted({k for r in rows for k in r.params})
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["rank", *keys, "pct_time_ictal", "pulse_count", "veto_violations", "noise_floor_fraction"])
        for r in rows:
            w.writerow(
                [r.rank, *(r.params.get(k, "") for k in keys), repr(r.pct_time_ictal), repr(r.pulse_count), r.veto_violations, repr(r.noise_floor_fraction)]
            )
    best = rows[0]
    print(_dump({"out": str(args.out), "best": best.params, "pct_time_ictal": best.pct_time_ictal}), end="")
    return EXIT_OK


def _cmd_eval(args) -> int:
    per_log = []
    for path in args.logs:
        lg = SessionLog.read(path)
        rep = report_from_log(lg, args.bin_hz)
        d = rep.to_dict()
        d["log"] = str(path)
        d["mode"] = lg.header["mode"]
        d["violations"] = check_log(lg)
        per_log.append(d)
    pcts = [d["pct_time_ictal"] for d in per_log]
    summary = {
        "logs": per_log,
        "mean_pct_time_ictal": float(np.mean(pcts)),
        "sd_pct_time_ictal": float(np.std(pcts, ddof=1)) if len(pcts) > 1 else 0.0,
        "total_violations": sum(len(d["violations"]) for d in per_log),
    }
    text = _dump(summary)
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neuroloop", description="Closed-loop reservoir seizure controller simulator")
    p.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="simulate a labelled training dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=5)
    g.add_argument("--recordings", type=int, default=6)
    g.add_argument("--duration", type=float, default=1200.0, help="seconds per recording")
    g.add_argument("--segment", type=float, default=50.0, help="segment length in seconds")
    g.add_argument("--config")

    t = sub.add_parser("train", help="train the readout, write a weight snapshot")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--test-fraction", type=float, default=0.25)
    t.add_argument("--report", help="write per-epoch accuracies as JSON")
    t.add_argument("--config")

    r = sub.add_parser("run", help="run one session")
    r.add_argument("--mode", choices=("closed_loop", "replay", "open_loop_baseline"), default="closed_loop")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--duration", type=float, default=1200.0)
    r.add_argument("--snapshot", help="weight snapshot (default: shipped snapshot)")
    r.add_argument("--trace", help="recorded trace for replay")
    r.add_argument("--config")
    r.add_argument("--out", default="session")
    r.add_argument("--bin-hz", type=float, default=5.0)
    r.add_argument("--csv", action="store_true", help="also write plot data as CSV")
    r.add_argument("--verbose", action="store_true", help="log every sample and reservoir spike count")

    s = sub.add_parser("sweep", help="rank gate/encoder/plant settings")
    s.add_argument("--grid", required=True, help="JSON grid of dotted parameter overrides")
    s.add_argument("--seeds", type=int, nargs="+", default=[0])
    s.add_argument("--duration", type=float, default=1200.0)
    s.add_argument("--snapshot")
    s.add_argument("--config")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default="sweep.csv")

    e = sub.add_parser("eval", help="metrics from existing session logs")
    e.add_argument("logs", nargs="+")
    e.add_argument("--bin-hz", type=float, default=5.0)
    e.add_argument("--out")
    return p


_COMMANDS = {"gen": _cmd_gen, "train": _cmd_train, "run": _cmd_run, "sweep": _cmd_sweep, "eval": _cmd_eval}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except FormatError as e:
        print(f"neuroloop: format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except (ConfigError, SessionError, FileNotFoundError, ValueError) as e:
        print(f"neuroloop: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
