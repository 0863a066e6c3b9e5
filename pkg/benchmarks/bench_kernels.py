"""Compiled core vs pure-Python kernels on the hot loops.

    python3 benchmarks/bench_kernels.py            # default sizes
    python3 benchmarks/bench_kernels.py --json out.json

The closed-loop row is the throughput figure: simulated seconds per wall
second at f_in = 2 kHz with the 128-neuron reservoir, single-threaded.
"""

from __future__ import annotations

import argparse
import json
import platform
import time

from neuroloop import _backend, _pykernels
from neuroloop._raw import MODE_CLOSED_LOOP, MODE_OPEN_LOOP
from neuroloop.gate import GateConfig
from neuroloop.harness import blank_steps, load_snapshot
from neuroloop.plant import PlantConfig


def timed(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(mod, snap, seconds, repeat):
    c = snap.config
    n = int(seconds * c.f_in)
    plant = PlantConfig()

    def loop(mode):
        return lambda: mod.run_loop(
            mode, n, plant, 1, None, c.encoder, snap.topology, c.neuron, c.readout,
            snap.readout_w, GateConfig(), c.f_in, blank_steps(2.0, c.f_in), 1,
        )

    rows = {}
    rows["plant"], _ = timed(lambda: mod.simulate_plant(plant, 1, seconds, c.f_in), repeat)
    rows["open_loop"], raw = timed(loop(MODE_OPEN_LOOP), repeat)
    rows["closed_loop"], _ = timed(loop(MODE_CLOSED_LOOP), repeat)
    rows["tap_raster"], _ = timed(lambda: mod.tap_raster(raw.samples, c.encoder, snap.topology, c.neuron), repeat)
    return {k: seconds / v for k, v in rows.items()}, rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=1200.0, help="simulated seconds for the compiled core")
    ap.add_argument("--python-seconds", type=float, default=30.0, help="simulated seconds for the Python kernels")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args(argv)

    snap = load_snapshot(None)
    results = {"machine": platform.processor() or platform.machine(), "python": platform.python_version()}
    core = _backend.compiled()
    backends = [("python", _pykernels, args.python_seconds, 1)]
    if core is not None:
        backends.insert(0, ("compiled", core, args.seconds, args.repeat))
    else:
        print("compiled core not built; only the Python kernels are measured")

    print(f"{'kernel':<12} {'backend':<9} {'sim s':>7} {'wall s':>8} {'x real time':>12}")
    for name, mod, seconds, repeat in backends:
        speed, wall = bench(mod, snap, seconds, repeat)
        results[name] = {"sim_seconds": seconds, "wall_seconds": wall, "x_real_time": speed}
        for k in speed:
            print(f"{k:<12} {name:<9} {seconds:>7.0f} {wall[k]:>8.3f} {speed[k]:>12.1f}")
    if core is not None:
        ratio = {k: results["compiled"]["x_real_time"][k] / results["python"]["x_real_time"][k] for k in results["python"]["x_real_time"]}
        results["speedup"] = ratio
        print("speed-up of compiled over Python: " + ", ".join(f"{k} {v:.0f}x" for k, v in ratio.items()))
        cl = results["compiled"]["x_real_time"]["closed_loop"]
        print(f"closed-loop throughput {cl:.0f}x real time ({'meets' if cl >= 50 else 'misses'} the 50x target)")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(results, f, indent=1, sort_keys=True, default=float)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
