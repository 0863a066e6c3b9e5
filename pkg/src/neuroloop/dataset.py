"""Synthetic training corpus: plant recordings cut into labelled segments.

Each recording is one plant run of a single phenotype. It is cut into
fixed-length segments; a segment is kept when it contains at least one
ground-truth interictal event and does not overlap an ictal interval. The
label is the recording's phenotype (``seizure`` for the ictal phenotype).

Directory layout::

    manifest.json           recordings + shuffled segment list
    rec00.nlrc              trace (see formats)
    rec00.labels.jsonl      kept segments of this recording
    rec00.events.jsonl      ground-truth events of this recording
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fixed_point import Prng
from .formats import FormatError, read_labels, read_trace, write_labels, write_trace
from .plant import ICTAL_PHENOTYPE, INTERICTAL_PHENOTYPE, PlantConfig, simulate
from .readout import NO_SEIZURE, SEIZURE

DEFAULT_PHENOTYPES = (
    ICTAL_PHENOTYPE,
    INTERICTAL_PHENOTYPE,
    ICTAL_PHENOTYPE,
    INTERICTAL_PHENOTYPE,
    ICTAL_PHENOTYPE,
    INTERICTAL_PHENOTYPE,
)
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class Segment:
    recording: int
    start_s: float
    end_s: float
    label: str


@dataclass
class Dataset:
    f_in: float
    traces: list[np.ndarray]
    segments: list[Segment]

    def samples(self, seg: Segment) -> np.ndarray:
        a = int(round(seg.start_s * self.f_in))
        b = int(round(seg.end_s * self.f_in))
        return self.traces[seg.recording][a:b]

    def labels(self) -> list[str]:
        return [s.label for s in self.segments]


def cut_segments(truth, duration_s: float, segment_s: float) -> list[tuple[float, float]]:
    """Grid segments with interictal activity and no ictal overlap."""
    n = int(duration_s // segment_s)
    ictal = [(e.start_s, e.end_s) for e in truth if e.kind == "ictal"]
    inter = [(e.start_s, e.end_s) for e in truth if e.kind == "interictal"]
    out = []
    for k in range(n):
        a, b = k * segment_s, (k + 1) * segment_s
        if any(s < b and e > a for s, e in ictal):
            continue
        if any(s < b and e > a for s, e in inter):
            out.append((a, b))
    return out


def generate_dataset(
    out_dir: str | Path,
    seed: int,
    n_recordings: int = 6,
    duration_s: float = 1200.0,
    phenotypes=None,
    segment_s: float = 50.0,
    f_in: float = 2000.0,
    plant: PlantConfig | None = None,
) -> Dataset:
    """Simulate recordings, write traces/labels/events and return the dataset."""
    if duration_s < segment_s:
        raise ValueError("duration shorter than one segment")
    if phenotypes is None:
        phenotypes = [DEFAULT_PHENOTYPES[i % len(DEFAULT_PHENOTYPES)] for i in range(n_recordings)]
    phenotypes = list(phenotypes)
    if len(phenotypes) != n_recordings:
        raise ValueError("need one phenotype per recording")
    if set(phenotypes) != {ICTAL_PHENOTYPE, INTERICTAL_PHENOTYPE}:
        raise ValueError("a trainable dataset needs both phenotypes")
    base = plant or PlantConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = Prng(seed)
    traces, segments, recs = [], [], []
    for i, ph in enumerate(phenotypes):
        rec_seed = rng.next_u64()
        samples, truth, _ = simulate(base.with_phenotype(ph), rec_seed, duration_s, f_in)
        label = SEIZURE if ph == ICTAL_PHENOTYPE else NO_SEIZURE
        name = f"rec{i:02d}"
        write_trace(out / f"{name}.nlrc", samples, int(f_in))
        cuts = cut_segments(truth, duration_s, segment_s)
        write_labels(out / f"{name}.labels.jsonl", [{"start_s": a, "end_s": b, "label": label} for a, b in cuts])
        write_labels(
            out / f"{name}.events.jsonl",
            [{"start_s": e.start_s, "end_s": e.end_s, "label": e.kind} for e in truth],
        )
        traces.append(samples)
        segments.extend(Segment(i, a, b, label) for a, b in cuts)
        recs.append({"name": name, "phenotype": ph, "seed": rec_seed})
    if not segments:
        raise ValueError("no segment contains interictal activity; increase duration")
    order = _shuffle(len(segments), rng)
    segments = [segments[k] for k in order]
    manifest = {
        "version": 1,
        "seed": seed,
        "f_in": f_in,
        "duration_s": duration_s,
        "segment_s": segment_s,
        "plant": base.to_dict(),
        "recordings": recs,
        "segments": [
            {"recording": s.recording, "start_s": s.start_s, "end_s": s.end_s, "label": s.label}
            for s in segments
        ],
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return Dataset(f_in, traces, segments)


def _shuffle(n: int, rng: Prng) -> list[int]:
    idx = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def load_dataset(path: str | Path) -> Dataset:
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read dataset manifest in {root}: {e}") from e
    f_in = float(manifest["f_in"])
    traces = []
    for rec in manifest["recordings"]:
        x, rate = read_trace(root / f"{rec['name']}.nlrc")
        if rate != int(f_in):
            raise FormatError(f"{rec['name']}: sample rate {rate} != dataset f_in {f_in}")
        traces.append(x)
        read_labels(root / f"{rec['name']}.labels.jsonl")  # validates the file
    segments = [Segment(int(s["recording"]), float(s["start_s"]), float(s["end_s"]), s["label"]) for s in manifest["segments"]]
    return Dataset(f_in, traces, segments)
