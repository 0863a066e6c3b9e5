"""Online R-STDP training of the two-neuron readout and segment evaluation.

Each segment is preceded by one second of zero input. Encoder and
reservoir restart from rest at every segment boundary (they hold no
trainable state, and one silent second returns them to rest anyway), so
the tap raster of every segment is computed once and reused across
epochs. The readout runs continuously through the shuffled segment
sequence with plasticity active at every timestep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .config import NetworkConfig
from .dataset import Dataset, Segment
from .fixed_point import Prng
from .formats import WeightSnapshot
from .readout import LABELS, NO_SEIZURE, SEIZURE, classify_segment, init_readout_weights, label_index, lut_from_params
from .reservoir import Topology, build_topology

log = logging.getLogger(__name__)

# sub-stream constants keep readout init, split and shuffles independent of
# the topology stream even when seeds coincide
_INIT_STREAM = 0x5EED_0001
_SPLIT_STREAM = 0x5EED_0002
_ORDER_STREAM = 0x5EED_0003


@dataclass
class TrainResult:
    snapshot: WeightSnapshot
    initial_w: np.ndarray
    train_idx: list[int]
    test_idx: list[int]
    train_accuracy: list[float] = field(default_factory=list)
    test_accuracy: list[float] = field(default_factory=list)


def initial_snapshot(cfg: NetworkConfig, seed: int) -> WeightSnapshot:
    topo = build_topology(cfg.topology_seed, cfg.reservoir)
    w = init_readout_weights(Prng(seed ^ _INIT_STREAM), topo.n_taps, cfg.readout)
    return WeightSnapshot(cfg, topo, w, lut_from_params(cfg.lut))


def with_lead_in(samples: np.ndarray, f_in: float) -> np.ndarray:
    pad = np.zeros(int(round(f_in)), dtype=np.int16)
    return np.concatenate([pad, np.asarray(samples, dtype=np.int16)])


def segment_rasters(dataset: Dataset, cfg: NetworkConfig, topo: Topology) -> list:
    k = _backend.kernels()
    return [
        k.tap_raster(with_lead_in(dataset.samples(s), dataset.f_in), cfg.encoder, topo, cfg.neuron)
        for s in dataset.segments
    ]


def split_segments(segments: list[Segment], seed: int, test_fraction: float) -> tuple[list[int], list[int]]:
    """Stratified seeded split; each label keeps round(fraction * n) test items."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    rng = Prng(seed ^ _SPLIT_STREAM)
    train, test = [], []
    for label in LABELS:
        idx = [i for i, s in enumerate(segments) if s.label == label]
        for i in range(len(idx) - 1, 0, -1):
            j = rng.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        n_test = int(np.floor(test_fraction * len(idx) + 0.5))
        test += idx[:n_test]
        train += idx[n_test:]
    return sorted(train), sorted(test)


def infer_counts(rasters, idx, w, cfg: NetworkConfig) -> np.ndarray:
    """Readout spike counts per segment, each from rest, plasticity off."""
    k = _backend.kernels()
    lut = lut_from_params(cfg.lut)
    return k.readout_epoch(rasters, list(idx), None, w, cfg.readout, lut, False, True)


def accuracy(counts: np.ndarray, labels: list[str]) -> float:
    if not labels:
        return float("nan")
    hits = sum(classify_segment(c) == lab for c, lab in zip(counts, labels))
    return hits / len(labels)


def train(
    dataset: Dataset,
    cfg: NetworkConfig = NetworkConfig(),
    epochs: int = 50,
    seed: int = 0,
    test_fraction: float = 0.25,
) -> TrainResult:
    labels = dataset.labels()
    if not dataset.segments:
        raise ValueError("empty dataset")
    if set(labels) != {SEIZURE, NO_SEIZURE}:
        raise ValueError("training needs both labels")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    if abs(dataset.f_in - cfg.f_in) > 1e-9:
        raise ValueError(f"dataset sampled at {dataset.f_in} Hz, network configured for {cfg.f_in} Hz")
    snap = initial_snapshot(cfg, seed)
    w0 = snap.readout_w.copy()
    w = snap.readout_w.copy()
    train_idx, test_idx = split_segments(dataset.segments, seed, test_fraction)
    rasters = segment_rasters(dataset, cfg, snap.topology)
    targets = [label_index(x) for x in labels]
    k = _backend.kernels()
    rng = Prng(seed ^ _ORDER_STREAM)
    res = TrainResult(snap, w0, train_idx, test_idx)
    for epoch in range(epochs):
        order = list(train_idx)
        for i in range(len(order) - 1, 0, -1):
            j = rng.below(i + 1)
            order[i], order[j] = order[j], order[i]
        k.readout_epoch(rasters, order, targets, w, cfg.readout, snap.lut, True, False)
        res.train_accuracy.append(accuracy(infer_counts(rasters, train_idx, w, cfg), [labels[i] for i in train_idx]))
        res.test_accuracy.append(accuracy(infer_counts(rasters, test_idx, w, cfg), [labels[i] for i in test_idx]))
        log.info("epoch %d: train %.3f test %.3f", epoch + 1, res.train_accuracy[-1], res.test_accuracy[-1])
    res.snapshot = WeightSnapshot(cfg, snap.topology, w, snap.lut)
    return res


def evaluate(snapshot: WeightSnapshot, dataset: Dataset, idx=None) -> tuple[list[str], np.ndarray]:
    """Predicted labels and readout counts for ``dataset.segments[idx]``."""
    idx = list(range(len(dataset.segments))) if idx is None else list(idx)
    rasters = segment_rasters(dataset, snapshot.config, snapshot.topology)
    counts = infer_counts(rasters, idx, snapshot.readout_w, snapshot.config)
    return [classify_segment(c) for c in counts], counts
