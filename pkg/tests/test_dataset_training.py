import hashlib

import numpy as np
import pytest

from neuroloop.config import NetworkConfig
from neuroloop.dataset import cut_segments, generate_dataset, load_dataset
from neuroloop.formats import WeightSnapshot, read_labels
from neuroloop.plant import ICTAL_PHENOTYPE, GroundTruthEvent
from neuroloop.readout import NO_SEIZURE, SEIZURE
from neuroloop.training import evaluate, initial_snapshot, split_segments, train


def tree_hash(root):
    h = hashlib.sha256()
    for p in sorted(root.iterdir()):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    ds = generate_dataset(root, seed=9, n_recordings=2, duration_s=400.0)
    return root, ds


def test_generation_is_deterministic(small, tmp_path):
    root, _ = small
    generate_dataset(tmp_path, seed=9, n_recordings=2, duration_s=400.0)
    assert tree_hash(tmp_path) == tree_hash(root)


def test_segments_hold_interictal_and_no_seizure(small):
    root, ds = small
    assert set(ds.labels()) == {SEIZURE, NO_SEIZURE}
    for i in range(2):
        events = read_labels(root / f"rec{i:02d}.events.jsonl")
        for seg in (s for s in ds.segments if s.recording == i):
            inside = [e for e in events if e["start_s"] < seg.end_s and e["end_s"] > seg.start_s]
            assert any(e["label"] == "interictal" for e in inside)
            assert not any(e["label"] == "ictal" for e in inside)
            assert len(ds.samples(seg)) == 50 * 2000


def test_load_matches_generate(small):
    root, ds = small
    back = load_dataset(root)
    assert back.segments == ds.segments
    assert all(np.array_equal(a, b) for a, b in zip(back.traces, ds.traces))


def test_cut_segments_by_hand():
    truth = [
        GroundTruthEvent("interictal", 10.0, 10.4),
        GroundTruthEvent("interictal", 60.0, 60.4),
        GroundTruthEvent("ictal", 90.0, 120.0),
        GroundTruthEvent("interictal", 160.0, 160.4),
    ]
    assert cut_segments(truth, 200.0, 50.0) == [(0.0, 50.0), (150.0, 200.0)]


def test_generation_errors(tmp_path):
    with pytest.raises(ValueError):
        generate_dataset(tmp_path, 1, n_recordings=1, duration_s=100.0, phenotypes=[ICTAL_PHENOTYPE])
    with pytest.raises(ValueError):
        generate_dataset(tmp_path, 1, duration_s=10.0)


def test_split_is_stratified(small):
    _, ds = small
    tr, te = split_segments(ds.segments, 0, 0.25)
    assert sorted(tr + te) == list(range(len(ds.segments)))
    for lab in (SEIZURE, NO_SEIZURE):
        n = sum(s.label == lab for s in ds.segments)
        assert sum(ds.segments[i].label == lab for i in te) == int(np.floor(0.25 * n + 0.5))
    assert split_segments(ds.segments, 0, 0.25) == (tr, te)
    with pytest.raises(ValueError):
        split_segments(ds.segments, 0, 1.0)


def test_zero_epochs_returns_initialization(small):
    _, ds = small
    res = train(ds, NetworkConfig(), epochs=0, seed=4)
    assert np.array_equal(res.snapshot.readout_w, res.initial_w)
    assert np.array_equal(res.initial_w, initial_snapshot(NetworkConfig(), 4).readout_w)
    assert res.test_accuracy == []


def test_reloaded_snapshot_reproduces_predictions(small, tmp_path):
    _, ds = small
    res = train(ds, NetworkConfig(), epochs=2, seed=1)
    res.snapshot.save(tmp_path / "s.nlws")
    back = WeightSnapshot.load(tmp_path / "s.nlws")
    p1, c1 = evaluate(res.snapshot, ds, res.test_idx)
    p2, c2 = evaluate(back, ds, res.test_idx)
    assert p1 == p2 and np.array_equal(c1, c2)
    labels = [ds.segments[i].label for i in res.test_idx]
    assert sum(a == b for a, b in zip(p1, labels)) / len(labels) == res.test_accuracy[-1]


def test_train_errors(small):
    _, ds = small
    with pytest.raises(ValueError):
        train(ds, NetworkConfig(f_in=4000.0), epochs=1)
    with pytest.raises(ValueError):
        train(ds, NetworkConfig(), epochs=-1)
