import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neuroloop.encoder import SpikeEvent
from neuroloop.reservoir import (
    FormatError,
    NeuronParams,
    ReservoirParams,
    ReservoirState,
    Topology,
    build_topology,
    export_sram_image,
    import_sram_image,
    membrane_image,
    pack12,
    reservoir_step,
    unpack12,
    weight_image,
)

from chain_check import compare_chain
from oracles import ScalarReservoir


@pytest.fixture(scope="module")
def topo():
    return build_topology(42)


def test_topology_structure(topo):
    p = ReservoirParams()
    w = topo.weights
    assert w.shape == (128, 128) and w.dtype == np.int8
    assert not np.diagonal(w).any()
    assert (w[: p.n_exc] >= 0).all() and (w[p.n_exc :] <= 0).all()
    density = np.count_nonzero(w) / (128 * 127)
    assert abs(density - p.p_conn) < 0.02
    mags = np.abs(w[w != 0]).astype(float)
    assert abs(mags.mean() - p.mu) < 2.0
    for posts in topo.input_posts:
        assert len(posts) == p.fan_out and len(set(posts.tolist())) == p.fan_out
        assert (posts < p.n_exc).all()
    assert topo.taps.tolist() == list(range(64))
    assert topo.n_edges() == len(topo.edges())


def test_topology_is_seeded(topo):
    assert build_topology(42) == topo
    assert build_topology(43) != topo


def test_params_validation():
    with pytest.raises(ValueError):
        ReservoirParams(n_exc=0)
    with pytest.raises(ValueError):
        ReservoirParams(n_taps=200)
    with pytest.raises(ValueError):
        ReservoirParams(w_in=300)
    with pytest.raises(ValueError):
        NeuronParams(theta=0)


def test_single_step_by_hand():
    w = np.zeros((3, 3), dtype=np.int8)
    w[0, 1] = 100
    w[2, 1] = -50
    topo = Topology(3, 2, w, (np.array([0]), np.array([2])), (np.array([600], np.int16), np.array([10], np.int16)), np.array([0, 1]))
    nrn = NeuronParams(lam=128, theta=512, v_reset=0)
    stt = ReservoirState.zeros(3)
    fired = reservoir_step(stt, topo, nrn, SpikeEvent(0, 0, 1))
    assert fired.tolist() == [True, False, False] and stt.v.tolist() == [0, 0, 0]
    fired = reservoir_step(stt, topo, nrn, SpikeEvent(1, 1, -1))
    assert fired.tolist() == [False, False, False]
    assert stt.v.tolist() == [0, 100, -10]
    reservoir_step(stt, topo, nrn)
    assert stt.v.tolist() == [0, 50, -5]


def test_membrane_saturates_at_12_bits():
    n = 4
    w = np.zeros((n, n), dtype=np.int8)
    posts = (np.arange(n), np.arange(n))
    big = (np.full(n, 1500, np.int16), np.full(n, 1500, np.int16))
    topo = Topology(n, n, w, posts, big, np.arange(n))
    nrn = NeuronParams(lam=255, theta=2047, v_reset=0)
    stt = ReservoirState.zeros(n)
    ref = ScalarReservoir(w.tolist(), posts, big, 255, 2047, 0)
    for t in range(5):
        reservoir_step(stt, topo, nrn, SpikeEvent(t, 0, -1))
        ref.step(0, -1)
        assert stt.v.tolist() == ref.v
    assert stt.v.min() == -2048


@pytest.mark.parametrize("n_total", [128, 256])
def test_matches_scalar_reference(n_total):
    bad, stats = compare_chain(n_total, 3000, seed=n_total, learn=False)
    assert bad is None, f"diverged at step {bad}"
    assert stats["res_spikes"] > 0 and stats["v_min"] < 0


def test_image_sizes():
    hw = ReservoirParams.hardware_profile()
    topo = build_topology(1, hw)
    assert len(weight_image(topo)) == 65536
    assert len(membrane_image(ReservoirState.zeros(256))) == 384


@given(st.lists(st.integers(-2048, 2047), max_size=64))
def test_pack12_round_trip(vals):
    data = pack12(vals)
    assert len(data) == (12 * len(vals) + 7) // 8
    assert unpack12(data, len(vals)).tolist() == vals


def test_pack12_rejects_out_of_range():
    with pytest.raises(ValueError):
        pack12([2048])


def test_sram_image_round_trip(topo):
    stt = ReservoirState.zeros(128)
    rng = np.random.default_rng(0)
    for t in range(50):
        reservoir_step(stt, topo, NeuronParams(), SpikeEvent(t, t % 2, 1))
    stt.v = rng.integers(-2048, 2048, 128).astype(np.int16)
    img = export_sram_image(topo, stt)
    w, back = import_sram_image(img)
    assert np.array_equal(w, topo.weights)
    assert np.array_equal(back.v, stt.v) and np.array_equal(back.spiked_prev, stt.spiked_prev)
    assert export_sram_image(Topology(128, 118, w, topo.input_posts, topo.input_weights, topo.taps), back) == img


def test_sram_image_rejects_garbage(topo):
    img = export_sram_image(topo, ReservoirState.zeros(128))
    with pytest.raises(FormatError):
        import_sram_image(b"XXXX" + img[4:])
    with pytest.raises(FormatError):
        import_sram_image(img[:-1])
    with pytest.raises(FormatError):
        import_sram_image(img[:4] + b"\x09\x00" + img[6:])
