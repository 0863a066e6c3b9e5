"""Fixed-point LIF reservoir with frozen random weights.

The hardware updates neurons one at a time on a shared processing unit, but
every update reads the *previous* step's spike vector, so the sweep is
order-independent and can be written as one synchronous vector update.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .fixed_point import I8, I12, Prng

SRAM_MAGIC = b"NLSR"
SRAM_VERSION = 1


class FormatError(ValueError):
    """Raised on malformed binary images, traces and snapshots."""


@dataclass(frozen=True)
class ReservoirParams:
    n_total: int = 128
    n_exc: int = 118
    p_conn: float = 0.1
    mu: float = 64.0
    sigma: float = 12.0
    n_taps: int = 64
    fan_out: int = 40
    w_in: int = 96

    def __post_init__(self):
        if self.n_total <= 0 or not 0 < self.n_exc <= self.n_total:
            raise ValueError("invalid neuron counts")
        if not 0.0 <= self.p_conn <= 1.0:
            raise ValueError("p_conn must lie in [0, 1]")
        if not 0 < self.n_taps <= self.n_exc:
            raise ValueError("taps are drawn from excitatory neurons; need 0 < n_taps <= n_exc")
        if not 0 <= self.fan_out <= self.n_exc:
            raise ValueError("fan_out must not exceed the excitatory pool")
        if not I8.contains(self.w_in):
            raise ValueError("w_in must fit a signed byte")

    @property
    def n_inh(self) -> int:
        return self.n_total - self.n_exc

    @classmethod
    def hardware_profile(cls, **kw) -> "ReservoirParams":
        """256 neurons, same excitatory fraction as the 118/10 software layout."""
        return cls(n_total=256, n_exc=236, **kw)


@dataclass(frozen=True)
class NeuronParams:
    lam: int = 230
    theta: int = 512
    v_reset: int = 0

    def __post_init__(self):
        if not 0 <= self.lam <= 255:
            raise ValueError("lam must be an unsigned byte")
        if self.theta <= self.v_reset:
            raise ValueError("theta must exceed v_reset")


@dataclass
class Topology:
    n_total: int
    n_exc: int
    weights: np.ndarray  # int8 [pre, post]
    input_posts: tuple[np.ndarray, np.ndarray]  # per channel, int32 neuron ids
    input_weights: tuple[np.ndarray, np.ndarray]  # per channel, int16
    taps: np.ndarray  # int32

    @property
    def n_inh(self) -> int:
        return self.n_total - self.n_exc

    @property
    def n_taps(self) -> int:
        return len(self.taps)

    def edges(self) -> list[tuple[int, int, int]]:
        pre, post = np.nonzero(self.weights)
        return [(int(i), int(j), int(self.weights[i, j])) for i, j in zip(pre, post)]

    def n_edges(self) -> int:
        return int(np.count_nonzero(self.weights))

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (
            self.n_total == other.n_total
            and self.n_exc == other.n_exc
            and np.array_equal(self.weights, other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.input_posts, other.input_posts))
            and all(np.array_equal(a, b) for a, b in zip(self.input_weights, other.input_weights))
            and np.array_equal(self.taps, other.taps)
        )


@dataclass
class ReservoirState:
    v: np.ndarray
    spiked_prev: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ReservoirState":
        return cls(np.zeros(n, dtype=np.int16), np.zeros(n, dtype=bool))

    def copy(self) -> "ReservoirState":
        return ReservoirState(self.v.copy(), self.spiked_prev.copy())


def build_topology(seed: int, params: ReservoirParams = ReservoirParams()) -> Topology:
    """Draw a reservoir from ``seed``.

    Draw order is fixed: one uniform per ordered pair (pre-major), a gaussian
    magnitude for each accepted edge, then a partial Fisher-Yates pick of
    input targets for the low and the high channel.
    """
    n, n_exc = params.n_total, params.n_exc
    rng = Prng(seed)
    w = np.zeros((n, n), dtype=np.int8)
    for i in range(n):
        sign = 1 if i < n_exc else -1
        for j in range(n):
            if i == j:
                continue
            if rng.uniform() < params.p_conn:
                mag = int(np.floor(rng.gaussian(params.mu, params.sigma) + 0.5))
                w[i, j] = sign * min(max(mag, 0), 127)
    posts, weights = [], []
    for _channel in range(2):
        ids = list(range(n_exc))
        for k in range(params.fan_out):
            r = k + rng.below(n_exc - k)
            ids[k], ids[r] = ids[r], ids[k]
        chosen = np.array(sorted(ids[: params.fan_out]), dtype=np.int32)
        posts.append(chosen)
        weights.append(np.full(len(chosen), params.w_in, dtype=np.int16))
    taps = np.arange(params.n_taps, dtype=np.int32)
    return Topology(n, n_exc, w, (posts[0], posts[1]), (weights[0], weights[1]), taps)


def input_drive(topo: Topology, channel: int, polarity: int) -> np.ndarray:
    d = np.zeros(topo.n_total, dtype=np.int32)
    d[topo.input_posts[channel]] += polarity * topo.input_weights[channel].astype(np.int32)
    return d


def reservoir_step(
    st: ReservoirState,
    topo: Topology,
    params: NeuronParams,
    in_spike=None,
) -> np.ndarray:
    """Advance one timestep in place and return the boolean fired vector.

    ``in_spike`` is ``None`` or an object with ``channel`` and ``polarity``
    (a :class:`~neuroloop.encoder.SpikeEvent`).
    """
    drive = topo.weights[st.spiked_prev].sum(axis=0, dtype=np.int32)
    if in_spike is not None:
        ch = in_spike.channel
        drive[topo.input_posts[ch]] += in_spike.polarity * topo.input_weights[ch].astype(np.int32)
    v = (st.v.astype(np.int32) * params.lam >> 8) + drive
    np.clip(v, I12.min, I12.max, out=v)
    fired = v >= params.theta
    v[fired] = params.v_reset
    st.v = v.astype(np.int16)
    st.spiked_prev = fired
    return fired


# --- SRAM images -----------------------------------------------------------


def weight_image(topo: Topology) -> bytes:
    """Dense row-major ``[pre][post]`` signed bytes; absent edges are 0."""
    return np.ascontiguousarray(topo.weights, dtype=np.int8).tobytes()


def pack12(values) -> bytes:
    """Pack signed 12-bit values into a little-endian bit stream."""
    vals = np.asarray(values, dtype=np.int64)
    if vals.size and (vals.min() < I12.min or vals.max() > I12.max):
        raise ValueError("value outside signed 12-bit range")
    acc = 0
    for i, v in enumerate(vals.tolist()):
        acc |= (v & 0xFFF) << (12 * i)
    return acc.to_bytes((12 * len(vals) + 7) // 8, "little")


def unpack12(data: bytes, count: int) -> np.ndarray:
    acc = int.from_bytes(data, "little")
    out = np.empty(count, dtype=np.int16)
    for i in range(count):
        u = (acc >> (12 * i)) & 0xFFF
        out[i] = u - 0x1000 if u & 0x800 else u
    return out


def membrane_image(st: ReservoirState) -> bytes:
    return pack12(st.v)


def _bitmap(bits: np.ndarray) -> bytes:
    return np.packbits(bits.astype(np.uint8), bitorder="little").tobytes()


def export_sram_image(topo: Topology, st: ReservoirState) -> bytes:
    n = topo.n_total
    head = SRAM_MAGIC + struct.pack("<HH", SRAM_VERSION, n)
    return head + weight_image(topo) + membrane_image(st) + _bitmap(st.spiked_prev)


def import_sram_image(data: bytes) -> tuple[np.ndarray, ReservoirState]:
    if len(data) < 8 or data[:4] != SRAM_MAGIC:
        raise FormatError("not a reservoir SRAM image")
    version, n = struct.unpack_from("<HH", data, 4)
    if version != SRAM_VERSION:
        raise FormatError(f"unsupported SRAM image version {version}")
    n_w, n_m, n_b = n * n, (12 * n + 7) // 8, (n + 7) // 8
    if len(data) != 8 + n_w + n_m + n_b:
        raise FormatError("SRAM image size does not match its header")
    off = 8
    w = np.frombuffer(data, dtype=np.int8, count=n_w, offset=off).reshape(n, n).copy()
    off += n_w
    v = unpack12(data[off : off + n_m], n)
    off += n_m
    bits = np.unpackbits(np.frombuffer(data[off:], dtype=np.uint8), bitorder="little")[:n]
    return w, ReservoirState(v, bits.astype(bool))
