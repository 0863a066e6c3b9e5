"""On-disk formats: recorded traces, segment labels and weight snapshots.

All binary formats are little-endian and start with a 4-byte magic plus a
u16 version. Nothing machine- or time-dependent is ever written, so file
hashes are a pure function of the inputs.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import NetworkConfig, network_from_dict
from .readout import StdpLut, lut_from_params
from .reservoir import FormatError, Topology, weight_image

TRACE_MAGIC = b"NLRC"
TRACE_VERSION = 1
_TRACE_HEADER = struct.Struct("<4sHIQ")

SNAPSHOT_MAGIC = b"NLWS"
SNAPSHOT_VERSION = 1
_SNAP_HEADER = struct.Struct("<4sHHHH16s")  # magic, version, n_total, n_exc, n_taps, profile

__all__ = [
    "FormatError",
    "WeightSnapshot",
    "read_labels",
    "read_trace",
    "write_labels",
    "write_trace",
]


# --- traces --------------------------------------------------------------


def encode_trace(samples, sample_rate_hz: int) -> bytes:
    x = np.asarray(samples)
    if x.ndim != 1:
        raise FormatError("trace must be one-dimensional")
    if x.size and (x.min() < -2048 or x.max() > 2047):
        raise FormatError("trace samples exceed the signed 12-bit range")
    rate = int(sample_rate_hz)
    if rate <= 0 or rate != sample_rate_hz:
        raise FormatError("sample rate must be a positive integer")
    head = _TRACE_HEADER.pack(TRACE_MAGIC, TRACE_VERSION, rate, x.size)
    return head + x.astype("<i2").tobytes()


def decode_trace(data: bytes) -> tuple[np.ndarray, int]:
    if len(data) < _TRACE_HEADER.size:
        raise FormatError("trace shorter than its header")
    magic, version, rate, n = _TRACE_HEADER.unpack_from(data)
    if magic != TRACE_MAGIC:
        raise FormatError(f"bad trace magic {magic!r}")
    if version != TRACE_VERSION:
        raise FormatError(f"unsupported trace version {version}")
    body = data[_TRACE_HEADER.size :]
    if len(body) != 2 * n:
        raise FormatError(f"trace body holds {len(body)} bytes, header promises {2 * n}")
    samples = np.frombuffer(body, dtype="<i2").astype(np.int16)
    if n and (samples.min() < -2048 or samples.max() > 2047):
        raise FormatError("trace samples exceed the signed 12-bit range")
    return samples, rate


def write_trace(path: str | Path, samples, sample_rate_hz: int) -> None:
    Path(path).write_bytes(encode_trace(samples, sample_rate_hz))


def read_trace(path: str | Path) -> tuple[np.ndarray, int]:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read trace {path}: {e}") from e
    return decode_trace(data)


# --- labels ----------------------------------------------------------------


def write_labels(path: str | Path, rows) -> None:
    """``rows``: iterable of mappings with at least start_s, end_s, label."""
    lines = [json.dumps(dict(r), sort_keys=True) for r in rows]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_labels(path: str | Path) -> list[dict]:
    out = []
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise FormatError(f"cannot read labels {path}: {e}") from e
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}:{n}: {e}") from e
        if not {"start_s", "end_s", "label"} <= set(row):
            raise FormatError(f"{path}:{n}: missing start_s/end_s/label")
        if not row["end_s"] > row["start_s"]:
            raise FormatError(f"{path}:{n}: end_s must exceed start_s")
        out.append(row)
    return out


# --- weight snapshots ------------------------------------------------------


@dataclass
class WeightSnapshot:
    """Trained network: frozen reservoir, readout weights, LUT and config.

    Layout after the header: reservoir weight image (n*n int8, row-major
    pre->post), input map per channel (u16 count, then u16 post + i16
    weight pairs), tap ids (n_taps u16), readout weights (n_taps*2 i16,
    tap-major), LUT (64 ltp + 64 ltd int8), sha256 of the canonical config
    JSON, u32 length, config JSON.
    """

    config: NetworkConfig
    topology: Topology
    readout_w: np.ndarray  # int16 [n_taps, 2]
    lut: StdpLut

    @property
    def profile(self) -> str:
        return f"n{self.topology.n_total}"

    def digest(self) -> bytes:
        return hashlib.sha256(self.config.canonical_json()).digest()

    def to_bytes(self) -> bytes:
        topo = self.topology
        w = np.asarray(self.readout_w)
        if w.shape != (topo.n_taps, 2):
            raise FormatError("readout weights must be n_taps x 2")
        if w.min() < -2048 or w.max() > 2047:
            raise FormatError("readout weights exceed the 12-bit range")
        parts = [
            _SNAP_HEADER.pack(
                SNAPSHOT_MAGIC,
                SNAPSHOT_VERSION,
                topo.n_total,
                topo.n_exc,
                topo.n_taps,
                self.profile.encode().ljust(16, b"\0"),
            ),
            weight_image(topo),
        ]
        for posts, weights in zip(topo.input_posts, topo.input_weights):
            parts.append(struct.pack("<H", len(posts)))
            pairs = np.empty(len(posts), dtype=[("post", "<u2"), ("w", "<i2")])
            pairs["post"] = posts
            pairs["w"] = weights
            parts.append(pairs.tobytes())
        parts.append(np.asarray(topo.taps, dtype="<u2").tobytes())
        parts.append(w.astype("<i2").tobytes())
        parts.append(self.lut.tables())
        cfg = self.config.canonical_json()
        parts.append(self.digest())
        parts.append(struct.pack("<I", len(cfg)))
        parts.append(cfg)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "WeightSnapshot":
        r = _Reader(data)
        magic, version, n, n_exc, n_taps, _profile = r.unpack(_SNAP_HEADER)
        if magic != SNAPSHOT_MAGIC:
            raise FormatError(f"bad snapshot magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise FormatError(f"unsupported snapshot version {version}")
        weights = np.frombuffer(r.take(n * n), dtype=np.int8).reshape(n, n).copy()
        posts, in_w = [], []
        for _ in range(2):
            (count,) = r.unpack(struct.Struct("<H"))
            pairs = np.frombuffer(r.take(4 * count), dtype=[("post", "<u2"), ("w", "<i2")])
            posts.append(pairs["post"].astype(np.int32))
            in_w.append(pairs["w"].astype(np.int16))
        taps = np.frombuffer(r.take(2 * n_taps), dtype="<u2").astype(np.int32)
        ro_w = np.frombuffer(r.take(4 * n_taps), dtype="<i2").reshape(n_taps, 2).astype(np.int16)
        ltp = np.frombuffer(r.take(64), dtype=np.int8).copy()
        ltd = np.frombuffer(r.take(64), dtype=np.int8).copy()
        digest = r.take(32)
        (length,) = r.unpack(struct.Struct("<I"))
        cfg_bytes = r.take(length)
        if not r.done():
            raise FormatError("trailing bytes after snapshot")
        if hashlib.sha256(cfg_bytes).digest() != digest:
            raise FormatError("snapshot config digest mismatch")
        try:
            config = network_from_dict(json.loads(cfg_bytes))
        except ValueError as e:
            raise FormatError(f"snapshot config invalid: {e}") from e
        if (posts[0] >= n).any() or (posts[1] >= n).any() or (taps >= n).any():
            raise FormatError("neuron index out of range")
        topo = Topology(n, n_exc, weights, (posts[0], posts[1]), (in_w[0], in_w[1]), taps)
        lut = lut_from_params(config.lut)
        if not (np.array_equal(lut.ltp, ltp) and np.array_equal(lut.ltd, ltd)):
            raise FormatError("stored LUT does not match the embedded LUT parameters")
        return cls(config, topo, ro_w, StdpLut(ltp, ltd, config.lut))

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "WeightSnapshot":
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            raise FormatError(f"cannot read snapshot {path}: {e}") from e
        return cls.from_bytes(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("snapshot truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, s: struct.Struct):
        return s.unpack(self.take(s.size))

    def done(self) -> bool:
        return self.pos == len(self.data)
