"""Plain containers exchanged between the kernel backends and the harness."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

MODE_CLOSED_LOOP = 0
MODE_REPLAY = 1
MODE_OPEN_LOOP = 2
MODES = ("closed_loop", "replay", "open_loop_baseline")


class RawRun(NamedTuple):
    samples: np.ndarray  # int16[n]
    enc_t: np.ndarray  # int32
    enc_ch: np.ndarray  # int8
    enc_pol: np.ndarray  # int8
    res_count: np.ndarray  # uint16[n], reservoir spikes per step
    ro_t: np.ndarray  # int32
    ro_k: np.ndarray  # int8
    pulse_t: np.ndarray  # int32
    gate_t: np.ndarray  # int32, steps where the gate regime changed (first entry at 0)
    gate_regime: np.ndarray  # int8
    plant_t: np.ndarray  # int32, same for the plant's reported regime
    plant_regime: np.ndarray  # int8
    truth: list  # (kind, start_step, end_step)

    def same_as(self, other: "RawRun") -> bool:
        for a, b in zip(self, other):
            if isinstance(a, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif sorted(a) != sorted(b):
                return False
        return True


class Raster(NamedTuple):
    """Sparse tap firings of one segment: step index and tap position."""

    t: np.ndarray  # int32, non-decreasing
    tap: np.ndarray  # int16
    n_steps: int
