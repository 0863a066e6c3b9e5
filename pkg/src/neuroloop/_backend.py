"""Kernel backend selection.

The compiled core (``neuroloop._core``) is used when it was built and
imports cleanly; otherwise the pure-Python kernels take over. Set
``NEUROLOOP_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import logging
import os
from types import ModuleType

from . import _pykernels

log = logging.getLogger(__name__)

_selected: ModuleType | None = None


def compiled() -> ModuleType | None:
    try:
        from . import _core  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _core


def python() -> ModuleType:
    return _pykernels


def kernels() -> ModuleType:
    global _selected
    if _selected is None:
        core = None if os.environ.get("NEUROLOOP_PURE_PYTHON") else compiled()
        if core is None:
            log.info("compiled core unavailable, using pure-Python kernels")
        _selected = core or _pykernels
    return _selected


def name() -> str:
    return kernels().BACKEND
