"""Kernel backend selection.

``COMPCONJ_BACKEND`` chooses ``numba`` (default when importable) or
``numpy``.  ``COMPCONJ_THREADS`` caps the numba thread pool.
"""
from __future__ import annotations

import os
from contextlib import contextmanager

BACKENDS = ("numba", "numpy")

try:  # pragma: no cover - exercised implicitly
    import numba as _numba
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is often too old; workqueue is always available
        _numba.config.THREADING_LAYER = "workqueue"
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _numba = None
    HAVE_NUMBA = False


def _initial() -> str:
    name = os.environ.get("COMPCONJ_BACKEND", "numba" if HAVE_NUMBA else "numpy").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"COMPCONJ_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        name = "numpy"
    return name


_current = _initial()


def _apply_thread_cap() -> None:
    cap = os.environ.get("COMPCONJ_THREADS")
    if cap and HAVE_NUMBA:
        _numba.set_num_threads(max(1, min(int(cap), _numba.config.NUMBA_NUM_THREADS)))


_apply_thread_cap()


def get_backend() -> str:
    return _current


def set_backend(name: str) -> None:
    global _current
    name = name.lower()
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _current = name


@contextmanager
def use_backend(name: str):
    prev = _current
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)
