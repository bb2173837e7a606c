"""Kernel backend selection.

Hot loops are written once as plain Python over numpy arrays and compiled with
numba when it is importable. Setting ``REFNET_BACKEND=numpy`` (or running
without numba installed) routes every dispatching function to its pure-numpy /
scipy formulation instead, and leaves the loop kernels uncompiled.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

_BACKENDS = ("numba", "numpy")
_backend = os.environ.get("REFNET_BACKEND", "numba").strip().lower()
if _backend not in _BACKENDS:
    raise ValueError(f"REFNET_BACKEND must be one of {_BACKENDS}, got {_backend!r}")
if not HAVE_NUMBA:
    _backend = "numpy"


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is present, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if HAVE_NUMBA:
            return numba.njit(**kwargs)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap


def backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    name = name.lower()
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextmanager
def backend_context(name: str):
    prev = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def n_threads() -> int:
    """Worker cap from ``REFNET_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("REFNET_THREADS")
    if raw:
        return max(1, int(raw))
    return max(1, os.cpu_count() or 1)
