"""Hot numeric kernels with two interchangeable backends.

``numba_impl`` carries @njit-compiled loops; ``numpy_impl`` is a pure-numpy
twin used as a fallback and as a cross-check.  Both expose the same function
surface and are written so that per-path / per-node arithmetic happens in the
same order, giving bit-identical results.

Select the backend with the ``SUBEXPECT_BACKEND`` environment variable
("numba" or "numpy"); default is numba when importable.
"""

from __future__ import annotations

import os
import warnings

_cache: dict = {}


def backend_name() -> str:
    env = os.environ.get("SUBEXPECT_BACKEND", "").strip().lower()
    if env in ("numpy", "python"):
        return "numpy"
    if env and env != "numba":
        warnings.warn(f"unknown SUBEXPECT_BACKEND={env!r}, using numba")
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        if env == "numba":
            warnings.warn("numba requested but not importable; using numpy")
        return "numpy"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (or the env-selected default)."""
    name = name or backend_name()
    if name not in _cache:
        if name == "numba":
            from . import numba_impl as mod
        elif name == "numpy":
            from . import numpy_impl as mod
        else:
            raise ValueError(f"unknown kernel backend {name!r}")
        _cache[name] = mod
    return _cache[name]


def set_workers(n: int) -> None:
    """Set the worker-thread count for the numba backend (no-op for numpy).

    Results never depend on this: every parallel loop is over independent
    paths with per-path state.
    """
    if n < 1:
        raise ValueError("worker count must be >= 1")
    if backend_name() == "numba":
        import numba
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
