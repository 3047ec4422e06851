"""Kernel backend selection.

The compiled extension is preferred when importable; the NumPy fallback is
always available. ``KNN_DATAFLOW_BACKEND`` forces a choice ("cython",
"purepy", or "auto"). Both backends expose the same two functions with
bit-identical float32 semantics, so selection never changes results.
"""

from __future__ import annotations

import os

from . import _purepy

try:
    from . import _kernels
except ImportError:  # extension not built; fall back silently
    _kernels = None

_BACKENDS = {"purepy": _purepy}
if _kernels is not None:
    _BACKENDS["cython"] = _kernels


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def _resolve(name: str):
    if name == "auto":
        return _BACKENDS.get("cython", _purepy)
    if name not in _BACKENDS:
        raise ValueError(
            f"backend {name!r} is not available; choose from "
            f"{available_backends()} or 'auto'"
        )
    return _BACKENDS[name]


_active = _resolve(os.environ.get("KNN_DATAFLOW_BACKEND", "auto").strip().lower() or "auto")


def active():
    """The module currently providing the hot kernels."""
    return _active


def backend_name() -> str:
    return _active.NAME


def set_backend(name: str) -> str:
    """Switch kernels at runtime (used by tests and the backend benchmark)."""
    global _active
    _active = _resolve(name)
    return _active.NAME
