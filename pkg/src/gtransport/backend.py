"""Selection between the compiled and pure-NumPy estimation kernels.

The compiled extension is preferred when it imported cleanly; setting the
environment variable ``GTRANSPORT_PURE`` to anything but ``0`` forces the
pure backend (useful for debugging and for timing comparisons).  Both
backends expose identical functions; results agree to floating-point
round-off (summation orders differ), and each backend is individually
bit-reproducible.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _core_py

__all__ = ["BACKEND", "available_backends", "get_impl",
           "weighted_gram", "solve_spd", "weighted_column_means",
           "replicate_phi"]

try:
    from . import _core  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build environment
    _core = None


def _force_pure() -> bool:
    return os.environ.get("GTRANSPORT_PURE", "0") not in ("", "0")


def available_backends() -> tuple[str, ...]:
    return ("pure",) if _core is None else ("compiled", "pure")


def get_impl(name: str) -> ModuleType:
    """Backend module by name (``"compiled"`` or ``"pure"``)."""
    if name == "pure":
        return _core_py
    if name == "compiled":
        if _core is None:
            raise RuntimeError("compiled backend is not available; "
                               "the extension module failed to build or import")
        return _core
    raise ValueError(f"unknown backend {name!r}; "
                     f"available: {available_backends()}")


_impl = _core_py if (_core is None or _force_pure()) else _core

#: Name of the backend selected at import time.
BACKEND: str = _impl.NAME

weighted_gram = _impl.weighted_gram
solve_spd = _impl.solve_spd
weighted_column_means = _impl.weighted_column_means
replicate_phi = _impl.replicate_phi
