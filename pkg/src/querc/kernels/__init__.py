"""Hot-kernel backend selection.

The compiled Cython extension is used when it was built; otherwise the pure
NumPy reference implementation takes over. Both expose the same functions
and consume identical pre-drawn random streams, so a fixed seed gives the
same training trajectory on either backend (up to floating-point round-off
between BLAS and scalar summation).

Set ``QUERC_KERNELS=python`` or ``QUERC_KERNELS=c`` to force a backend.
"""

from __future__ import annotations

import os

from . import pure

try:
    from . import _fast
except ImportError:  # extension not built; pure fallback
    _fast = None

HAVE_COMPILED = _fast is not None

_BY_NAME = {"python": pure, "pure": pure}
if HAVE_COMPILED:
    _BY_NAME.update({"c": _fast, "fast": _fast, "compiled": _fast})


def resolve(backend=None):
    """Map a backend spec (None, "auto", "python", "c", or a module) to a
    kernel module."""
    if backend is None or backend == "auto":
        forced = os.environ.get("QUERC_KERNELS", "auto").strip().lower()
        if forced in ("", "auto"):
            return _fast if HAVE_COMPILED else pure
        backend = forced
    if isinstance(backend, str):
        mod = _BY_NAME.get(backend.lower())
        if mod is None:
            hint = "" if HAVE_COMPILED else " (compiled extension not built)"
            raise ValueError(f"unknown kernel backend {backend!r}{hint}")
        return mod
    return backend


def backend_name(mod=None) -> str:
    mod = resolve(mod) if not hasattr(mod, "lstm_forward") else mod
    return "c" if HAVE_COMPILED and mod is _fast else "python"
