"""Selection between the compiled stepping kernels and the NumPy fallback.

The compiled extension is tried once at import.  ``METRODIFF_BACKEND``
overrides the choice: ``auto`` (default), ``compiled`` (error if the
extension is missing), or ``python``.  Both backends consume identical
random streams and implement the same update formulas, so results agree
to floating-point rounding; a fixed seed is reproduced exactly within a
backend.
"""

import os

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

HAVE_COMPILED = _compiled is not None

_VALID = ("auto", "compiled", "python")
_requested = os.environ.get("METRODIFF_BACKEND", "auto").lower()
if _requested not in _VALID:
    raise RuntimeError(
        f"METRODIFF_BACKEND={_requested!r} invalid; expected one of {_VALID}")

_active = "compiled" if (HAVE_COMPILED and _requested != "python") else "python"
if _requested == "compiled" and not HAVE_COMPILED:
    raise RuntimeError(
        "METRODIFF_BACKEND=compiled but the _kernels extension is not built; "
        "reinstall with a C compiler or drop the override")


def active_backend() -> str:
    """Name of the backend ensembles and chain runs will use."""
    return _active


def set_backend(name: str) -> None:
    """Force a backend (used by tests and the backend benchmark)."""
    global _active
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and not HAVE_COMPILED:
        raise RuntimeError("compiled backend unavailable: extension not built")
    _active = name


def compiled_module():
    """The extension module, or None when it is not built."""
    return _compiled
