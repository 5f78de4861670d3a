"""Kernel backend selection: compiled extension with pure-Python fallback.

The compiled ``_kernels`` extension is preferred when importable.  Set
``SEQWATCH_BACKEND=python`` to force the fallback (e.g. for benchmarking)
or ``SEQWATCH_BACKEND=compiled`` to fail loudly if the extension is
missing.  Both backends consume identical random streams and implement
the same chart arithmetic.
"""

import importlib
import os

_CHOICES = ("auto", "compiled", "python")
_requested = os.environ.get("SEQWATCH_BACKEND", "auto").lower()
if _requested not in _CHOICES:
    raise ImportError(f"SEQWATCH_BACKEND must be one of {_CHOICES}, got {_requested!r}")

if _requested == "python":
    from . import _kernels_py as kernels
    _name = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
        _name = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _kernels_py as kernels
        _name = "python"


def backend_name() -> str:
    """Which kernel implementation is active: 'compiled' or 'python'."""
    return _name


def get_kernels(name: str | None = None):
    """Kernel module by name ('compiled' / 'python'), default the active one."""
    if name is None:
        return kernels
    if name == "python":
        return importlib.import_module("seqwatch._kernels_py")
    if name == "compiled":
        return importlib.import_module("seqwatch._kernels")
    raise ValueError(f"unknown backend {name!r}")
