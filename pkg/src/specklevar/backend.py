"""Kernel backend selection.

The compiled Cython kernels are used when the extension is built; otherwise
the numpy fallback is imported.  ``SPECKLEVAR_BACKEND=python`` forces the
fallback.
"""

import os

from . import _fallback

_forced = os.environ.get("SPECKLEVAR_BACKEND", "").strip().lower()

kernels = _fallback
NAME = "python"
if _forced not in ("python", "numpy", "fallback"):
    try:
        from . import _kernels
    except ImportError:
        if _forced in ("cython", "compiled"):
            raise
    else:
        kernels = _kernels
        NAME = "cython"


def get(name=None):
    """Kernel module by name (``"cython"`` or ``"python"``); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def available():
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names
