"""Kernel selection.

The compiled extension is used when it was built; otherwise (or when
``EPLS_PURE_PYTHON`` is set to a non-empty value) the numpy fallback is.
"""

import os
from types import ModuleType

from . import _pykernels


def load(name: str = "auto") -> ModuleType:
    """Return the kernel module for ``name`` in {"auto", "cython", "python"}."""
    if name not in ("auto", "cython", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "python":
        return _pykernels
    try:
        from . import _ckernels
    except ImportError:
        if name == "cython":
            raise
        return _pykernels
    return _ckernels


kernels = load("python" if os.environ.get("EPLS_PURE_PYTHON") else "auto")


def name_of(module: ModuleType) -> str:
    return "python" if module is _pykernels else "cython"


BACKEND = name_of(kernels)
