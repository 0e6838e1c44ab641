"""Kernel backend selection.

The compiled extension is preferred. Setting ``COGLOAD_PURE_PYTHON=1``
forces the pure-Python kernels, which is what the benchmark and the
equivalence tests use to compare both paths.
"""
import os

from . import _pykernels

BACKEND = "python"
cascade_filter = _pykernels.cascade_filter

if not os.environ.get("COGLOAD_PURE_PYTHON"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        cascade_filter = _ckernels.cascade_filter


def get_kernels(name=None):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    name = name or BACKEND
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
