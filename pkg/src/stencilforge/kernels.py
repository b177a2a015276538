"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy fallback in ``_kernels_py``. Set ``STENCILFORGE_BACKEND=python`` (or
``cython``) to force one.
"""

import importlib
import os
import warnings

from . import _kernels_py

_FUNCS = ("nearest_seed", "centroid_sums", "spray_log_accumulate", "neighbor_diff_sum")


def available_backends():
    names = ["python"]
    try:
        importlib.import_module("stencilforge._ckernels")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def get_backend(name=None):
    """Return the kernel module for ``name`` ("cython", "python" or None for auto)."""
    if name in (None, "", "auto"):
        return importlib.import_module("stencilforge._ckernels") if "cython" in available_backends() else _kernels_py
    if name == "python":
        return _kernels_py
    if name == "cython":
        return importlib.import_module("stencilforge._ckernels")
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    want = os.environ.get("STENCILFORGE_BACKEND", "auto").lower()
    try:
        return get_backend(want)
    except ImportError:
        warnings.warn("compiled kernels unavailable, using the numpy fallback", stacklevel=2)
        return _kernels_py


_backend = _select()
BACKEND = _backend.NAME

nearest_seed = _backend.nearest_seed
centroid_sums = _backend.centroid_sums
spray_log_accumulate = _backend.spray_log_accumulate
neighbor_diff_sum = _backend.neighbor_diff_sum

__all__ = ["BACKEND", "available_backends", "get_backend", *_FUNCS]
