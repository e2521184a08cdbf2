"""Hot-loop kernels, selectable between a compiled core and a numpy fallback.

The compiled extension (``evpose.kernels._ckernels``, built from Cython at
install time) and :mod:`evpose.kernels.numpy_backend` implement the same five
functions with identical semantics. Selection happens once at import:

* ``EVPOSE_KERNELS=auto``   (default) compiled if available, else numpy
* ``EVPOSE_KERNELS=cython`` require the compiled core, fail otherwise
* ``EVPOSE_KERNELS=python`` force the numpy fallback

``active_backend()`` reports the choice; ``evpose bench`` compares the two.
"""

import os

from . import numpy_backend

_choice = os.environ.get("EVPOSE_KERNELS", "auto").lower()
if _choice not in ("auto", "cython", "python"):
    raise ImportError(
        f"EVPOSE_KERNELS must be auto, cython, or python (got {_choice!r})")

_impl = None
_BACKEND = "numpy"
if _choice in ("auto", "cython"):
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
        _BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "EVPOSE_KERNELS=cython but the compiled extension is not "
                "built; reinstall the package or use EVPOSE_KERNELS=python")
        _impl = None
if _impl is None:
    _impl = numpy_backend


def active_backend() -> str:
    """Name of the kernel implementation in use: 'cython' or 'numpy'."""
    return _BACKEND


def backends() -> dict:
    """All importable backends by name (used by equivalence tests/benchmarks)."""
    found = {"numpy": numpy_backend}
    try:
        from . import _ckernels
        found["cython"] = _ckernels
    except ImportError:
        pass
    return found


lnes_accumulate = _impl.lnes_accumulate
im2col = _impl.im2col
col2im = _impl.col2im
bilinear_gather = _impl.bilinear_gather
bilinear_scatter = _impl.bilinear_scatter
bilinear_coord_grads = _impl.bilinear_coord_grads
emit_events = _impl.emit_events
