"""Edge-tracing kernels with a compiled core and a pure numpy fallback.

The Cython extension is preferred when built; otherwise the numpy backend
is used. Both expose the same two functions with identical outputs. Set
IIR_EDIT_FORCE_PY_KERNELS=1 to force the fallback (used by the benchmark
and the parity tests).
"""
import os

from . import canny_py

if os.environ.get("IIR_EDIT_FORCE_PY_KERNELS") == "1":
    _impl = canny_py
    BACKEND = "python"
else:
    try:
        from . import _canny_cy as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = canny_py
        BACKEND = "python"

nonmax_suppress = _impl.nonmax_suppress
hysteresis = _impl.hysteresis

__all__ = ["nonmax_suppress", "hysteresis", "BACKEND", "canny_py"]
