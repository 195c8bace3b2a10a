"""Numerical kernel backend selection.

Tries the compiled Cython extension first and falls back to the numpy
implementations.  Both backends produce bit-identical results; the
compiled one is just faster.  Set HSIC_PURE_PYTHON=1 to force the
fallback (used by the benchmark and the parity tests).
"""

import os

from . import pykernels

if os.environ.get("HSIC_PURE_PYTHON", "0") != "0":
    _impl = pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = pykernels
        BACKEND = "python"

frost_filter = _impl.frost_filter
convolve_axis = _impl.convolve_axis
local_extrema = _impl.local_extrema
descriptor_histogram = _impl.descriptor_histogram

__all__ = [
    "BACKEND",
    "convolve_axis",
    "descriptor_histogram",
    "frost_filter",
    "local_extrema",
    "pykernels",
]
