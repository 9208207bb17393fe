"""Peak-picking kernels with a compiled fast path.

The Cython extension is used when it has been built; otherwise the
pure-Python module is used. Setting ``FLOORVITALS_PURE_PYTHON=1`` forces the
fallback. ``BACKEND`` names the module in use.
"""
import os

if os.environ.get("FLOORVITALS_PURE_PYTHON") == "1":
    from ._pykernels import local_maxima, peak_prominences, select_by_distance

    BACKEND = "python"
else:
    try:
        from ._ckernels import local_maxima, peak_prominences, select_by_distance

        BACKEND = "cython"
    except ImportError:
        from ._pykernels import local_maxima, peak_prominences, select_by_distance

        BACKEND = "python"

__all__ = ["BACKEND", "local_maxima", "peak_prominences", "select_by_distance"]
