"""Backend selection for the hot loops.

The compiled extension is used when importable; ``AGGUPWIND_PURE=1`` forces
the numpy/scipy fallback.  ``BACKEND`` names the active one.
"""

import os

from . import _fallback

if os.environ.get("AGGUPWIND_PURE", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

grid_convolve = _impl.grid_convolve
pair_velocity = _impl.pair_velocity


def backends():
    """Map of available backend name -> module, for benchmarks and tests."""
    out = {"python": _fallback}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    return out
