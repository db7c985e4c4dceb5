"""Picks the compiled simulator kernels when available, else the numpy ones."""

import os

if os.environ.get("SMALLCELL_PURE_PYTHON"):
    from ._pykernels import interference_pathloss, nearest_station
    BACKEND = "python"
else:
    try:
        from ._ckernels import interference_pathloss, nearest_station
        BACKEND = "cython"
    except ImportError:
        from ._pykernels import interference_pathloss, nearest_station
        BACKEND = "python"

__all__ = ["BACKEND", "interference_pathloss", "nearest_station"]
