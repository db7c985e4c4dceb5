"""Pure-numpy versions of the simulator inner loops.

Same signatures and results as the compiled module; used when the
extension is unavailable or ``SMALLCELL_PURE_PYTHON`` is set.
"""

import numpy as np
from scipy.spatial import cKDTree


def _wrap(d, period):
    d = np.abs(d)
    return np.where(d > 0.5 * period, period - d, d)


def nearest_station(bx, by, ux, uy, lx, ly):
    """Index of and squared toroidal distance to the closest station per user."""
    bx = np.asarray(bx, dtype=float)
    if bx.size == 0:
        raise ValueError("no stations to associate with")
    ux = np.asarray(ux, dtype=float)
    if ux.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    # cKDTree wants coordinates strictly inside the box.
    pts = np.column_stack((np.mod(bx, lx), np.mod(by, ly)))
    tree = cKDTree(pts, boxsize=(lx, ly))
    q = np.column_stack((np.mod(ux, lx), np.mod(uy, ly)))
    _, idx = tree.query(q, k=1)
    idx = idx.astype(np.int64)
    dx = _wrap(ux - bx[idx], lx)
    dy = _wrap(np.asarray(uy) - np.asarray(by)[idx], ly)
    return idx, dx * dx + dy * dy


def interference_pathloss(bx, by, active, exclude, x0, y0, lx, ly, alpha):
    """Pathloss ``max(d, 1)^-alpha`` from every active station except ``exclude``."""
    mask = np.asarray(active, dtype=bool).copy()
    if 0 <= exclude < mask.size:
        mask[exclude] = False
    dx = _wrap(x0 - np.asarray(bx)[mask], lx)
    dy = _wrap(y0 - np.asarray(by)[mask], ly)
    d2 = dx * dx + dy * dy
    close = d2 < 1.0
    d2[close] = 1.0
    if alpha == 4.0:
        pl = 1.0 / (d2 * d2)
    else:
        pl = d2 ** (-0.5 * alpha)
    return pl, int(close.sum())
