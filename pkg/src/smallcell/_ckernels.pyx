# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops of the network simulator.

Both routines work on a rectangular torus ``[0, lx) x [0, ly)``.
"""

import numpy as np

from libc.math cimport fabs, pow, sqrt, INFINITY


cdef inline double _wrap(double d, double period) nogil:
    d = fabs(d)
    if d > 0.5 * period:
        d = period - d
    return d


cdef inline Py_ssize_t _mod(Py_ssize_t a, Py_ssize_t n) nogil:
    a = a % n
    if a < 0:
        a += n
    return a


def nearest_station(const double[::1] bx, const double[::1] by,
                    const double[::1] ux, const double[::1] uy,
                    double lx, double ly):
    """Index of and squared toroidal distance to the closest station per user.

    Stations are bucketed on a uniform grid holding about one per cell;
    each user scans rings of cells outward until no unvisited cell can hold
    a closer station.
    """
    cdef Py_ssize_t nb = bx.shape[0]
    cdef Py_ssize_t nu = ux.shape[0]
    if nb == 0:
        raise ValueError("no stations to associate with")
    serving_arr = np.empty(nu, dtype=np.int64)
    dist2_arr = np.empty(nu, dtype=np.float64)
    cdef long long[::1] serving = serving_arr
    cdef double[::1] dist2 = dist2_arr

    cdef double h = sqrt(lx * ly / nb)
    cdef Py_ssize_t nx = <Py_ssize_t>(lx / h)
    cdef Py_ssize_t ny = <Py_ssize_t>(ly / h)
    if nx < 1:
        nx = 1
    if ny < 1:
        ny = 1
    cdef double cw = lx / nx
    cdef double ch = ly / ny
    cdef Py_ssize_t ncell = nx * ny

    start_arr = np.zeros(ncell + 1, dtype=np.int64)
    order_arr = np.empty(nb, dtype=np.int64)
    cell_arr = np.empty(nb, dtype=np.int64)
    cdef long long[::1] start = start_arr
    cdef long long[::1] order = order_arr
    cdef long long[::1] cell_of = cell_arr

    cdef Py_ssize_t i, j, c, cx, cy, r, dx, dy, adx, ady, k, b, kk
    cdef Py_ssize_t rmax = (nx if nx > ny else ny) // 2 + 1
    cdef double best, d2, ddx, ddy, x, y, bound, edge

    with nogil:
        for i in range(nb):
            cx = <Py_ssize_t>(bx[i] / cw)
            cy = <Py_ssize_t>(by[i] / ch)
            if cx >= nx:
                cx = nx - 1
            if cy >= ny:
                cy = ny - 1
            c = cy * nx + cx
            cell_of[i] = c
            start[c + 1] += 1
        for c in range(ncell):
            start[c + 1] += start[c]
    cursor_arr = start_arr[:ncell].copy()
    cdef long long[::1] cursor = cursor_arr
    with nogil:
        for i in range(nb):
            c = cell_of[i]
            order[cursor[c]] = i
            cursor[c] += 1

        for j in range(nu):
            x = ux[j]
            y = uy[j]
            cx = <Py_ssize_t>(x / cw)
            cy = <Py_ssize_t>(y / ch)
            if cx >= nx:
                cx = nx - 1
            if cy >= ny:
                cy = ny - 1
            best = INFINITY
            b = -1
            r = 0
            while True:
                for dy in range(-r, r + 1):
                    ady = dy if dy >= 0 else -dy
                    for dx in range(-r, r + 1):
                        adx = dx if dx >= 0 else -dx
                        if adx != r and ady != r:
                            continue
                        c = _mod(cy + dy, ny) * nx + _mod(cx + dx, nx)
                        for kk in range(start[c], start[c + 1]):
                            k = order[kk]
                            ddx = _wrap(x - bx[k], lx)
                            ddy = _wrap(y - by[k], ly)
                            d2 = ddx * ddx + ddy * ddy
                            if d2 < best or (d2 == best and k < b):
                                best = d2
                                b = k
                # Unscanned cells lie outside the block cx-r..cx+r, cy-r..cy+r.
                bound = x - (cx - r) * cw
                edge = (cx + r + 1) * cw - x
                if edge < bound:
                    bound = edge
                edge = y - (cy - r) * ch
                if edge < bound:
                    bound = edge
                edge = (cy + r + 1) * ch - y
                if edge < bound:
                    bound = edge
                if b >= 0 and best <= bound * bound:
                    break
                if r >= rmax:
                    break
                r += 1
            serving[j] = b
            dist2[j] = best
    return serving_arr, dist2_arr


def interference_pathloss(const double[::1] bx, const double[::1] by,
                          const unsigned char[::1] active, Py_ssize_t exclude,
                          double x0, double y0, double lx, double ly, double alpha):
    """Pathloss ``max(d, 1)^-alpha`` from every active station except ``exclude``.

    Returns:
        ``(pathloss, n_clamped)`` where ``n_clamped`` counts distances below 1 m.
    """
    cdef Py_ssize_t nb = bx.shape[0]
    out_arr = np.empty(nb, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, n = 0, clamped = 0
    cdef double ddx, ddy, d2
    cdef double e = -0.5 * alpha
    cdef bint square = alpha == 4.0
    with nogil:
        for i in range(nb):
            if not active[i] or i == exclude:
                continue
            ddx = _wrap(x0 - bx[i], lx)
            ddy = _wrap(y0 - by[i], ly)
            d2 = ddx * ddx + ddy * ddy
            if d2 < 1.0:
                d2 = 1.0
                clamped += 1
            if square:
                out[n] = 1.0 / (d2 * d2)
            else:
                out[n] = pow(d2, e)
            n += 1
    return out_arr[:n], clamped
