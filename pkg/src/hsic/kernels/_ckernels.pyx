# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels.

Mirrors ``pykernels.py`` operation for operation; accumulation order and
libm calls are identical so both backends give bit-identical results.
Keep the two files in sync when changing either.
"""

from libc.math cimport exp, fabs, floor, M_PI

import numpy as np


cdef inline Py_ssize_t _clamp(Py_ssize_t v, Py_ssize_t lo, Py_ssize_t hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def frost_filter(double[:, ::1] img, int n, double damping, bint literal):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t r = n // 2
    cdef double inv_n2 = 1.0 / (n * n)
    cdef double nd = <double> n
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    # power table exp(-beta)^m for m = 0 .. 2r
    pow_arr = np.empty(2 * r + 1, dtype=np.float64)
    cdef double[::1] p = pow_arr
    cdef Py_ssize_t y, x, dy, dx, yy, xx, m
    cdef double s1, s2, mu, var, d, beta, base, wgt, num, den

    with nogil:
        for y in range(h):
            for x in range(w):
                s1 = 0.0
                for dy in range(-r, r + 1):
                    yy = _clamp(y + dy, 0, h - 1)
                    for dx in range(-r, r + 1):
                        xx = _clamp(x + dx, 0, w - 1)
                        s1 = s1 + img[yy, xx]
                mu = s1 * inv_n2
                s2 = 0.0
                for dy in range(-r, r + 1):
                    yy = _clamp(y + dy, 0, h - 1)
                    for dx in range(-r, r + 1):
                        xx = _clamp(x + dx, 0, w - 1)
                        d = img[yy, xx] - mu
                        s2 = s2 + d * d
                var = s2 * inv_n2
                if mu != 0.0:
                    if literal:
                        beta = 4.0 / (nd * (mu * mu))
                    else:
                        beta = damping * (var / (mu * mu))
                else:
                    beta = 0.0
                base = exp(-beta)
                p[0] = 1.0
                for m in range(1, 2 * r + 1):
                    p[m] = p[m - 1] * base
                num = 0.0
                den = 0.0
                for dy in range(-r, r + 1):
                    yy = _clamp(y + dy, 0, h - 1)
                    for dx in range(-r, r + 1):
                        xx = _clamp(x + dx, 0, w - 1)
                        wgt = p[(dy if dy >= 0 else -dy) + (dx if dx >= 0 else -dx)]
                        num = num + wgt * img[yy, xx]
                        den = den + wgt
                out[y, x] = num / den
    return out_arr


def convolve_axis(double[:, ::1] img, double[::1] kernel, int axis):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t k = kernel.shape[0]
    cdef Py_ssize_t r = k // 2
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, t
    cdef double acc

    with nogil:
        if axis == 1:
            for y in range(h):
                for x in range(w):
                    acc = 0.0
                    for t in range(k):
                        acc = acc + kernel[t] * img[y, _clamp(x + t - r, 0, w - 1)]
                    out[y, x] = acc
        else:
            for y in range(h):
                for x in range(w):
                    acc = 0.0
                    for t in range(k):
                        acc = acc + kernel[t] * img[_clamp(y + t - r, 0, h - 1), x]
                    out[y, x] = acc
    return out_arr


def local_extrema(double[:, ::1] below, double[:, ::1] mid,
                  double[:, ::1] above, double threshold):
    cdef Py_ssize_t h = mid.shape[0]
    cdef Py_ssize_t w = mid.shape[1]
    ys = []
    xs = []
    cdef Py_ssize_t y, x, dy, dx
    cdef double v
    cdef bint is_max, is_min
    if h < 3 or w < 3:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            v = mid[y, x]
            if fabs(v) < threshold:
                continue
            is_max = True
            is_min = True
            for dy in range(-1, 2):
                for dx in range(-1, 2):
                    if v <= below[y + dy, x + dx]:
                        is_max = False
                    if v >= below[y + dy, x + dx]:
                        is_min = False
                    if v <= above[y + dy, x + dx]:
                        is_max = False
                    if v >= above[y + dy, x + dx]:
                        is_min = False
                    if dy != 0 or dx != 0:
                        if v <= mid[y + dy, x + dx]:
                            is_max = False
                        if v >= mid[y + dy, x + dx]:
                            is_min = False
                if not is_max and not is_min:
                    break
            if is_max or is_min:
                ys.append(y)
                xs.append(x)
    return np.asarray(ys, dtype=np.int64), np.asarray(xs, dtype=np.int64)


def descriptor_histogram(double[:, ::1] mag, double[:, ::1] ori,
                         double[:, ::1] weights, Py_ssize_t cy, Py_ssize_t cx):
    cdef Py_ssize_t h = mag.shape[0]
    cdef Py_ssize_t w = mag.shape[1]
    hist_arr = np.zeros(128, dtype=np.float64)
    cdef double[::1] hist = hist_arr
    cdef Py_ssize_t i, j, yy, xx, b, cell
    cdef double o

    with nogil:
        for i in range(16):
            yy = _clamp(cy + i - 8, 0, h - 1)
            for j in range(16):
                xx = _clamp(cx + j - 8, 0, w - 1)
                o = ori[yy, xx]
                b = <Py_ssize_t> floor(8.0 * (o + M_PI) / (2.0 * M_PI)) % 8
                cell = (i // 4) * 4 + (j // 4)
                hist[cell * 8 + b] = hist[cell * 8 + b] + mag[yy, xx] * weights[i, j]
    return hist_arr
