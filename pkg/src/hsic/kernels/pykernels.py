"""Pure-numpy implementations of the hot kernels.

These mirror the compiled kernels in ``_ckernels.pyx`` operation for
operation: every floating-point accumulation runs in the same order
(row-major over window/tap offsets) and transcendental calls go through
libm (``math.exp``), so both backends produce bit-identical output.
Keep the two files in sync when changing either.
"""

import math

import numpy as np


def _exp_libm(values: np.ndarray) -> np.ndarray:
    """Elementwise libm exp; matches the C backend bit for bit."""
    flat = values.ravel()
    out = np.empty(flat.shape[0], dtype=np.float64)
    e = math.exp
    for i in range(flat.shape[0]):
        out[i] = e(flat[i])
    return out.reshape(values.shape)


def frost_filter(img: np.ndarray, n: int, damping: float, literal: bool) -> np.ndarray:
    """Adaptive exponentially-weighted window filter.

    Per pixel: window mean mu and population variance over the
    edge-clamped n x n window; beta = damping*(var/mu^2) or, in literal
    mode, 4/(n*mu^2); weights exp(-beta*(|dx|+|dy|)) normalized to sum 1.
    """
    h, w = img.shape
    r = n // 2
    pad = np.pad(img, r, mode="edge")
    inv_n2 = 1.0 / (n * n)

    s1 = np.zeros((h, w), dtype=np.float64)
    for dy in range(n):
        for dx in range(n):
            s1 = s1 + pad[dy : dy + h, dx : dx + w]
    mu = s1 * inv_n2

    s2 = np.zeros((h, w), dtype=np.float64)
    for dy in range(n):
        for dx in range(n):
            d = pad[dy : dy + h, dx : dx + w] - mu
            s2 = s2 + d * d
    var = s2 * inv_n2

    beta = np.zeros((h, w), dtype=np.float64)
    nz = mu != 0.0
    if literal:
        beta[nz] = 4.0 / (float(n) * (mu[nz] * mu[nz]))
    else:
        beta[nz] = damping * (var[nz] / (mu[nz] * mu[nz]))

    # w(dx,dy) = exp(-beta)^(|dx|+|dy|), built as a sequential power table
    # so both backends multiply in the same order.
    base = _exp_libm(-beta)
    powers = [np.ones((h, w), dtype=np.float64)]
    for _ in range(2 * r):
        powers.append(powers[-1] * base)

    num = np.zeros((h, w), dtype=np.float64)
    den = np.zeros((h, w), dtype=np.float64)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            wgt = powers[abs(dy) + abs(dx)]
            num = num + wgt * pad[dy + r : dy + r + h, dx + r : dx + r + w]
            den = den + wgt
    return num / den


def convolve_axis(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """1-D correlation along `axis` with clamp-to-edge borders."""
    h, w = img.shape
    r = kernel.shape[0] // 2
    out = np.zeros((h, w), dtype=np.float64)
    if axis == 1:
        pad = np.pad(img, ((0, 0), (r, r)), mode="edge")
        for t in range(kernel.shape[0]):
            out = out + kernel[t] * pad[:, t : t + w]
    else:
        pad = np.pad(img, ((r, r), (0, 0)), mode="edge")
        for t in range(kernel.shape[0]):
            out = out + kernel[t] * pad[t : t + h, :]
    return out


def local_extrema(below: np.ndarray, mid: np.ndarray, above: np.ndarray,
                  threshold: float):
    """Interior pixels of `mid` strictly above or below all 26 neighbors.

    Returns (ys, xs) int64 arrays in row-major scan order.
    """
    h, w = mid.shape
    if h < 3 or w < 3:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    c = mid[1 : h - 1, 1 : w - 1]
    gt = np.ones(c.shape, dtype=bool)
    lt = np.ones(c.shape, dtype=bool)
    for level in (below, mid, above):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if level is mid and dy == 0 and dx == 0:
                    continue
                nb = level[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
                gt &= c > nb
                lt &= c < nb
    mask = (gt | lt) & (np.abs(c) >= threshold)
    ys, xs = np.nonzero(mask)
    return (ys + 1).astype(np.int64), (xs + 1).astype(np.int64)


def descriptor_histogram(mag: np.ndarray, ori: np.ndarray, weights: np.ndarray,
                         cy: int, cx: int) -> np.ndarray:
    """Accumulate a 4x4-cell, 8-bin orientation histogram over the 16x16
    patch centered at (cy, cx); offsets -8..7, clamp-to-edge sampling.

    Returns the raw 128-vector (normalization happens in the caller).
    """
    h, w = mag.shape
    offs = np.arange(-8, 8)
    yy = np.clip(cy + offs, 0, h - 1)
    xx = np.clip(cx + offs, 0, w - 1)
    m = mag[yy][:, xx] * weights
    o = ori[yy][:, xx]
    bins = np.floor(8.0 * (o + math.pi) / (2.0 * math.pi)).astype(np.int64) % 8
    cell = np.arange(16) // 4
    cell_idx = cell[:, None] * 4 + cell[None, :]
    flat = (cell_idx * 8 + bins).ravel()
    hist = np.zeros(128, dtype=np.float64)
    np.add.at(hist, flat, m.ravel())  # sequential, row-major accumulation
    return hist
