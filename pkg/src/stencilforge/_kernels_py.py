"""Pure numpy/scipy implementations of the hot kernels.

Signatures and results mirror ``_ckernels.pyx``. Nearest-seed labels and the
centroid sums are bit-identical between the two; the floating reductions in
the other kernels agree to rounding.
"""

import numpy as np
from scipy.spatial import cKDTree

NAME = "python"


def nearest_seed(seeds, width, height):
    """Label every pixel center with its nearest seed (ties -> lowest index).

    Returns ``(labels, d2)``: int64 seed index and float64 squared distance,
    both flat arrays of length ``width * height`` in row-major order.
    """
    seeds = np.ascontiguousarray(seeds, dtype=np.float64)
    n = seeds.shape[0]
    ys, xs = np.mgrid[0:height, 0:width]
    px = xs.ravel() + 0.5
    py = ys.ravel() + 0.5
    k = min(4, n)
    _, idx = cKDTree(seeds).query(np.column_stack([px, py]), k=k)
    idx = idx.reshape(px.size, k)
    dx = px[:, None] - seeds[idx, 0]
    dy = py[:, None] - seeds[idx, 1]
    d2 = dx * dx + dy * dy
    best = d2.min(axis=1)
    labels = np.where(d2 == best[:, None], idx, n).min(axis=1)

    if k < n:
        # every candidate (near-)tied: a tied seed may lie outside the k set
        amb = np.flatnonzero(d2.max(axis=1) <= best * (1.0 + 1e-9) + 1e-18)
        for p in amb:
            ddx = px[p] - seeds[:, 0]
            ddy = py[p] - seeds[:, 1]
            full = ddx * ddx + ddy * ddy
            j = int(np.argmin(full))
            labels[p] = j
            best[p] = full[j]
    return labels.astype(np.int64), best


def centroid_sums(labels, weights, width, height, n):
    """Per-seed sums of weight, weight*x and weight*y over pixel centers."""
    ys, xs = np.mgrid[0:height, 0:width]
    w = np.ascontiguousarray(weights, dtype=np.float64).ravel()
    mass = np.bincount(labels, weights=w, minlength=n)
    sx = np.bincount(labels, weights=w * (xs.ravel() + 0.5), minlength=n)
    sy = np.bincount(labels, weights=w * (ys.ravel() + 0.5), minlength=n)
    return mass, sx, sy


def spray_log_accumulate(points, sigma, prefactor, cutoff, width, height):
    """Accumulate ``log(1 - min(g, 1))`` of truncated Gaussian bumps per pixel.

    Returns ``(logacc, saturated)`` of shape ``(height, width)``; a pixel is
    saturated when some bump reaches height 1 there.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    logacc = np.zeros((height, width))
    sat = np.zeros((height, width), dtype=bool)
    two_s2 = 2.0 * sigma * sigma
    r2 = cutoff * cutoff
    for cx, cy in points:
        x0 = max(0, int(np.ceil(cx - cutoff - 0.5)))
        x1 = min(width - 1, int(np.floor(cx + cutoff - 0.5)))
        y0 = max(0, int(np.ceil(cy - cutoff - 0.5)))
        y1 = min(height - 1, int(np.floor(cy + cutoff - 0.5)))
        if x0 > x1 or y0 > y1:
            continue
        dx = np.arange(x0, x1 + 1) + 0.5 - cx
        dy = np.arange(y0, y1 + 1) + 0.5 - cy
        d2 = dy[:, None] * dy[:, None] + dx[None, :] * dx[None, :]
        inside = d2 <= r2
        g = prefactor * np.exp(-d2 / two_s2)
        hit = inside & (g >= 1.0)
        sat[y0:y1 + 1, x0:x1 + 1] |= hit
        live = inside & ~hit
        contrib = np.zeros_like(g)
        contrib[live] = np.log1p(-g[live])
        logacc[y0:y1 + 1, x0:x1 + 1] += contrib
    return logacc, sat


def neighbor_diff_sum(a):
    """``out[p] = sum over 8-neighbors n of (a[p] - a[n])``, borders clipped."""
    a = np.asarray(a, dtype=np.float64)
    H, W = a.shape
    pad = np.zeros((H + 2, W + 2))
    pad[1:-1, 1:-1] = a
    ones = np.zeros((H + 2, W + 2))
    ones[1:-1, 1:-1] = 1.0
    nsum = np.zeros((H, W))
    deg = np.zeros((H, W))
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            nsum += pad[1 + dy:H + 1 + dy, 1 + dx:W + 1 + dx]
            deg += ones[1 + dy:H + 1 + dy, 1 + dx:W + 1 + dx]
    return deg * a - nsum
