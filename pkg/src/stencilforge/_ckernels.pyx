# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, floor, sqrt, exp, log1p, INFINITY

cnp.import_array()

NAME = "cython"


def nearest_seed(seeds, int width, int height):
    cdef double[:, ::1] s = np.ascontiguousarray(seeds, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t npix = <Py_ssize_t>width * height
    labels_arr = np.empty(npix, dtype=np.int64)
    d2_arr = np.empty(npix, dtype=np.float64)
    cdef long long[::1] labels = labels_arr
    cdef double[::1] out_d2 = d2_arr

    # uniform bucket grid over the box holding both seeds and the canvas
    cdef double xmin = 0.0, ymin = 0.0, xmax = width, ymax = height
    cdef Py_ssize_t i
    for i in range(n):
        if s[i, 0] < xmin: xmin = s[i, 0]
        if s[i, 0] > xmax: xmax = s[i, 0]
        if s[i, 1] < ymin: ymin = s[i, 1]
        if s[i, 1] > ymax: ymax = s[i, 1]
    cdef double cell = sqrt((xmax - xmin) * (ymax - ymin) / n)
    if cell < 1.0:
        cell = 1.0
    cdef int gw = <int>floor((xmax - xmin) / cell) + 1
    cdef int gh = <int>floor((ymax - ymin) / cell) + 1

    cnt_arr = np.zeros(gw * gh + 1, dtype=np.int64)
    cdef long long[::1] start = cnt_arr
    cell_of_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] cell_of = cell_of_arr
    cdef int gx, gy
    for i in range(n):
        gx = <int>floor((s[i, 0] - xmin) / cell)
        gy = <int>floor((s[i, 1] - ymin) / cell)
        if gx >= gw: gx = gw - 1
        if gy >= gh: gy = gh - 1
        cell_of[i] = gy * gw + gx
        start[cell_of[i] + 1] += 1
    for i in range(gw * gh):
        start[i + 1] += start[i]
    items_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] items = items_arr
    fill_arr = cnt_arr[:-1].copy()
    cdef long long[::1] fill = fill_arr
    for i in range(n):
        # ascending seed order within each bucket
        items[fill[cell_of[i]]] = i
        fill[cell_of[i]] += 1

    cdef int px, py, r, cx, cy, ix, iy, maxr
    cdef double x, y, dx, dy, d2, best, lb
    cdef long long bi, j, c, k
    maxr = gw if gw > gh else gh
    with nogil:
        for py in range(height):
            y = py + 0.5
            cy = <int>floor((y - ymin) / cell)
            if cy >= gh: cy = gh - 1
            for px in range(width):
                x = px + 0.5
                cx = <int>floor((x - xmin) / cell)
                if cx >= gw: cx = gw - 1
                best = INFINITY
                bi = -1
                r = 0
                while r <= maxr:
                    for iy in range(cy - r, cy + r + 1):
                        if iy < 0 or iy >= gh:
                            continue
                        for ix in range(cx - r, cx + r + 1):
                            if ix < 0 or ix >= gw:
                                continue
                            if iy != cy - r and iy != cy + r and ix != cx - r and ix != cx + r:
                                continue
                            c = iy * gw + ix
                            for k in range(start[c], start[c + 1]):
                                j = items[k]
                                dx = x - s[j, 0]
                                dy = y - s[j, 1]
                                d2 = dx * dx + dy * dy
                                if d2 < best or (d2 == best and j < bi):
                                    best = d2
                                    bi = j
                    # any seed beyond ring r is farther than r * cell
                    lb = r * cell
                    if bi >= 0 and lb * lb > best:
                        break
                    r += 1
                labels[py * width + px] = bi
                out_d2[py * width + px] = best
    return labels_arr, d2_arr


def centroid_sums(labels, weights, int width, int height, Py_ssize_t n):
    cdef long long[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64).ravel()
    mass_arr = np.zeros(n)
    sx_arr = np.zeros(n)
    sy_arr = np.zeros(n)
    cdef double[::1] mass = mass_arr
    cdef double[::1] sx = sx_arr
    cdef double[::1] sy = sy_arr
    cdef int px, py
    cdef Py_ssize_t p
    cdef long long j
    with nogil:
        for py in range(height):
            for px in range(width):
                p = py * width + px
                j = lab[p]
                mass[j] += w[p]
                sx[j] += w[p] * (px + 0.5)
                sy[j] += w[p] * (py + 0.5)
    return mass_arr, sx_arr, sy_arr


def spray_log_accumulate(points, double sigma, double prefactor, double cutoff,
                         int width, int height):
    cdef double[:, ::1] pts = np.ascontiguousarray(
        np.asarray(points, dtype=np.float64).reshape(-1, 2))
    logacc_arr = np.zeros((height, width))
    sat_arr = np.zeros((height, width), dtype=np.uint8)
    cdef double[:, ::1] logacc = logacc_arr
    cdef unsigned char[:, ::1] sat = sat_arr
    cdef double two_s2 = 2.0 * sigma * sigma
    cdef double r2 = cutoff * cutoff
    cdef Py_ssize_t i, n = pts.shape[0]
    cdef int x0, x1, y0, y1, px, py
    cdef double cx, cy, dx, dy, d2, g
    with nogil:
        for i in range(n):
            cx = pts[i, 0]
            cy = pts[i, 1]
            x0 = <int>ceil(cx - cutoff - 0.5)
            x1 = <int>floor(cx + cutoff - 0.5)
            y0 = <int>ceil(cy - cutoff - 0.5)
            y1 = <int>floor(cy + cutoff - 0.5)
            if x0 < 0: x0 = 0
            if y0 < 0: y0 = 0
            if x1 > width - 1: x1 = width - 1
            if y1 > height - 1: y1 = height - 1
            for py in range(y0, y1 + 1):
                dy = py + 0.5 - cy
                for px in range(x0, x1 + 1):
                    dx = px + 0.5 - cx
                    d2 = dy * dy + dx * dx
                    if d2 > r2:
                        continue
                    g = prefactor * exp(-d2 / two_s2)
                    if g >= 1.0:
                        sat[py, px] = 1
                    else:
                        logacc[py, px] += log1p(-g)
    return logacc_arr, sat_arr.astype(bool)


def neighbor_diff_sum(a):
    cdef double[:, ::1] v = np.ascontiguousarray(a, dtype=np.float64)
    cdef int H = v.shape[0], W = v.shape[1]
    out_arr = np.zeros((H, W))
    cdef double[:, ::1] out = out_arr
    cdef int y, x, ny, nx, dy, dx
    cdef double acc, c
    with nogil:
        for y in range(H):
            for x in range(W):
                c = v[y, x]
                acc = 0.0
                for dy in range(-1, 2):
                    ny = y + dy
                    if ny < 0 or ny >= H:
                        continue
                    for dx in range(-1, 2):
                        nx = x + dx
                        if (dy == 0 and dx == 0) or nx < 0 or nx >= W:
                            continue
                        acc += c - v[ny, nx]
                out[y, x] = acc
    return out_arr
