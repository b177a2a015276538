"""Ear-clipping triangulation of polygons with holes.

Holes are first spliced into the outer ring by bridges: holes are taken in
order of decreasing rightmost x, and each hole's rightmost vertex is joined
to the nearest vertex of the current outer ring that it can see. The
resulting weakly simple ring is then cut into ears. No vertex is ever
dropped, so the boundary edges of the triangulation are exactly the input
ring edges (needed for watertight extrusion).
"""

from __future__ import annotations

import math

import numpy as np


class TriangulationError(RuntimeError):
    pass


def signed_area(ring) -> float:
    """Shoelace area; positive for counter-clockwise rings."""
    r = np.asarray(ring, dtype=np.float64)
    x, y = r[:, 0], r[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


class _Ring:
    """Doubly linked node storage shared by all rings."""

    def __init__(self):
        self.x: list[float] = []
        self.y: list[float] = []
        self.vid: list[int] = []
        self.prev: list[int] = []
        self.next: list[int] = []
        self.alive: list[bool] = []

    def add_ring(self, coords, vid0):
        start = len(self.x)
        n = len(coords)
        for k, (px, py) in enumerate(coords):
            self.x.append(float(px))
            self.y.append(float(py))
            self.vid.append(vid0 + k)
            self.prev.append(start + (k - 1) % n)
            self.next.append(start + (k + 1) % n)
            self.alive.append(True)
        return start

    def clone(self, i):
        self.x.append(self.x[i])
        self.y.append(self.y[i])
        self.vid.append(self.vid[i])
        self.prev.append(-1)
        self.next.append(-1)
        self.alive.append(True)
        return len(self.x) - 1

    def walk(self, start):
        out = [start]
        p = self.next[start]
        while p != start:
            out.append(p)
            p = self.next[p]
        return out

    def locally_inside(self, v, qx, qy):
        """Whether direction v->q starts into the material (left of the ring)."""
        p, n = self.prev[v], self.next[v]
        x, y = self.x, self.y
        left_in = _orient(x[p], y[p], x[v], y[v], qx, qy) > 0
        left_out = _orient(x[v], y[v], x[n], y[n], qx, qy) > 0
        if _orient(x[p], y[p], x[v], y[v], x[n], y[n]) >= 0:
            return left_in and left_out
        return left_in or left_out


def _segments_hit(ax, ay, bx, by, ex0, ey0, ex1, ey1):
    """Vectorized closed-segment intersection of a-b against edges e0-e1."""
    d1 = _orient(ex0, ey0, ex1, ey1, ax, ay)
    d2 = _orient(ex0, ey0, ex1, ey1, bx, by)
    d3 = _orient(ax, ay, bx, by, ex0, ey0)
    d4 = _orient(ax, ay, bx, by, ex1, ey1)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)

    def on_seg(px, py, qx, qy, rx, ry, d):
        return (d == 0) & (np.minimum(px, qx) <= rx) & (rx <= np.maximum(px, qx)) \
            & (np.minimum(py, qy) <= ry) & (ry <= np.maximum(py, qy))

    touch = (
        on_seg(ex0, ey0, ex1, ey1, ax, ay, d1)
        | on_seg(ex0, ey0, ex1, ey1, bx, by, d2)
        | on_seg(ax, ay, bx, by, ex0, ey0, d3)
        | on_seg(ax, ay, bx, by, ex1, ey1, d4)
    )
    return proper | touch


def _bridge_holes(R: _Ring, outer_start: int, hole_starts: list[int]) -> int:
    def rightmost(start):
        best = start
        for i in R.walk(start):
            if R.x[i] > R.x[best] or (R.x[i] == R.x[best] and R.y[i] < R.y[best]):
                best = i
        return best

    holes = [rightmost(h) for h in hole_starts]
    holes.sort(key=lambda m: (-R.x[m], R.y[m], m))

    # ring edges never change; bridges are appended as they are made
    X = np.array(R.x)
    Y = np.array(R.y)
    nxt = np.array(R.next)
    ex0, ey0, ex1, ey1 = X, Y, X[nxt], Y[nxt]
    outer = np.array(R.walk(outer_start))
    cand_id, cand_x, cand_y = outer, X[outer], Y[outer]

    for m in holes:
        mx, my = R.x[m], R.y[m]
        hole_nodes = np.array(R.walk(m))
        d2 = (cand_x - mx) ** 2 + (cand_y - my) ** 2
        order = np.lexsort((cand_id, d2))
        at_m = ((ex0 == mx) & (ey0 == my)) | ((ex1 == mx) & (ey1 == my))
        chosen = -1
        for k in order:
            v = int(cand_id[k])
            vx, vy = R.x[v], R.y[v]
            if (vx, vy) == (mx, my):
                continue
            if not (R.locally_inside(v, mx, my) and R.locally_inside(m, vx, vy)):
                continue
            at_v = ((ex0 == vx) & (ey0 == vy)) | ((ex1 == vx) & (ey1 == vy))
            hit = _segments_hit(mx, my, vx, vy, ex0, ey0, ex1, ey1) & ~at_m & ~at_v
            if not hit.any():
                chosen = v
                break
        if chosen < 0:
            raise TriangulationError("no visible bridge vertex for a hole")
        v = chosen
        vx, vy = R.x[v], R.y[v]
        m2 = R.clone(m)
        v2 = R.clone(v)
        vn, mp = R.next[v], R.prev[m]
        # v -> m -> (hole) -> mp -> m2 -> v2 -> vn
        R.next[v], R.prev[m] = m, v
        R.next[mp], R.prev[m2] = m2, mp
        R.next[m2], R.prev[v2] = v2, m2
        R.next[v2], R.prev[vn] = vn, v2

        ex0 = np.append(ex0, mx)
        ey0 = np.append(ey0, my)
        ex1 = np.append(ex1, vx)
        ey1 = np.append(ey1, vy)
        cand_id = np.concatenate([cand_id, hole_nodes, [m2, v2]])
        cand_x = np.concatenate([cand_x, X[hole_nodes], [mx, vx]])
        cand_y = np.concatenate([cand_y, Y[hole_nodes], [my, vy]])
    return outer_start


class _Grid:
    def __init__(self, R: _Ring, nodes):
        xs = np.array([R.x[i] for i in nodes])
        ys = np.array([R.y[i] for i in nodes])
        self.x0, self.y0 = xs.min(), ys.min()
        span = max(xs.max() - self.x0, ys.max() - self.y0, 1e-300)
        self.cell = span / max(1.0, math.sqrt(len(nodes)))
        self.buckets: dict[tuple[int, int], list[int]] = {}
        for i, px, py in zip(nodes, xs, ys):
            self.buckets.setdefault(self._key(px, py), []).append(i)

    def _key(self, px, py):
        return int((px - self.x0) // self.cell), int((py - self.y0) // self.cell)

    def query(self, xmin, ymin, xmax, ymax):
        i0, j0 = self._key(xmin, ymin)
        i1, j1 = self._key(xmax, ymax)
        if (i1 - i0 + 1) * (j1 - j0 + 1) > 4 * len(self.buckets):
            for b in self.buckets.values():
                yield from b
            return
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                yield from self.buckets.get((i, j), ())


def _in_wedge(ax, ay, bx, by, cx, cy, qx, qy):
    # open angle at a from ray a->b counter-clockwise to ray a->c
    return _orient(ax, ay, bx, by, qx, qy) > 0 and _orient(ax, ay, cx, cy, qx, qy) < 0


def _is_ear(R: _Ring, grid: _Grid, b: int) -> bool:
    a, c = R.prev[b], R.next[b]
    x, y = R.x, R.y
    ax, ay, bx, by, cx, cy = x[a], y[a], x[b], y[b], x[c], y[c]
    if _orient(ax, ay, bx, by, cx, cy) <= 0:
        return False
    xmin, xmax = min(ax, bx, cx), max(ax, bx, cx)
    ymin, ymax = min(ay, by, cy), max(ay, by, cy)
    corners = ((ax, ay, bx, by, cx, cy), (bx, by, cx, cy, ax, ay), (cx, cy, ax, ay, bx, by))
    for p in grid.query(xmin, ymin, xmax, ymax):
        if p == a or p == b or p == c or not R.alive[p]:
            continue
        px, py = x[p], y[p]
        if px < xmin or px > xmax or py < ymin or py > ymax:
            continue
        coincident = False
        for ux, uy, vx, vy, wx, wy in corners:
            if px == ux and py == uy:
                coincident = True
                # a duplicate of a corner blocks if its ring edges enter the triangle
                for q in (R.prev[p], R.next[p]):
                    if _in_wedge(ux, uy, vx, vy, wx, wy, x[q], y[q]):
                        return False
                break
        if coincident:
            continue
        if (_orient(ax, ay, bx, by, px, py) >= 0 and _orient(bx, by, cx, cy, px, py) >= 0
                and _orient(cx, cy, ax, ay, px, py) >= 0):
            return False
    return True


def _same(R: _Ring, i: int, j: int) -> bool:
    return R.x[i] == R.x[j] and R.y[i] == R.y[j]


def _unlink(R: _Ring, i: int) -> None:
    p, n = R.prev[i], R.next[i]
    R.next[p], R.prev[n] = n, p
    R.alive[i] = False


def _tidy(R: _Ring, todo: list[int], remaining: int) -> tuple[int, int]:
    """Drop zero-length edges and zero-width spikes around the nodes in ``todo``.

    Both appear where the boundary touches itself (a hole touching the
    outline or another hole at one point). Coincident vertices share an id,
    so a spike x -> y -> x bounds no area and its two edges cancel.
    Returns a surviving node and the new node count.
    """
    keep = todo[-1]
    while todo and remaining > 3:
        i = todo.pop()
        if not R.alive[i]:
            continue
        p, n = R.prev[i], R.next[i]
        if _same(R, i, n) or _same(R, p, n):
            _unlink(R, i)
            remaining -= 1
            todo.extend([p, n])
            keep = n
        elif R.alive[i]:
            keep = i
    return keep, remaining


def _clip_ears(R: _Ring, start: int) -> list[tuple[int, int, int]]:
    nodes = R.walk(start)
    grid = _Grid(R, nodes)
    ear, remaining = _tidy(R, list(nodes), len(nodes))
    tris = []
    stop = ear
    while remaining > 3:
        a, c = R.prev[ear], R.next[ear]
        if _is_ear(R, grid, ear):
            tris.append((R.vid[a], R.vid[ear], R.vid[c]))
            _unlink(R, ear)
            ear, remaining = _tidy(R, [a, c], remaining - 1)
            stop = ear
            continue
        ear = c
        if ear == stop:
            raise TriangulationError(f"ear clipping stalled with {remaining} vertices left")
    a, c = R.prev[ear], R.next[ear]
    if _orient(R.x[a], R.y[a], R.x[ear], R.y[ear], R.x[c], R.y[c]) <= 0:
        raise TriangulationError("final triangle is degenerate")
    tris.append((R.vid[a], R.vid[ear], R.vid[c]))
    return tris


def coincident_ids(verts) -> np.ndarray:
    """Map every vertex to the first vertex with identical coordinates."""
    _, first, inverse = np.unique(np.asarray(verts), axis=0, return_index=True, return_inverse=True)
    return first[inverse.ravel()]


def triangulate_polygon(outer, holes=()) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate a polygon with holes.

    ``outer`` and each hole are ``(n, 2)`` vertex rings without a repeated
    closing vertex; orientation is normalized internally. Returns
    ``(vertices, triangles)`` where ``vertices`` stacks the outer ring then
    each hole ring in input order, and ``triangles`` are counter-clockwise
    index triples into it. Vertices with identical coordinates (rings
    touching at a point) are identified: triangles reference the first of
    them.
    """
    outer = np.asarray(outer, dtype=np.float64)
    holes = [np.asarray(h, dtype=np.float64) for h in holes]
    if len(outer) < 3 or any(len(h) < 3 for h in holes):
        raise TriangulationError("rings need at least 3 vertices")
    R = _Ring()
    vid = 0
    # material on the left: outer counter-clockwise, holes clockwise
    o = outer if signed_area(outer) > 0 else outer[::-1]
    outer_start = R.add_ring(o, vid)
    outer_ids = np.arange(len(outer)) if o is outer else np.arange(len(outer))[::-1]
    ids = [outer_ids]
    vid += len(outer)
    hole_starts = []
    for h in holes:
        cw = h if signed_area(h) < 0 else h[::-1]
        hole_starts.append(R.add_ring(cw, vid))
        hid = np.arange(vid, vid + len(h))
        ids.append(hid if cw is h else hid[::-1])
        vid += len(h)
    # node vids are positions in the oriented rings; map back to input order
    oriented_to_input = np.concatenate(ids)
    start = _bridge_holes(R, outer_start, hole_starts) if holes else outer_start
    tris = np.array(_clip_ears(R, start), dtype=np.int64).reshape(-1, 3)
    verts = np.vstack([outer, *holes]) if holes else outer.copy()
    return verts, coincident_ids(verts)[oriented_to_input[tris]]
