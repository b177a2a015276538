"""Stippling by opacity-weighted centroidal Voronoi tessellation.

Seeds are drawn by importance sampling the opacity map, then relaxed with
Lloyd's algorithm on the discrete Voronoi diagram of the pixel grid: each
pixel center belongs to its nearest seed, and each seed moves to the
density-weighted centroid of its pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .raster import as_channel


class EmptyDensityError(ValueError):
    """The density map has no positive value."""

    def __init__(self, msg="empty density"):
        super().__init__(msg)


@dataclass
class Stippling:
    points: np.ndarray  # (N, 2) continuous pixel coordinates
    canvas_width: int
    canvas_height: int
    scale: float = 0.01  # cm per pixel
    energy_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.canvas_width < 1 or self.canvas_height < 1:
            raise ValueError("canvas must be at least 1x1")
        p = self.points
        if p.size and (p.min() < 0 or np.any(p[:, 0] >= self.canvas_width)
                       or np.any(p[:, 1] >= self.canvas_height)):
            raise ValueError("stipple points must lie inside the canvas")

    def __len__(self):
        return len(self.points)

    def to_json(self) -> dict:
        return {
            "canvas_width": int(self.canvas_width),
            "canvas_height": int(self.canvas_height),
            "scale_cm_per_px": float(self.scale),
            "points": [[float(x), float(y)] for x, y in self.points],
            "cvt_energy_trace": [dict(r) for r in self.energy_trace],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Stippling":
        return cls(
            points=np.array(data["points"], dtype=np.float64).reshape(-1, 2),
            canvas_width=int(data["canvas_width"]),
            canvas_height=int(data["canvas_height"]),
            scale=float(data["scale_cm_per_px"]),
            energy_trace=list(data.get("cvt_energy_trace", [])),
        )

    def save(self, path) -> None:
        # repr-precision floats (17 significant digits)
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Stippling":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LloydOptions:
    max_iters: int = 100
    move_tol: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.move_tol <= 0:
            raise ValueError("move_tol must be positive")


def importance_sample(density, n: int, rng_seed: int = 0) -> np.ndarray:
    """Draw ``n`` points with probability proportional to per-pixel density.

    A pixel is picked by inverting the cumulative sum of the flattened
    density, then the point is placed uniformly inside that pixel's square.
    """
    rho = as_channel(density)
    if n < 1:
        raise ValueError("need at least one point")
    H, W = rho.shape
    cdf = np.cumsum(rho.ravel())
    if cdf[-1] <= 0:
        raise EmptyDensityError()
    rng = np.random.default_rng(rng_seed)
    u = rng.random(n) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, cdf.size - 1)
    row, col = np.divmod(idx, W)
    jitter = rng.random((n, 2))
    x = col + jitter[:, 0]
    y = row + jitter[:, 1]
    # col + (1 - 2**-53) can round up onto the next pixel boundary
    x = np.minimum(x, np.nextafter(col + 1.0, col))
    y = np.minimum(y, np.nextafter(row + 1.0, row))
    return np.column_stack([x, y])


def cvt_energy(points, density) -> float:
    """Sum over pixel centers of density times squared distance to the nearest seed."""
    rho = as_channel(density)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    H, W = rho.shape
    _, d2 = kernels.nearest_seed(pts, W, H)
    return float(np.dot(rho.ravel(), d2))


def lloyd_relax(points, density, opts: LloydOptions | None = None,
                scale: float = 0.01) -> Stippling:
    """Lloyd iterations toward a density-weighted CVT on the pixel grid.

    A seed whose cell carries no density is re-sampled from the density with
    a seed derived from ``opts.rng_seed`` and the iteration number. The
    returned stippling records, per iteration, the CVT energy of the seeds
    entering that iteration, the largest move, and whether re-sampling
    happened; its last entry is the energy of the final seeds.
    """
    opts = opts or LloydOptions()
    rho = as_channel(density)
    H, W = rho.shape
    if not np.any(rho > 0):
        raise EmptyDensityError()
    seeds = np.array(points, dtype=np.float64).reshape(-1, 2)
    n = len(seeds)
    if n < 1:
        raise ValueError("need at least one seed")
    flat = rho.ravel()
    trace = []

    for it in range(opts.max_iters):
        labels, d2 = kernels.nearest_seed(seeds, W, H)
        energy = float(np.dot(flat, d2))
        mass, sx, sy = kernels.centroid_sums(labels, flat, W, H, n)
        new = seeds.copy()
        live = mass > 0
        new[live, 0] = sx[live] / mass[live]
        new[live, 1] = sy[live] / mass[live]
        dead = np.flatnonzero(~live)
        if dead.size:
            sub = np.random.SeedSequence(opts.rng_seed, spawn_key=(it,)).generate_state(1)[0]
            new[dead] = importance_sample(rho, dead.size, int(sub))
        moved = float(np.sqrt(((new[live] - seeds[live]) ** 2).sum(axis=1)).max()) if live.any() else 0.0
        trace.append({"iteration": it, "energy": energy, "max_move": moved,
                      "resampled": int(dead.size)})
        seeds = new
        if moved < opts.move_tol and not dead.size:
            break

    _, d2 = kernels.nearest_seed(seeds, W, H)
    trace.append({"iteration": len(trace), "energy": float(np.dot(flat, d2)),
                  "max_move": 0.0, "resampled": 0})
    return Stippling(seeds, W, H, scale, trace)


def stipple(density, n: int, opts: LloydOptions | None = None, scale: float = 0.01) -> Stippling:
    """Importance-sample ``n`` seeds and relax them."""
    opts = opts or LloydOptions()
    init = importance_sample(density, n, opts.rng_seed)
    return lloyd_relax(init, density, opts, scale)
