"""Soft layer decomposition by blocked coordinate descent.

The objective is ``gamma_data * E_data + gamma_smooth * E_smooth +
gamma_sparse * E_sparse`` over an alpha stack and a palette. Each outer
iteration minimizes it over one alpha layer at a time (a box-constrained
convex quadratic, solved by projected gradient) and then over all palette
colors at once (linear least squares per channel).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import lsq_linear

from . import kernels
from .compositor import (
    as_palette,
    as_stack,
    composite,
    layer_affine_decomposition,
    palette_weight_maps,
)
from .raster import as_image

log = logging.getLogger(__name__)

# sup of the 8-neighbor grid Laplacian's spectrum (symbol peaks at 12) times
# the factor 4 from counting each ordered pair
SMOOTH_CURVATURE = 48.0


class SolverError(RuntimeError):
    """Non-finite values encountered during a block solve."""


@dataclass(frozen=True)
class EnergyWeights:
    gamma_data: float = 1.0
    gamma_smooth: float = 0.05
    gamma_sparse: float = 0.05

    def __post_init__(self):
        if min(self.gamma_data, self.gamma_smooth, self.gamma_sparse) < 0:
            raise ValueError("energy weights must be nonnegative")
        if self.gamma_data <= 0:
            raise ValueError("gamma_data must be positive")


@dataclass(frozen=True)
class SolverOptions:
    max_outer_iters: int = 50
    outer_tol: float = 1e-4
    qp_max_iters: int = 500
    qp_grad_tol: float = 1e-6
    rng_seed: int = 0
    background_restarts: bool = True

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.qp_max_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.outer_tol <= 0 or self.qp_grad_tol <= 0:
            raise ValueError("tolerances must be positive")


class EnergyRecord(NamedTuple):
    iteration: int
    block: str
    e_data: float
    e_smooth: float
    e_sparse: float
    e_total: float


@dataclass
class DecompositionResult:
    stack: np.ndarray
    palette: np.ndarray
    energy_trace: list[EnergyRecord] = field(default_factory=list)
    background_start: int = 0

    @property
    def n_layers(self) -> int:
        return self.stack.shape[0]


# -- energy terms ------------------------------------------------------------

def energy_data(input_image, composite_image) -> float:
    X = as_image(input_image)
    Y = as_image(composite_image)
    if X.shape != Y.shape:
        raise ValueError(f"dimension mismatch: {X.shape} vs {Y.shape}")
    return float(np.sum((X - Y) ** 2))


def _layer_smooth(a: np.ndarray) -> float:
    # each unordered neighbor pair appears twice in the ordered sum
    s = np.sum((a[:, 1:] - a[:, :-1]) ** 2)
    s += np.sum((a[1:, :] - a[:-1, :]) ** 2)
    s += np.sum((a[1:, 1:] - a[:-1, :-1]) ** 2)
    s += np.sum((a[1:, :-1] - a[:-1, 1:]) ** 2)
    return 2.0 * float(s)


def energy_smooth(stack) -> float:
    """Sum over layers, pixels and ordered 8-neighbor pairs of squared alpha differences."""
    stack = as_stack(stack)
    return float(sum(_layer_smooth(a) for a in stack))


def energy_sparse(stack) -> float:
    stack = as_stack(stack)
    return float(np.sum((1.0 - stack.sum(axis=0)) ** 2))


def total_energy(input_image, stack, palette, weights: EnergyWeights):
    """Return ``(E_data, E_smooth, E_sparse, E_total)``."""
    ed = energy_data(input_image, composite(stack, palette))
    es = energy_smooth(stack)
    ep = energy_sparse(stack)
    et = weights.gamma_data * ed + weights.gamma_smooth * es + weights.gamma_sparse * ep
    return ed, es, ep, et


# -- initialization ----------------------------------------------------------

def _nearest(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)  # first minimum -> lowest index on ties


def _kmeans(points, k, rng, max_iter=100, tol=1e-6):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = rng.choice(n, p=d2 / total)
        else:
            pick = rng.integers(n)
        centers[j] = points[pick]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))

    labels = _nearest(points, centers)
    for _ in range(max_iter):
        new = centers.copy()
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts):
            new[j] = points[labels == j].mean(axis=0)
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        labels = _nearest(points, centers)
        if shift < tol:
            break
    return centers, labels


def _hard_assign(X: np.ndarray, palette: np.ndarray, n_layers: int) -> np.ndarray:
    H, W, _ = X.shape
    assign = _nearest(X.reshape(-1, 3), palette).reshape(H, W)
    stack = np.zeros((n_layers, H, W))
    for l in range(1, n_layers + 1):
        stack[l - 1][assign == l] = 1.0
    return stack


def kmeans_palette(input_image, n_layers: int, rng_seed: int = 0) -> np.ndarray:
    """K-means (k = L+1) cluster centers sorted by descending cluster size."""
    if n_layers < 1:
        raise ValueError("number of layers must be >= 1")
    X = as_image(input_image)
    pts = X.reshape(-1, 3)
    k = n_layers + 1
    if len(np.unique(pts, axis=0)) < k:
        warnings.warn(
            f"image has fewer than {k} distinct colors; duplicate palette entries will occur",
            stacklevel=2,
        )
    rng = np.random.default_rng(rng_seed)
    centers, labels = _kmeans(pts, k, rng)
    counts = np.bincount(labels, minlength=k)
    order = np.argsort(-counts, kind="stable")
    return np.clip(centers[order], 0.0, 1.0)


def init_kmeans(input_image, n_layers: int, rng_seed: int = 0):
    """K-means color clustering and hard alpha assignment.

    The most populous cluster becomes the background color; the rest follow
    in descending size. Each pixel gets alpha 1 on the layer of its nearest
    color and 0 elsewhere. Returns ``(stack, palette)``.
    """
    X = as_image(input_image)
    palette = kmeans_palette(X, n_layers, rng_seed)
    return _hard_assign(X, palette, n_layers), palette


# -- alpha block -------------------------------------------------------------

class LayerQuadratic:
    """The full objective as a function of one alpha layer, others held fixed.

    ``value(a)`` is the total energy (constant terms included), so it agrees
    with :func:`total_energy` at every ``a``.
    """

    def __init__(self, input_image, stack, palette, weights: EnergyWeights, l: int):
        X = as_image(input_image)
        stack = as_stack(stack)
        self.l = l
        self.weights = weights
        self.slope, intercept = layer_affine_decomposition(stack, palette, l)
        self.offset = intercept - X
        others = np.delete(stack, l - 1, axis=0)
        self.rest = 1.0 - others.sum(axis=0)
        self.smooth_const = float(sum(_layer_smooth(a) for a in others))
        self.slope_sq = np.sum(self.slope ** 2, axis=2)
        self.lipschitz = (
            2.0 * weights.gamma_data * float(self.slope_sq.max())
            + SMOOTH_CURVATURE * weights.gamma_smooth
            + 2.0 * weights.gamma_sparse
        )

    def terms(self, a):
        r = self.slope * a[:, :, None] + self.offset
        ed = float(np.sum(r * r))
        es = _layer_smooth(a) + self.smooth_const
        ep = float(np.sum((self.rest - a) ** 2))
        w = self.weights
        return ed, es, ep, w.gamma_data * ed + w.gamma_smooth * es + w.gamma_sparse * ep

    def value(self, a) -> float:
        return self.terms(a)[3]

    def gradient(self, a) -> np.ndarray:
        w = self.weights
        r = self.slope * a[:, :, None] + self.offset
        g = 2.0 * w.gamma_data * np.sum(self.slope * r, axis=2)
        if w.gamma_smooth:
            g += 4.0 * w.gamma_smooth * kernels.neighbor_diff_sum(a)
        if w.gamma_sparse:
            g -= 2.0 * w.gamma_sparse * (self.rest - a)
        return g


def _projected_gradient(qp: LayerQuadratic, a0: np.ndarray, opts: SolverOptions) -> np.ndarray:
    if qp.lipschitz <= 0:
        return a0.copy()
    step = 1.0 / qp.lipschitz
    a = a0.copy()
    for _ in range(opts.qp_max_iters):
        g = qp.gradient(a)
        if not np.all(np.isfinite(g)):
            raise SolverError(f"non-finite gradient in layer {qp.l}")
        pg = a - np.clip(a - g, 0.0, 1.0)
        if np.abs(pg).max() < opts.qp_grad_tol:
            break
        a = np.clip(a - step * g, 0.0, 1.0)
    return a


def solve_alpha_layer(input_image, stack, palette, weights: EnergyWeights, l: int,
                      opts: SolverOptions | None = None) -> np.ndarray:
    """Minimize the objective over layer ``l`` (1-based) in the unit box."""
    opts = opts or SolverOptions()
    stack = as_stack(stack)
    if not 1 <= l <= stack.shape[0]:
        raise IndexError(f"layer index {l} out of range 1..{stack.shape[0]}")
    qp = LayerQuadratic(input_image, stack, palette, weights, l)
    incumbent = stack[l - 1]
    a = _projected_gradient(qp, incumbent, opts)
    f_new = qp.value(a)
    if not np.isfinite(f_new):
        raise SolverError(f"non-finite objective in layer {l}")
    if f_new > qp.value(incumbent):
        return incumbent.copy()
    return a


# -- palette block -----------------------------------------------------------

def solve_palette(input_image, stack, palette_in, weights: EnergyWeights | None = None) -> np.ndarray:
    """Least-squares update of all L+1 colors with the alphas fixed.

    Each channel is a bounded linear least-squares problem in the L+1 color
    values. Colors with no visible weight anywhere (fully occluded) keep
    their incumbent value, and a channel update that would raise the data
    energy is rejected. ``weights`` only scales the data term, which does not
    move the minimizer; it is accepted for signature symmetry.
    """
    X = as_image(input_image)
    stack = as_stack(stack)
    pal = as_palette(palette_in, stack.shape[0])
    A = palette_weight_maps(stack).reshape(pal.shape[0], -1).T
    targets = X.reshape(-1, 3)
    visible = np.flatnonzero(np.abs(A).max(axis=0) > 1e-12)
    hidden = np.setdiff1d(np.arange(pal.shape[0]), visible)
    out = pal.copy()
    if visible.size == 0:
        return out
    Av = A[:, visible]
    for ch in range(3):
        inc = pal[:, ch]
        rhs = targets[:, ch] - A[:, hidden] @ inc[hidden]
        sol = lsq_linear(Av, rhs, bounds=(0.0, 1.0), method="bvls", tol=1e-14).x
        cand = inc.copy()
        cand[visible] = np.clip(sol, 0.0, 1.0)
        if not np.all(np.isfinite(cand)):
            continue
        sse_new = np.sum((targets[:, ch] - A @ cand) ** 2)
        sse_old = np.sum((targets[:, ch] - A @ inc) ** 2)
        if sse_new <= sse_old:
            out[:, ch] = cand
    return out


# -- driver ------------------------------------------------------------------

def _descend(X, stack, palette, weights, opts, trace):
    n_layers = stack.shape[0]

    def record(it, block, terms):
        trace.append(EnergyRecord(it, block, *map(float, terms)))

    record(0, "init", total_energy(X, stack, palette, weights))
    prev = trace[-1].e_total
    for it in range(1, opts.max_outer_iters + 1):
        for l in range(1, n_layers + 1):
            qp = LayerQuadratic(X, stack, palette, weights, l)
            a = _projected_gradient(qp, stack[l - 1], opts)
            terms = qp.terms(a)
            if not np.isfinite(terms[3]):
                raise SolverError(f"non-finite objective in layer {l}")
            before = qp.terms(stack[l - 1])
            if terms[3] <= before[3]:
                stack[l - 1] = a
            else:
                terms = before
            record(it, f"alpha{l}", terms)
        palette = solve_palette(X, stack, palette, weights)
        record(it, "palette", total_energy(X, stack, palette, weights))
        cur = trace[-1].e_total
        log.debug("outer %d: E_total=%.10g", it, cur)
        if prev - cur <= opts.outer_tol * max(abs(prev), 1e-300):
            break
        prev = cur
    return stack, palette


def decompose(input_image, n_layers: int, weights: EnergyWeights | None = None,
              opts: SolverOptions | None = None) -> DecompositionResult:
    """Decompose an image into ``n_layers`` alpha layers plus a palette.

    Starts from the K-means initialization and alternates per-layer alpha
    solves (bottom to top) with a joint palette solve until the relative
    decrease of the total energy over one sweep drops below ``outer_tol``.

    The joint problem is not convex. With ``opts.background_restarts`` the
    descent is repeated with each K-means cluster taking the background role
    (remaining clusters keep their size order) and the lowest-energy run is
    returned; ties favor the largest-cluster background.
    """
    weights = weights or EnergyWeights()
    opts = opts or SolverOptions()
    X = as_image(input_image)
    base = kmeans_palette(X, n_layers, opts.rng_seed)
    starts = range(n_layers + 1) if opts.background_restarts else range(1)

    best = None
    for bg in starts:
        order = [bg] + [i for i in range(n_layers + 1) if i != bg]
        palette = base[order]
        stack = _hard_assign(X, palette, n_layers)
        trace: list[EnergyRecord] = []
        stack, palette = _descend(X, stack, palette, weights, opts, trace)
        log.debug("start %d: E_total=%.10g", bg, trace[-1].e_total)
        if best is None or trace[-1].e_total < best.energy_trace[-1].e_total:
            best = DecompositionResult(stack, palette, trace, background_start=bg)
    return best
