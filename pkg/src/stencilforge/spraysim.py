"""Spray-paint deposition through a stencil.

Every hole deposits an unnormalized Gaussian bump of peak height
``prefactor`` and variance ``r**2 * (1 + h) / 4``. Bumps combine by
complementary probability, ``I = 1 - prod(1 - min(g_i, 1))``, so coverage
saturates at 1 however many holes overlap or however long one sprays.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .compositor import composite
from .stippler import Stippling

DEFAULT_RADIUS_CM = 0.05


@dataclass(frozen=True)
class SprayParams:
    radius_cm: float = DEFAULT_RADIUS_CM
    height: float = 7.0
    prefactor: float = 1.0
    scale: float = 0.01  # cm per pixel
    truncation_sigmas: float = 4.0

    def __post_init__(self):
        if self.radius_cm <= 0:
            raise ValueError("radius_cm must be positive")
        if self.height < 0:
            raise ValueError("height must be nonnegative")
        if self.prefactor < 0:
            raise ValueError("prefactor must be nonnegative")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.truncation_sigmas < 3:
            raise ValueError("truncation_sigmas must be >= 3")

    def with_(self, **changes) -> "SprayParams":
        return replace(self, **changes)


def dot_sigma(params: SprayParams) -> float:
    """Standard deviation (cm) of one hole's deposition footprint.

    ``sigma**2 = r**2 * (1 + h) / 4``, evaluated as ``r * sqrt(1 + h) / 2`` so
    that exact inputs such as r = 0.05, h = 15 give exactly 0.1.
    """
    return 0.5 * params.radius_cm * math.sqrt(1.0 + params.height)


def _empty_alpha(width, height):
    return np.zeros((height, width))


def simulate_alpha(stip: Stippling | None, params: SprayParams,
                   canvas: tuple[int, int] | None = None) -> np.ndarray:
    """Predicted paint coverage on the stippling's canvas, shape ``(H, W)``.

    The stippling's own scale converts the footprint to pixels. ``stip`` may
    be None (no holes) when ``canvas=(width, height)`` is given.
    """
    if stip is None or len(stip) == 0:
        if stip is not None:
            canvas = (stip.canvas_width, stip.canvas_height)
        if canvas is None:
            raise ValueError("an empty simulation needs a canvas size")
        return _empty_alpha(*canvas)

    sigma_px = dot_sigma(params) / stip.scale
    if sigma_px < 0.25:
        warnings.warn(f"sub-pixel footprint (sigma = {sigma_px:.3g} px)", stacklevel=2)
    cutoff = params.truncation_sigmas * sigma_px
    logacc, sat = kernels.spray_log_accumulate(
        stip.points, sigma_px, params.prefactor, cutoff, stip.canvas_width, stip.canvas_height
    )
    out = -np.expm1(logacc)
    out[sat] = 1.0
    return np.clip(out, 0.0, 1.0)


def simulate_composite(decomp, stipplings, params: SprayParams) -> np.ndarray:
    """Paint every layer's simulated coverage over the primed background.

    ``decomp`` is a DecompositionResult (or anything with ``stack`` and
    ``palette``); ``stipplings`` holds one Stippling (or None for a skipped,
    empty layer) per alpha layer.
    """
    stack = np.asarray(decomp.stack)
    L, H, W = stack.shape
    if len(stipplings) != L:
        raise ValueError(f"expected {L} stipplings, got {len(stipplings)}")
    alphas = np.empty((L, H, W))
    for i, st in enumerate(stipplings):
        if st is not None and (st.canvas_width, st.canvas_height) != (W, H):
            raise ValueError(
                f"stippling {i + 1} canvas {st.canvas_width}x{st.canvas_height} "
                f"does not match layers {W}x{H}"
            )
        alphas[i] = simulate_alpha(st, params, canvas=(W, H))
    return composite(alphas, decomp.palette)


def total_variation(channel) -> float:
    """Anisotropic total variation: summed absolute forward differences."""
    a = np.asarray(channel, dtype=np.float64)
    return float(np.abs(np.diff(a, axis=0)).sum() + np.abs(np.diff(a, axis=1)).sum())
