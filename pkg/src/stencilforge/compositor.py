"""Porter-Duff "over" compositing of an alpha layer stack.

An alpha stack is an ``(L, H, W)`` array, layer 1 at index 0 (bottom) and
layer L last (top). A palette is an ``(L+1, 3)`` array whose row 0 is the
background (priming) color painted with alpha 1 everywhere.
"""

from __future__ import annotations

import numpy as np


def as_stack(stack) -> np.ndarray:
    a = np.asarray(stack, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[0] < 1 or a.shape[1] < 1 or a.shape[2] < 1:
        raise ValueError(f"alpha stack must have shape (L, H, W), got {a.shape}")
    if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("alpha values must lie in [0, 1]")
    return a


def as_palette(palette, n_layers: int | None = None) -> np.ndarray:
    p = np.asarray(palette, dtype=np.float64)
    if p.ndim == 1:
        # grayscale palette
        p = np.repeat(p[:, None], 3, axis=1)
    if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 2:
        raise ValueError(f"palette must have shape (L+1, 3) with L >= 1, got {p.shape}")
    if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("palette channels must lie in [0, 1]")
    if n_layers is not None and p.shape[0] != n_layers + 1:
        raise ValueError(f"palette has {p.shape[0]} colors, expected {n_layers + 1}")
    return p


def over(below, layer_color, alpha: float) -> np.ndarray:
    """``(1 - alpha) * below + alpha * layer_color``, per channel."""
    below = np.asarray(below, dtype=np.float64)
    layer_color = np.asarray(layer_color, dtype=np.float64)
    return (1.0 - alpha) * below + alpha * layer_color


def _composite_range(stack, palette, start, stop, base):
    out = base
    for i in range(start, stop):
        a = stack[i - 1][:, :, None]
        out = (1.0 - a) * out + a * palette[i]
    return out


def composite(stack, palette) -> np.ndarray:
    """Composite layers 1..L over the background color; returns ``(H, W, 3)``."""
    stack = as_stack(stack)
    L, H, W = stack.shape
    palette = as_palette(palette, L)
    base = np.broadcast_to(palette[0], (H, W, 3)).astype(np.float64)
    # convex combinations; clip only absorbs rounding past the unit interval
    return np.clip(_composite_range(stack, palette, 1, L + 1, base), 0.0, 1.0)


def layer_affine_decomposition(stack, palette, l: int) -> tuple[np.ndarray, np.ndarray]:
    """Express the final composite as ``slope * alpha_l + intercept``.

    Both maps have shape ``(H, W, 3)``. ``l`` is 1-based. With
    ``C_below`` the composite through layer l-1, ``T`` the transmittance
    of the layers above l and ``S`` their own contribution::

        slope     = T * (c_l - C_below)
        intercept = T * C_below + S
    """
    stack = as_stack(stack)
    L, H, W = stack.shape
    palette = as_palette(palette, L)
    if not 1 <= l <= L:
        raise IndexError(f"layer index {l} out of range 1..{L}")
    base = np.broadcast_to(palette[0], (H, W, 3)).astype(np.float64)
    below = _composite_range(stack, palette, 1, l, base)
    above_T = np.prod(1.0 - stack[l:], axis=0)[:, :, None]
    above_S = _composite_range(stack, palette, l + 1, L + 1, np.zeros((H, W, 3)))
    slope = above_T * (palette[l] - below)
    intercept = above_T * below + above_S
    return slope, intercept


def palette_weight_maps(stack) -> np.ndarray:
    """Per-pixel weights ``w_0..w_L`` with ``composite = sum_i w_i * c_i``.

    Returns an ``(L+1, H, W)`` array; ``w_i = alpha_i * prod_{j>i} (1 - alpha_j)``
    with ``alpha_0 = 1``, so the weights are nonnegative and sum to one.
    """
    stack = as_stack(stack)
    L, H, W = stack.shape
    w = np.empty((L + 1, H, W))
    trans = np.ones((H, W))
    for i in range(L, 0, -1):
        w[i] = stack[i - 1] * trans
        trans = trans * (1.0 - stack[i - 1])
    w[0] = trans
    return w
