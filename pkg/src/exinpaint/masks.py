"""Hole mask sampling and the spatial weight masks derived from them.

Binary masks are ``(h, w, 1)`` float32 arrays with values in {0, 1}
(1 = unknown/hole). Weight masks share the shape with values in [0, 1]
and are zero wherever the binary mask is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import container
from .config import BrushParams
from .errors import ParameterError


def _check_size(h: int, w: int) -> None:
    if h < 8 or w < 8:
        raise ParameterError(f"mask size must be at least 8x8, got {h}x{w}")


def as_binary_mask(arr: np.ndarray) -> np.ndarray:
    """Validate and normalize an array to the (h, w, 1) binary layout."""
    a = np.asarray(arr, dtype=np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] != 1:
        raise ParameterError(f"expected (h, w, 1) mask, got shape {arr.shape}")
    if not np.isin(a, (0.0, 1.0)).all():
        raise ParameterError("binary mask values must be exactly 0 or 1")
    return a


def masked_ratio(mask: np.ndarray) -> float:
    return float(np.mean(mask))


def _capsule_hit(px, py, x0, y0, x1, y1, r):
    """Point-in-capsule test; identical arithmetic to the studio rasterizer."""
    vx = x1 - x0
    vy = y1 - y0
    wx = px - x0
    wy = py - y0
    c2 = vx * vx + vy * vy
    if c2 > 0.0:
        t = np.clip((vx * wx + vy * wy) / c2, 0.0, 1.0)
    else:
        t = 0.0
    dx = wx - t * vx
    dy = wy - t * vy
    return dx * dx + dy * dy <= r * r


def _stamp_capsule(grid: np.ndarray, x0, y0, x1, y1, radius) -> None:
    h, w = grid.shape
    lo_x = max(0, int(math.floor(min(x0, x1) - radius)))
    hi_x = min(w - 1, int(math.ceil(max(x0, x1) + radius)))
    lo_y = max(0, int(math.floor(min(y0, y1) - radius)))
    hi_y = min(h - 1, int(math.ceil(max(y0, y1) + radius)))
    if lo_x > hi_x or lo_y > hi_y:
        return
    ys, xs = np.mgrid[lo_y : hi_y + 1, lo_x : hi_x + 1]
    hit = _capsule_hit(xs.astype(np.float64), ys.astype(np.float64), x0, y0, x1, y1, radius)
    grid[lo_y : hi_y + 1, lo_x : hi_x + 1][hit] = 1.0


def sample_brush_strokes(rng: np.random.Generator, h: int, w: int, p: BrushParams) -> np.ndarray:
    """Random polyline walk rendered as thick segments with circular caps.

    Vertex count ~ U[1, max_vertex]; per segment the turn angle is drawn
    from U[0, max_angle] degrees and the length from U[0, max_length];
    the stroke width is drawn once from U[1, max_brush_width].
    """
    _check_size(h, w)
    p.validate()
    grid = np.zeros((h, w), dtype=np.float32)
    width = rng.uniform(1.0, p.max_brush_width)
    radius = width / 2.0
    n_vertex = int(rng.integers(1, p.max_vertex + 1))
    x = rng.uniform(0, w - 1)
    y = rng.uniform(0, h - 1)
    _stamp_capsule(grid, x, y, x, y, radius)
    for _ in range(n_vertex - 1):
        angle = math.radians(rng.uniform(0.0, p.max_angle))
        length = rng.uniform(0.0, p.max_length)
        nx = float(np.clip(x + length * math.cos(angle), 0, w - 1))
        ny = float(np.clip(y + length * math.sin(angle), 0, h - 1))
        _stamp_capsule(grid, x, y, nx, ny, radius)
        x, y = nx, ny
    return grid[:, :, None]


def _sample_rect_counts(rng: np.random.Generator) -> tuple[int, int]:
    """Counts of up-to-half-size and up-to-quarter-size rectangles."""
    n_half = int(rng.integers(0, 6))
    n_quarter = int(rng.integers(0, 11))
    return n_half, n_quarter


def _stamp_rect(grid: np.ndarray, rng: np.random.Generator, max_h: int, max_w: int) -> None:
    h, w = grid.shape
    rh = int(rng.integers(1, max_h + 1))
    rw = int(rng.integers(1, max_w + 1))
    top = int(rng.integers(0, h - rh + 1))
    left = int(rng.integers(0, w - rw + 1))
    grid[top : top + rh, left : left + rw] = 1.0


def sample_rectangles(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Union of uniformly placed rectangles: up to 5 of side <= half the
    image and up to 10 of side <= a quarter, counts uniform."""
    _check_size(h, w)
    grid = np.zeros((h, w), dtype=np.float32)
    n_half, n_quarter = _sample_rect_counts(rng)
    for _ in range(n_half):
        _stamp_rect(grid, rng, h // 2, w // 2)
    for _ in range(n_quarter):
        _stamp_rect(grid, rng, h // 4, w // 4)
    return grid[:, :, None]


def sample_freeform(rng: np.random.Generator, h: int, w: int, p: BrushParams) -> np.ndarray:
    """Pixelwise OR of brush strokes and rectangles."""
    strokes = sample_brush_strokes(rng, h, w, p)
    rects = sample_rectangles(rng, h, w)
    return np.maximum(strokes, rects)


def center_mask(h: int, w: int, frac: float) -> np.ndarray:
    """Axis-aligned centered rectangle covering ``frac`` of each side."""
    _check_size(h, w)
    if not 0 < frac <= 1:
        raise ParameterError(f"frac must be in (0, 1], got {frac}")
    mh = int(round(frac * h))
    mw = int(round(frac * w))
    grid = np.zeros((h, w), dtype=np.float32)
    top = (h - mh) // 2
    left = (w - mw) // 2
    grid[top : top + mh, left : left + mw] = 1.0
    return grid[:, :, None]


def _gaussian_kernel1d(kernel: int, sigma: float) -> np.ndarray:
    c = (kernel - 1) / 2.0
    xs = np.arange(kernel, dtype=np.float64) - c
    k = np.exp(-(xs**2) / (2.0 * sigma**2))
    return k / k.sum()


def _reflect_convolve1d(x: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    pad = len(k) // 2
    widths = [(0, 0)] * x.ndim
    widths[axis] = (pad, pad)
    xp = np.pad(x, widths, mode="reflect")
    return np.apply_along_axis(lambda v: np.convolve(v, k, mode="valid"), axis, xp)


def confidence_weight(mask: np.ndarray, kernel: int, sigma: float) -> np.ndarray:
    """Gaussian-smoothed hole mask restricted to the hole.

    Normalized separable kernel with reflect padding; output is largest
    deep inside the hole, smaller near its boundary, and exactly zero on
    known pixels.
    """
    m = as_binary_mask(mask)
    if kernel <= 0 or kernel % 2 == 0:
        raise ParameterError(f"kernel must be odd and positive, got {kernel}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    h, w = m.shape[:2]
    if kernel > 2 * min(h, w) - 1:
        raise ParameterError(f"kernel {kernel} too large for {h}x{w} mask")
    k = _gaussian_kernel1d(kernel, sigma)
    blurred = _reflect_convolve1d(m[:, :, 0].astype(np.float64), k, axis=0)
    blurred = _reflect_convolve1d(blurred, k, axis=1)
    out = np.clip(blurred, 0.0, 1.0) * m[:, :, 0]
    return out[:, :, None].astype(np.float32)


def reverse_weight(m_w: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Complement of the confidence weights inside the hole: (1 - M_w) * M."""
    m = as_binary_mask(mask)
    wm = np.asarray(m_w, dtype=np.float32)
    if wm.ndim == 2:
        wm = wm[:, :, None]
    if wm.shape != m.shape:
        raise ParameterError(f"shape mismatch: weights {wm.shape} vs mask {m.shape}")
    if np.any(wm[m == 0] != 0):
        raise ParameterError("weight mask must be zero outside the hole")
    return ((1.0 - wm) * m).astype(np.float32)


# --- studio stroke rasterization --------------------------------------------

@dataclass
class StudioStroke:
    """A vector brush stroke from the editing studio: polyline + radius."""

    points: list[tuple[float, float]]
    radius: float


def rasterize_strokes(strokes: list[StudioStroke], h: int, w: int) -> np.ndarray:
    """Deterministic stroke rasterization shared with the studio frontend.

    A pixel (x, y) is masked when its integer center lies within ``radius``
    of any stroke segment (single points count as discs).
    """
    _check_size(h, w)
    grid = np.zeros((h, w), dtype=np.float32)
    for stroke in strokes:
        pts = stroke.points
        if not pts:
            continue
        if len(pts) == 1:
            x0, y0 = pts[0]
            _stamp_capsule(grid, x0, y0, x0, y0, stroke.radius)
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            _stamp_capsule(grid, x0, y0, x1, y1, stroke.radius)
    return grid[:, :, None]


# --- serialization -----------------------------------------------------------

def save_mask_png(path, mask: np.ndarray) -> None:
    """Write a binary mask as single-channel 8-bit PNG (0 known, 255 unknown)."""
    m = as_binary_mask(mask)
    img = Image.fromarray((m[:, :, 0] * 255).astype(np.uint8), mode="L")
    img.save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    img = Image.open(path).convert("L")
    arr = np.asarray(img, dtype=np.uint8)
    return (arr > 127).astype(np.float32)[:, :, None]


def save_weight_mask(path, m_w: np.ndarray) -> None:
    """Write a weight mask as a float32 blob with a shape header."""
    arr = np.asarray(m_w, dtype=np.float32)
    container.save(path, {"weight_mask": arr}, meta={"kind": "weight_mask"})


def load_weight_mask(path) -> np.ndarray:
    tensors, _ = container.load(path)
    return tensors["weight_mask"]
