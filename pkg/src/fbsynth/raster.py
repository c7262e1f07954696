"""Pure rasterization primitives.

Membership convention: a pixel belongs to a shape iff its center does, with
pixel (row i, col j) centered at coordinate (x=j, y=i). Footprints are binary
(no anti-aliasing); the alpha channel carries a single structure opacity.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
import math

import cv2
import numpy as np
from scipy.spatial import cKDTree

from .core import AlphaPatch
from . import fonts

MAX_FLATTEN_SEGMENTS = 4096


class RasterError(ValueError):
    pass


class EmptyFootprintError(RasterError):
    pass


class DegenerateRingError(RasterError):
    pass


@dataclass(frozen=True)
class StrokeStyle:
    thickness: float
    intensity: float
    alpha: float

    def __post_init__(self):
        if self.thickness <= 0:
            raise ValueError("thickness must be > 0")
        if not (0.0 <= self.intensity <= 1.0 and 0.0 <= self.alpha <= 1.0):
            raise ValueError("intensity and alpha must lie in [0,1]")


@dataclass(frozen=True)
class BezierChain:
    """1..5 cubic segments, C0-continuous at the joints.

    Each segment is a (4, 2) array of (x, y) control points.
    """

    segments: tuple

    def __post_init__(self):
        segs = tuple(np.asarray(s, dtype=np.float64) for s in self.segments)
        if not (1 <= len(segs) <= 5):
            raise ValueError("chain must have 1..5 segments")
        for s in segs:
            if s.shape != (4, 2):
                raise ValueError("each segment needs 4 control points")
        for a, b in zip(segs, segs[1:]):
            if not np.allclose(a[3], b[0]):
                raise ValueError("segments are not C0-continuous")
        object.__setattr__(self, "segments", segs)


def eval_cubic_bezier(seg: np.ndarray, t: float) -> np.ndarray:
    """Cubic Bernstein evaluation of one segment at parameter t in [0, 1]."""
    if not (0.0 <= t <= 1.0):
        raise RasterError(f"t={t} outside [0,1]")
    p = np.asarray(seg, dtype=np.float64)
    u = 1.0 - t
    return (u ** 3 * p[0] + 3 * u ** 2 * t * p[1]
            + 3 * u * t ** 2 * p[2] + t ** 3 * p[3])


def _flatten_segment(seg: np.ndarray) -> np.ndarray:
    p = np.asarray(seg, dtype=np.float64)
    diag = float(np.hypot(*(p.max(axis=0) - p.min(axis=0))))
    n = min(MAX_FLATTEN_SEGMENTS, max(1, int(math.ceil(16 * math.ceil(diag)))))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    u = 1.0 - t
    return (u ** 3 * p[0] + 3 * u ** 2 * t * p[1]
            + 3 * u * t ** 2 * p[2] + t ** 3 * p[3])


def flatten_chain(chain: BezierChain) -> np.ndarray:
    """Dense polyline sampling of the chain, (N, 2) float array of (x, y)."""
    parts = [_flatten_segment(chain.segments[0])]
    for seg in chain.segments[1:]:
        parts.append(_flatten_segment(seg)[1:])  # joint point already present
    return np.concatenate(parts, axis=0)


def polyline_footprint(points: np.ndarray, thickness: float,
                       canvas_dims: tuple[int, int]) -> np.ndarray:
    """Pixels whose centers lie within thickness/2 of the sampled polyline.

    canvas_dims is (width, height). Exact with respect to the point samples
    (nearest-neighbor distance via a KD-tree on the flattened points).
    """
    w, h = canvas_dims
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    radius = thickness / 2.0
    r = int(math.ceil(radius)) + 1
    # Work in a window around the curve bbox; candidate pixels are the
    # sample points dilated by the stroke radius.
    wx0 = max(0, int(math.floor(pts[:, 0].min())) - r)
    wx1 = min(w - 1, int(math.ceil(pts[:, 0].max())) + r)
    wy0 = max(0, int(math.floor(pts[:, 1].min())) - r)
    wy1 = min(h - 1, int(math.ceil(pts[:, 1].max())) + r)
    if wx0 > wx1 or wy0 > wy1:
        raise EmptyFootprintError("empty footprint")
    ww, wh = wx1 - wx0 + 1, wy1 - wy0 + 1
    seed = np.zeros((wh, ww), dtype=np.uint8)
    ix = np.rint(pts[:, 0]).astype(int) - wx0
    iy = np.rint(pts[:, 1]).astype(int) - wy0
    keep = (ix >= -1) & (ix <= ww) & (iy >= -1) & (iy <= wh)
    ix, iy = np.clip(ix[keep], 0, ww - 1), np.clip(iy[keep], 0, wh - 1)
    if ix.size == 0:
        raise EmptyFootprintError("empty footprint")
    seed[iy, ix] = 1
    kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (2 * r + 1, 2 * r + 1))
    cand = cv2.dilate(seed, kernel).astype(bool)
    cy, cx = np.nonzero(cand)
    tree = cKDTree(pts)
    dist, _ = tree.query(np.column_stack([cx + wx0, cy + wy0]).astype(np.float64))
    mask = np.zeros((h, w), dtype=bool)
    inside = dist <= radius + 1e-9
    mask[cy[inside] + wy0, cx[inside] + wx0] = True
    if not mask.any():
        raise EmptyFootprintError("empty footprint")
    return mask


def patch_from_footprint(mask: np.ndarray, style: StrokeStyle) -> AlphaPatch:
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise EmptyFootprintError("empty footprint")
    y0, y1, x0, x1 = ys.min(), ys.max(), xs.min(), xs.max()
    local = mask[y0:y1 + 1, x0:x1 + 1]
    intensity = np.where(local, style.intensity, 0.0).astype(np.float32)
    alpha = np.where(local, style.alpha, 0.0)
    return AlphaPatch(intensity=intensity, alpha=alpha.astype(np.float32),
                      origin=(int(x0), int(y0)))


def stroke_chain(chain: BezierChain, style: StrokeStyle,
                 canvas_dims: tuple[int, int]) -> AlphaPatch:
    pts = flatten_chain(chain)
    seg_len = np.hypot(*(np.diff(pts, axis=0).T))
    if float(seg_len.sum()) == 0.0:
        raise EmptyFootprintError("empty footprint")
    return patch_from_footprint(
        polyline_footprint(pts, style.thickness, canvas_dims), style)


def _ellipse_mask(center: tuple[float, float], a: float, b: float,
                  rotation: float, canvas_dims: tuple[int, int]) -> np.ndarray:
    w, h = canvas_dims
    cx, cy = center
    reach = max(a, b) + 1
    x0, x1 = max(0, int(math.floor(cx - reach))), min(w - 1, int(math.ceil(cx + reach)))
    y0, y1 = max(0, int(math.floor(cy - reach))), min(h - 1, int(math.ceil(cy + reach)))
    mask = np.zeros((h, w), dtype=bool)
    if x0 > x1 or y0 > y1:
        return mask
    xs = np.arange(x0, x1 + 1, dtype=np.float64) - cx
    ys = np.arange(y0, y1 + 1, dtype=np.float64) - cy
    dx, dy = np.meshgrid(xs, ys)
    c, s = math.cos(rotation), math.sin(rotation)
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    mask[y0:y1 + 1, x0:x1 + 1] = u * u + v * v <= 1.0
    return mask


def fill_ellipse(center: tuple[float, float], semi_axes: tuple[float, float],
                 rotation: float, style: StrokeStyle,
                 canvas_dims: tuple[int, int]) -> AlphaPatch:
    a, b = semi_axes
    if a <= 0 or b <= 0:
        raise RasterError("semi-axes must be positive")
    return patch_from_footprint(
        _ellipse_mask(center, a, b, rotation, canvas_dims), style)


def stroke_ellipse(center: tuple[float, float], semi_axes: tuple[float, float],
                   rotation: float, style: StrokeStyle,
                   canvas_dims: tuple[int, int]) -> AlphaPatch:
    """Elliptical ring: the annulus between offsets of +/- thickness/2."""
    a, b = semi_axes
    t = style.thickness
    if a <= 0 or b <= 0:
        raise RasterError("semi-axes must be positive")
    if t >= 2 * min(a, b):
        raise DegenerateRingError("degenerate ring")
    outer = _ellipse_mask(center, a + t / 2, b + t / 2, rotation, canvas_dims)
    inner = _ellipse_mask(center, a - t / 2, b - t / 2, rotation, canvas_dims)
    return patch_from_footprint(outer & ~inner, style)


def fill_rect(bbox: tuple[int, int, int, int], style: StrokeStyle) -> AlphaPatch:
    x, y, w, h = bbox
    if w < 1 or h < 1:
        raise RasterError("zero-area box")
    intensity = np.full((h, w), style.intensity, dtype=np.float32)
    alpha = np.full((h, w), style.alpha, dtype=np.float32)
    return AlphaPatch(intensity=intensity, alpha=alpha, origin=(int(x), int(y)))


def render_text(string: str, font_id: int, scale: int, style: StrokeStyle,
                polarity: str = "dark") -> AlphaPatch:
    """Rasterize ``string`` from an embedded bitmap font at integer scale.

    The patch origin is (0, 0); callers place it with dataclasses.replace.
    Polarity 'boxed' paints an opaque background rectangle behind the glyphs;
    'dark' and 'bright' leave the background transparent (the caller picks
    the glyph intensity to match).
    """
    if not string:
        raise RasterError("empty string")
    if any(not (0x20 <= ord(c) <= 0x7E) for c in string):
        raise RasterError("string contains non-printable characters")
    if polarity not in ("dark", "bright", "boxed"):
        raise RasterError(f"unknown polarity {polarity!r}")
    scale = int(scale)
    if scale < 1:
        raise RasterError("scale must be >= 1")
    glyphs = [fonts.glyph(c, font_id) for c in string]
    height = fonts.GLYPH_HEIGHT
    width = sum(g.shape[1] for g in glyphs) + (len(glyphs) - 1)
    bitmap = np.zeros((height, width), dtype=bool)
    x = 0
    for g in glyphs:
        bitmap[:, x:x + g.shape[1]] = g
        x += g.shape[1] + 1
    if scale > 1:
        bitmap = np.kron(bitmap, np.ones((scale, scale), dtype=bool))
    if polarity == "boxed":
        pad = scale
        boxed = np.zeros((bitmap.shape[0] + 2 * pad, bitmap.shape[1] + 2 * pad),
                         dtype=bool)
        boxed[pad:-pad, pad:-pad] = bitmap
        bg = min(1.0, max(0.0, 1.0 - style.intensity))
        intensity = np.where(boxed, style.intensity, bg).astype(np.float32)
        alpha = np.ones_like(intensity, dtype=np.float32)
        return AlphaPatch(intensity=intensity, alpha=alpha, origin=(0, 0))
    if not bitmap.any():
        raise EmptyFootprintError("empty footprint")
    intensity = np.where(bitmap, style.intensity, 0.0).astype(np.float32)
    alpha = np.where(bitmap, style.alpha, 0.0).astype(np.float32)
    return AlphaPatch(intensity=intensity, alpha=alpha, origin=(0, 0))


def place(patch: AlphaPatch, origin: tuple[int, int]) -> AlphaPatch:
    return dataclasses.replace(patch, origin=(int(origin[0]), int(origin[1])))
