"""The eight synthetic structure family generators.

Each generator samples its geometry and photometry from GenConfig ranges and
returns an AlphaPatch (canvas coordinates) plus a StructureSpec recording the
sampled parameters for provenance. Pixel-valued config ranges are given at a
1024-px reference width and scaled with the canvas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import cv2
import numpy as np

from . import raster
from .anatomy import (LabelMap, RegionSample, body_mask, local_boundary_normal,
                      region_boundary, sample_point_in_region)
from .core import AlphaPatch, GenConfig
from .raster import BezierChain, StrokeStyle

PRINTABLE = "".join(chr(c) for c in range(0x20, 0x7F))


class StructureError(ValueError):
    pass


class RegionTooSmallError(StructureError):
    pass


@dataclass(frozen=True)
class StructureSpec:
    family: str
    params: dict = field(default_factory=dict)
    anchor_anatomy: Optional[int] = None


def _px(cfg_range, rng: np.random.Generator, canvas_w: int) -> float:
    return cfg_range.sample(rng) * canvas_w / 1024.0


def _sample_polarity_intensity(cfg: GenConfig, rng: np.random.Generator) -> tuple[str, float]:
    polarity = "bright" if rng.random() < 0.5 else "dark"
    r = cfg.bright_intensity if polarity == "bright" else cfg.dark_intensity
    return polarity, r.sample(rng)


def _region_mask(region: RegionSample, canvas_dims: tuple[int, int]) -> np.ndarray:
    w, h = canvas_dims
    mask = np.zeros((h, w), dtype=bool)
    mask[region.pixels[:, 0], region.pixels[:, 1]] = True
    return mask


def _bbox_diag(region: RegionSample) -> float:
    return math.hypot(region.bbox[2], region.bbox[3])


# ---------------------------------------------------------------------------
# unanchored families


def gen_text(cfg: GenConfig, canvas_dims: tuple[int, int],
             rng: np.random.Generator) -> tuple[AlphaPatch, StructureSpec]:
    w, h = canvas_dims
    length = cfg.text_length.sample_int(rng)
    string = "".join(PRINTABLE[int(i)] for i in rng.integers(0, len(PRINTABLE), length))
    font_id = int(rng.integers(0, 2))
    scale = cfg.text_scale.sample_int(rng)
    polarity = ("dark", "bright", "boxed")[int(rng.integers(0, 3))]
    if polarity == "boxed":
        base = cfg.bright_intensity if rng.random() < 0.5 else cfg.dark_intensity
        intensity = base.sample(rng)
    else:
        r = cfg.bright_intensity if polarity == "bright" else cfg.dark_intensity
        intensity = r.sample(rng)
    alpha = cfg.opacity.sample(rng)
    style = StrokeStyle(thickness=1.0, intensity=intensity, alpha=alpha)
    patch = raster.render_text(string, font_id, scale, style, polarity)
    if patch.width > w or patch.height > h:
        raise StructureError("text does not fit in canvas")
    x0 = int(rng.integers(0, w - patch.width + 1))
    y0 = int(rng.integers(0, h - patch.height + 1))
    patch = raster.place(patch, (x0, y0))
    spec = StructureSpec("text", params={
        "string": string, "font_id": font_id, "scale": scale,
        "polarity": polarity, "intensity": intensity, "alpha": alpha,
        "origin": [x0, y0]})
    return patch, spec


def gen_rect(cfg: GenConfig, canvas_dims: tuple[int, int],
             rng: np.random.Generator) -> tuple[AlphaPatch, StructureSpec]:
    w, h = canvas_dims
    bw = max(1, int(round(cfg.rel_size.sample(rng) * w)))
    bh = max(1, int(round(cfg.rel_size.sample(rng) * h)))
    bw, bh = min(bw, w), min(bh, h)
    polarity, intensity = _sample_polarity_intensity(cfg, rng)
    alpha = cfg.opacity.sample(rng)
    x0 = int(rng.integers(0, w - bw + 1))
    y0 = int(rng.integers(0, h - bh + 1))
    patch = raster.fill_rect((x0, y0, bw, bh),
                             StrokeStyle(1.0, intensity, alpha))
    spec = StructureSpec("rectangular", params={
        "bbox": [x0, y0, bw, bh], "polarity": polarity,
        "intensity": intensity, "alpha": alpha})
    return patch, spec


# ---------------------------------------------------------------------------
# anatomy-anchored families


def gen_circular(cfg: GenConfig, region: RegionSample,
                 rng: np.random.Generator,
                 canvas_dims: tuple[int, int]) -> tuple[AlphaPatch, StructureSpec]:
    diag = _bbox_diag(region)
    cx, cy = sample_point_in_region(region, rng)
    a = cfg.rel_size.sample(rng) * diag
    b = cfg.rel_size.sample(rng) * diag
    if min(a, b) < 1.0:
        raise RegionTooSmallError("region too small")
    rotation = rng.uniform(0.0, math.pi)
    intensity = cfg.bright_intensity.sample(rng)
    alpha = cfg.opacity.sample(rng)
    patch = raster.fill_ellipse((cx, cy), (a, b), rotation,
                                StrokeStyle(1.0, intensity, alpha), canvas_dims)
    spec = StructureSpec("circular", anchor_anatomy=region.label_id, params={
        "center": [cx, cy], "semi_axes": [a, b], "rotation": rotation,
        "intensity": intensity, "alpha": alpha, "anchor": [cx, cy]})
    return patch, spec


def gen_ring(cfg: GenConfig, region: RegionSample, rng: np.random.Generator,
             canvas_dims: tuple[int, int]) -> tuple[AlphaPatch, StructureSpec]:
    diag = _bbox_diag(region)
    cx, cy = sample_point_in_region(region, rng)
    a = cfg.rel_size.sample(rng) * diag
    b = cfg.rel_size.sample(rng) * diag
    if min(a, b) < 2.0:
        raise RegionTooSmallError("region too small")
    thickness = _px(cfg.line_thickness, rng, canvas_dims[0])
    thickness = min(thickness, 0.9 * 2 * min(a, b))  # avoid degenerate rings
    rotation = rng.uniform(0.0, math.pi)
    intensity = cfg.bright_intensity.sample(rng)
    alpha = cfg.opacity.sample(rng)
    patch = raster.stroke_ellipse((cx, cy), (a, b), rotation,
                                  StrokeStyle(thickness, intensity, alpha),
                                  canvas_dims)
    spec = StructureSpec("ring", anchor_anatomy=region.label_id, params={
        "center": [cx, cy], "semi_axes": [a, b], "rotation": rotation,
        "thickness": thickness, "intensity": intensity, "alpha": alpha,
        "anchor": [cx, cy]})
    return patch, spec


def _segment_points(p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    n = max(2, int(math.ceil(np.hypot(*(p1 - p0)) * 16)))
    t = np.linspace(0.0, 1.0, n)[:, None]
    return p0 + t * (p1 - p0)


def gen_clips(cfg: GenConfig, region: RegionSample, rng: np.random.Generator,
              canvas_dims: tuple[int, int]) -> list[tuple[AlphaPatch, StructureSpec]]:
    """1..6 short strokes near the region boundary, one instance per clip."""
    boundary = region_boundary(region)
    scale = canvas_dims[0] / 1024.0
    if len(boundary) < max(4, int(cfg.clip_length.lo * scale)):
        raise RegionTooSmallError("region too small")
    count = cfg.clip_count.sample_int(rng)
    out = []
    for _ in range(count):
        idx = int(rng.integers(len(boundary)))
        px, py = boundary[idx]
        length = cfg.clip_length.sample(rng) * scale
        angle = local_boundary_normal(boundary, idx) + rng.uniform(-math.pi / 6,
                                                                   math.pi / 6)
        dx, dy = math.cos(angle), math.sin(angle)
        p0 = np.array([px - dx * length / 2, py - dy * length / 2])
        p1 = np.array([px + dx * length / 2, py + dy * length / 2])
        thickness = max(1.0, _px(cfg.line_thickness, rng, canvas_dims[0]))
        intensity = cfg.bright_intensity.sample(rng)
        alpha = cfg.opacity.sample(rng)
        try:
            mask = raster.polyline_footprint(_segment_points(p0, p1), thickness,
                                             canvas_dims)
        except raster.EmptyFootprintError:
            continue
        patch = raster.patch_from_footprint(mask, StrokeStyle(thickness,
                                                               intensity, alpha))
        out.append((patch, StructureSpec("clip", anchor_anatomy=region.label_id,
                                         params={"midpoint": [int(px), int(py)],
                                                 "length": length,
                                                 "angle": angle,
                                                 "thickness": thickness,
                                                 "intensity": intensity,
                                                 "alpha": alpha,
                                                 "anchor": [int(px), int(py)]})))
    if not out:
        raise RegionTooSmallError("region too small")
    return out


def gen_grid(cfg: GenConfig, region: RegionSample, rng: np.random.Generator,
             canvas_dims: tuple[int, int]) -> tuple[AlphaPatch, StructureSpec]:
    """Jittered lattice over the region bbox; nodes outside the mask are
    dropped, edges join lattice-adjacent survivors (degree <= 4)."""
    w, h = canvas_dims
    x0, y0, bw, bh = region.bbox
    diag = _bbox_diag(region)
    spacing = max(3.0, cfg.grid_spacing_rel.sample(rng) * diag)
    nx = int(math.ceil(bw / spacing))
    ny = int(math.ceil(bh / spacing))
    if nx * ny < 4:
        raise RegionTooSmallError("region too small")
    mask = _region_mask(region, canvas_dims)
    nodes: dict[tuple[int, int], np.ndarray] = {}
    for j in range(ny):
        for i in range(nx):
            jit = rng.uniform(-spacing / 4, spacing / 4, size=2)
            p = np.array([x0 + i * spacing + jit[0], y0 + j * spacing + jit[1]])
            xi, yi = int(round(p[0])), int(round(p[1]))
            if 0 <= xi < w and 0 <= yi < h and mask[yi, xi]:
                nodes[(i, j)] = p
    if len(nodes) < 2:
        raise RegionTooSmallError("region too small")
    base_intensity = cfg.bright_intensity.sample(rng)
    alpha = cfg.opacity.sample(rng)
    thickness = max(1.0, _px(cfg.line_thickness, rng, w) * 0.5)
    intensity_canvas = np.zeros((h, w), dtype=np.float32)
    fp_canvas = np.zeros((h, w), dtype=bool)
    edges = 0
    for (i, j), p in nodes.items():
        for di, dj in ((1, 0), (0, 1)):
            q = nodes.get((i + di, j + dj))
            if q is None:
                continue
            shade = float(np.clip(base_intensity + rng.uniform(-0.1, 0.1), 0, 1))
            try:
                fp = raster.polyline_footprint(_segment_points(p, q), thickness,
                                               canvas_dims)
            except raster.EmptyFootprintError:
                continue
            intensity_canvas[fp] = shade
            fp_canvas |= fp
            edges += 1
    if edges == 0 or not fp_canvas.any():
        raise RegionTooSmallError("region too small")
    ys, xs = np.nonzero(fp_canvas)
    gy0, gy1, gx0, gx1 = ys.min(), ys.max(), xs.min(), xs.max()
    local_fp = fp_canvas[gy0:gy1 + 1, gx0:gx1 + 1]
    patch = AlphaPatch(intensity=intensity_canvas[gy0:gy1 + 1, gx0:gx1 + 1],
                       alpha=np.where(local_fp, alpha, 0.0).astype(np.float32),
                       origin=(int(gx0), int(gy0)))
    node_list = sorted(nodes.keys())
    anchor = nodes[node_list[0]]
    spec = StructureSpec("grid", anchor_anatomy=region.label_id, params={
        "spacing": spacing, "node_count": len(nodes), "edge_count": edges,
        "lattice_nodes": [list(k) for k in node_list],
        "base_intensity": base_intensity, "alpha": alpha,
        "thickness": thickness,
        "anchor": [int(round(anchor[0])), int(round(anchor[1]))]})
    return patch, spec


# ---------------------------------------------------------------------------
# body-exterior line families


def _sample_exterior_point(label_map: LabelMap,
                           rng: np.random.Generator) -> tuple[float, float]:
    body = body_mask(label_map)
    h, w = body.shape
    # Rejection sampling is cheap when a decent fraction of the canvas is
    # exterior; fall back to an exhaustive draw otherwise.
    for _ in range(100):
        y = int(rng.integers(h))
        x = int(rng.integers(w))
        if not body[y, x]:
            return float(x), float(y)
    ys, xs = np.nonzero(~body)
    if ys.size == 0:
        raise StructureError("no exterior start point")
    i = int(rng.integers(ys.size))
    return float(xs[i]), float(ys[i])


def _sample_chain(label_map: LabelMap, rng: np.random.Generator,
                  canvas_dims: tuple[int, int], max_segments: int) -> BezierChain:
    w, h = canvas_dims
    n_seg = int(rng.integers(1, max_segments + 1))
    start = np.array(_sample_exterior_point(label_map, rng))
    segments = []
    p0 = start
    for _ in range(n_seg):
        pts = rng.uniform([0, 0], [w - 1, h - 1], size=(3, 2))
        segments.append(np.vstack([p0, pts]))
        p0 = pts[2]
    return BezierChain(tuple(segments))


def gen_line(cfg: GenConfig, label_map: LabelMap, rng: np.random.Generator,
             canvas_dims: tuple[int, int]) -> tuple[AlphaPatch, StructureSpec]:
    chain = _sample_chain(label_map, rng, canvas_dims, max_segments=5)
    thickness = max(1.0, _px(cfg.line_thickness, rng, canvas_dims[0]))
    polarity, intensity = _sample_polarity_intensity(cfg, rng)
    alpha = cfg.opacity.sample(rng)
    patch = raster.stroke_chain(chain, StrokeStyle(thickness, intensity, alpha),
                                canvas_dims)
    spec = StructureSpec("line", params={
        "control_points": [s.tolist() for s in chain.segments],
        "thickness": thickness, "polarity": polarity,
        "intensity": intensity, "alpha": alpha})
    return patch, spec


def _polyline_normals(pts: np.ndarray) -> np.ndarray:
    d = np.gradient(pts, axis=0)
    norms = np.hypot(d[:, 0], d[:, 1])
    norms[norms == 0] = 1.0
    t = d / norms[:, None]
    return np.column_stack([-t[:, 1], t[:, 0]])


def gen_parallel_lines(cfg: GenConfig, label_map: LabelMap,
                       rng: np.random.Generator,
                       canvas_dims: tuple[int, int]) -> tuple[AlphaPatch, StructureSpec]:
    """A tube: two normal-offset copies of a center curve, stroked, with the
    enclosed space filled by a constant sampled gray."""
    w, h = canvas_dims
    chain = _sample_chain(label_map, rng, canvas_dims, max_segments=3)
    pts = raster.flatten_chain(chain)
    normals = _polyline_normals(pts)
    width_px = max(2.0, _px(cfg.tube_width, rng, w))
    off1 = pts + normals * width_px / 2
    off2 = pts - normals * width_px / 2
    thickness = max(1.0, _px(cfg.line_thickness, rng, w))
    wall_intensity = cfg.bright_intensity.sample(rng)
    fill_intensity = float(rng.uniform(0.0, 1.0))
    alpha = cfg.opacity.sample(rng)
    b1 = raster.polyline_footprint(off1, thickness, canvas_dims)
    b2 = raster.polyline_footprint(off2, thickness, canvas_dims)
    polygon = np.vstack([off1, off2[::-1]])
    interior = np.zeros((h, w), dtype=np.uint8)
    cv2.fillPoly(interior, [np.rint(polygon).astype(np.int32)], 1)
    interior = interior.astype(bool)
    fp = b1 | b2 | interior
    intensity_canvas = np.zeros((h, w), dtype=np.float32)
    intensity_canvas[interior] = fill_intensity
    intensity_canvas[b1 | b2] = wall_intensity
    ys, xs = np.nonzero(fp)
    y0, y1, x0, x1 = ys.min(), ys.max(), xs.min(), xs.max()
    local = fp[y0:y1 + 1, x0:x1 + 1]
    patch = AlphaPatch(intensity=intensity_canvas[y0:y1 + 1, x0:x1 + 1],
                       alpha=np.where(local, alpha, 0.0).astype(np.float32),
                       origin=(int(x0), int(y0)))
    spec = StructureSpec("parallel_lines", params={
        "control_points": [s.tolist() for s in chain.segments],
        "tube_width": width_px, "thickness": thickness,
        "wall_intensity": wall_intensity, "fill_intensity": fill_intensity,
        "alpha": alpha})
    return patch, spec
