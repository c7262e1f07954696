"""Human-inspection previews: composites with per-instance mask contours."""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from . import cocoio, raster
from .core import CATEGORIES
from .raster import StrokeStyle

# One fixed color per category (RGB), stable across runs.
_PALETTE = {
    "text": (255, 80, 80),
    "circular": (80, 200, 80),
    "ring": (80, 120, 255),
    "rectangular": (230, 200, 40),
    "clip": (230, 80, 230),
    "grid": (60, 220, 220),
    "line": (255, 150, 50),
    "parallel_lines": (150, 100, 255),
    "cutpaste": (255, 255, 255),
    "foreign_body": (255, 255, 255),
}


def category_color(name: str) -> tuple[int, int, int]:
    return _PALETTE.get(name, (200, 200, 200))


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with at least one background 4-neighbor (or on the edge)."""
    mask = np.asarray(mask, dtype=bool)
    interior = np.zeros_like(mask)
    interior[1:-1, 1:-1] = (mask[1:-1, 1:-1] & mask[:-2, 1:-1] & mask[2:, 1:-1]
                            & mask[1:-1, :-2] & mask[1:-1, 2:])
    return mask & ~interior


class PreviewError(RuntimeError):
    pass


def render_preview(image_gray: np.ndarray, annotations: list[dict],
                   cat_names: dict[int, str]) -> np.ndarray:
    """RGB overlay: contour per instance plus a category legend."""
    rgb = np.stack([image_gray] * 3, axis=2)
    seen: list[str] = []
    for ann in annotations:
        mask = cocoio.decode_annotation(ann)
        name = cat_names[ann["category_id"]]
        color = np.array(category_color(name), dtype=np.uint8)
        rgb[mask_boundary(mask)] = color
        if name not in seen:
            seen.append(name)
    y = 4
    for name in seen:
        patch = raster.render_text(name, font_id=0, scale=1,
                                   style=StrokeStyle(1.0, 1.0, 1.0))
        fp = patch.footprint()
        h, w = fp.shape
        if y + h >= rgb.shape[0] or 4 + w >= rgb.shape[1]:
            break
        window = rgb[y:y + h, 4:4 + w]
        window[fp] = np.array(category_color(name), dtype=np.uint8)
        y += h + 3
    return rgb


def run_preview(dataset_dir, k: int, out_dir) -> list[Path]:
    """Write k preview PNGs for the first k images of a generated dataset."""
    dataset_dir = Path(dataset_dir)
    doc = cocoio.load_coco(dataset_dir / "annotations.json")
    if not doc["images"]:
        raise PreviewError("empty dataset")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cat_names = {c["id"]: c["name"] for c in doc["categories"]}
    by_image: dict[int, list[dict]] = {}
    for ann in doc["annotations"]:
        by_image.setdefault(ann["image_id"], []).append(ann)
    written = []
    for image in doc["images"][:k]:
        gray = cv2.imread(str(dataset_dir / image["file_name"]),
                          cv2.IMREAD_UNCHANGED)
        if gray is None:
            raise PreviewError(f"missing image {image['file_name']}")
        rgb = render_preview(gray, by_image.get(image["id"], []), cat_names)
        out_path = out_dir / f"preview_{image['id']:06d}.png"
        cv2.imwrite(str(out_path), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR))
        written.append(out_path)
    return written
