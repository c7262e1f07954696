"""Anatomy label map ingestion and region sampling queries.

Label maps are 16-bit single-channel PNGs with a JSON sidecar catalog
(`<stem>.labels.json`) mapping label ids to anatomy names. Label id 0 is
background. All queries are read-only; a loaded map is safe to share.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .core import tight_bbox

MAX_CATALOG_SIZE = 158
BODY_CLOSE_RADIUS_AT_1024 = 3


class LabelMapError(ValueError):
    pass


class DimensionMismatchError(LabelMapError):
    pass


class UnknownLabelError(LabelMapError):
    pass


class CorruptFileError(LabelMapError):
    pass


@dataclass(frozen=True)
class RegionSample:
    label_id: int
    pixels: np.ndarray  # (N, 2) array of (y, x), row-major scan order
    bbox: tuple[int, int, int, int]
    area: int

    def contains(self, x: int, y: int) -> bool:
        return bool(np.any((self.pixels[:, 0] == y) & (self.pixels[:, 1] == x)))


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray  # uint16, 0 = background
    catalog: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.uint16))
        if labels.ndim != 2 or labels.size == 0:
            raise LabelMapError("labels must be a non-empty 2-D raster")
        catalog = {int(k): str(v) for k, v in self.catalog.items()}
        if len(catalog) > MAX_CATALOG_SIZE:
            raise LabelMapError(f"catalog exceeds {MAX_CATALOG_SIZE} anatomies")
        present = set(np.unique(labels).tolist()) - {0}
        missing = sorted(present - set(catalog))
        if missing:
            raise UnknownLabelError(f"unknown label id {missing[0]}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "catalog", catalog)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def region_ids(self) -> list[int]:
        return sorted(set(np.unique(self.labels).tolist()) - {0})

    def region(self, label_id: int) -> RegionSample:
        mask = self.labels == label_id
        ys, xs = np.nonzero(mask)
        if ys.size == 0:
            raise LabelMapError(f"label {label_id} has no pixels")
        return RegionSample(label_id=int(label_id),
                            pixels=np.column_stack([ys, xs]),
                            bbox=tight_bbox(mask), area=int(ys.size))

    def region_mask(self, label_id: int) -> np.ndarray:
        return self.labels == label_id


def sidecar_path(png_path: Path) -> Path:
    png_path = Path(png_path)
    return png_path.with_name(png_path.stem + ".labels.json")


def load_label_map(path, expected_dims: Optional[tuple[int, int]] = None) -> LabelMap:
    """Load a 16-bit label PNG plus its JSON sidecar catalog.

    expected_dims is (width, height) of the paired radiograph.
    """
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise CorruptFileError(f"cannot read label map {path}")
    if raw.ndim != 2:
        raise CorruptFileError(f"label map {path} is not single-channel")
    if expected_dims is not None:
        w, h = expected_dims
        if raw.shape != (h, w):
            raise DimensionMismatchError(
                f"label map {path} is {raw.shape[1]}x{raw.shape[0]}, expected {w}x{h}")
    side = sidecar_path(path)
    try:
        catalog = json.loads(side.read_text())
    except FileNotFoundError:
        raise CorruptFileError(f"missing sidecar catalog {side}") from None
    except json.JSONDecodeError as e:
        raise CorruptFileError(f"corrupt sidecar catalog {side}: {e}") from e
    return LabelMap(labels=raw.astype(np.uint16), catalog=catalog)


def save_label_map(label_map: LabelMap, path) -> None:
    path = Path(path)
    cv2.imwrite(str(path), label_map.labels.astype(np.uint16))
    sidecar_path(path).write_text(
        json.dumps({str(k): v for k, v in sorted(label_map.catalog.items())}))


def sample_regions(label_map: LabelMap, rng: np.random.Generator,
                   k: int) -> list[RegionSample]:
    """k distinct regions, uniform without replacement (k clipped)."""
    ids = label_map.region_ids()
    if not ids:
        raise LabelMapError("no anatomy available")
    k = min(int(k), len(ids))
    chosen = rng.choice(len(ids), size=k, replace=False)
    return [label_map.region(ids[i]) for i in sorted(chosen.tolist())]


def sample_point_in_region(region: RegionSample,
                           rng: np.random.Generator) -> tuple[int, int]:
    """Uniform pixel (x, y) inside the region."""
    y, x = region.pixels[int(rng.integers(len(region.pixels)))]
    return int(x), int(y)


def body_mask(label_map: LabelMap) -> np.ndarray:
    """Union of all labeled pixels, morphologically closed to fill gaps.

    Closing radius is 3 px at 1024-px width, scaled with the canvas.
    The result is cached on the label map, which is immutable.
    """
    cached = getattr(label_map, "_body_mask", None)
    if cached is not None:
        return cached
    mask = (label_map.labels > 0).astype(np.uint8)
    if not mask.any():
        result = mask.astype(bool)
    else:
        r = max(1, int(round(BODY_CLOSE_RADIUS_AT_1024 * label_map.width / 1024)))
        kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (2 * r + 1, 2 * r + 1))
        result = cv2.morphologyEx(mask, cv2.MORPH_CLOSE, kernel).astype(bool)
    result.setflags(write=False)
    object.__setattr__(label_map, "_body_mask", result)
    return result


def region_boundary(region: RegionSample) -> np.ndarray:
    """Ordered 8-connected outer boundary of the region, (N, 2) of (x, y).

    For a multi-component region the largest component's contour is used.
    """
    h = region.bbox[1] + region.bbox[3] + 2
    w = region.bbox[0] + region.bbox[2] + 2
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[region.pixels[:, 0], region.pixels[:, 1]] = 1
    contours, _ = cv2.findContours(mask, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    if not contours:
        raise LabelMapError("region has no boundary")
    contour = max(contours, key=len)
    return contour.reshape(-1, 2).astype(np.int64)  # (x, y) pairs


def local_boundary_normal(boundary: np.ndarray, index: int,
                          window: int = 5) -> float:
    """Angle (radians) of the outward-ish normal at a contour point.

    Estimated from the tangent between neighbors ``window`` steps apart on
    the closed contour; the normal is the tangent rotated by 90 degrees.
    """
    n = len(boundary)
    a = boundary[(index - window) % n]
    b = boundary[(index + window) % n]
    tx, ty = float(b[0] - a[0]), float(b[1] - a[1])
    return math.atan2(ty, tx) + math.pi / 2.0
