"""Recover instance masks from (color-annotated, clean grayscale) image pairs.

Annotation overlays use distinct saturated colors on an otherwise grayscale
radiograph, so chroma (max channel minus min channel) separates annotation
pixels from anatomy. Candidates are grouped into instances by quantized hue
and 8-connected components.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np

from . import cocoio
from .core import EXTRACTED_CATEGORY, GrayImage, InstanceRecord, make_record

HUE_BINS = 12
DEFAULT_CHROMA_THRESHOLD = 0.15
DEFAULT_MIN_AREA = 20


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class ColorImage:
    data: np.ndarray  # (h, w, 3) float in [0,1]

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0:
            raise ValueError("ColorImage data must be (h, w, 3)")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("channel values must lie in [0,1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def read_color_image(path) -> ColorImage:
    raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if raw is None:
        raise ValueError(f"cannot read color image {path}")
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return ColorImage(rgb.astype(np.float32) / 255.0)


def _hue_bins(rgb: np.ndarray) -> np.ndarray:
    """Quantized hue index per pixel (0..HUE_BINS-1)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=2)
    minc = rgb.min(axis=2)
    delta = np.where(maxc - minc == 0, 1.0, maxc - minc)
    hue = np.where(maxc == r, ((g - b) / delta) % 6.0,
                   np.where(maxc == g, (b - r) / delta + 2.0,
                            (r - g) / delta + 4.0))
    return np.clip((hue / 6.0 * HUE_BINS).astype(np.int32), 0, HUE_BINS - 1)


def extract_masks(annotated: ColorImage, clean: GrayImage,
                  chroma_threshold: float = DEFAULT_CHROMA_THRESHOLD,
                  min_area: int = DEFAULT_MIN_AREA,
                  luma_threshold: Optional[float] = None) -> list[InstanceRecord]:
    """One InstanceRecord per saturated-color connected component.

    A pixel is a candidate when its chroma exceeds chroma_threshold, or when
    it deviates from the clean image in luma while still carrying some
    chroma. Candidates are grouped by quantized hue, then split into
    8-connected components; components below min_area are dropped.
    """
    if (annotated.height, annotated.width) != clean.shape:
        raise AlignmentError("alignment error: image dimensions differ")
    if luma_threshold is None:
        luma_threshold = chroma_threshold
    rgb = annotated.data
    chroma = rgb.max(axis=2) - rgb.min(axis=2)
    luma = rgb @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
    candidates = (chroma > chroma_threshold) | (
        (np.abs(luma - clean.data) > luma_threshold)
        & (chroma > 0.5 * chroma_threshold))
    if not candidates.any():
        return []
    hues = _hue_bins(rgb)
    records: list[InstanceRecord] = []
    for bin_id in range(HUE_BINS):
        group = candidates & (hues == bin_id)
        if not group.any():
            continue
        n, labels = cv2.connectedComponents(group.astype(np.uint8),
                                            connectivity=8)
        for comp in range(1, n):
            comp_mask = labels == comp
            if int(comp_mask.sum()) < min_area:
                continue
            records.append(make_record(comp_mask, EXTRACTED_CATEGORY,
                                       z_order=len(records),
                                       params={"hue_bin": bin_id}))
    return records


def export_extracted(records: list[InstanceRecord], image_name: str,
                     dims: tuple[int, int], path,
                     categories_mode: str = "class_agnostic") -> dict:
    """Write extracted instances as a single-image COCO document."""
    sample = {
        "id": 0,
        "file_name": image_name,
        "width": dims[0],
        "height": dims[1],
        "annotations": [cocoio.record_payload(r) for r in records],
    }
    return cocoio.write_coco([sample], categories_mode, path)
