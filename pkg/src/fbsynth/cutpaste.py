"""Pre-extracted foreign-body crop library: loading, weak augmentation,
and anatomy-anchored insertion."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from . import blend as blend_mod
from .anatomy import RegionSample, sample_point_in_region
from .core import GenConfig, GrayImage, InstanceRecord, make_record

log = logging.getLogger("fbsynth.cutpaste")

PLACEMENT_RETRIES = 8


class CropLibraryError(ValueError):
    pass


class PlacementError(RuntimeError):
    pass


class AugmentError(RuntimeError):
    pass


@dataclass(frozen=True)
class Crop:
    intensity: np.ndarray  # float32 in [0,1]
    mask: np.ndarray       # bool, non-empty
    source_id: str
    category: str = "unknown"

    def __post_init__(self):
        inten = np.ascontiguousarray(np.asarray(self.intensity, dtype=np.float32))
        mask = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
        if inten.shape != mask.shape or inten.ndim != 2:
            raise ValueError("crop intensity and mask shapes must match")
        if not mask.any():
            raise ValueError("crop mask is empty")
        inten.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]


@dataclass(frozen=True)
class CropLibrary:
    crops: tuple
    warnings: tuple = ()

    def __len__(self) -> int:
        return len(self.crops)

    def sample(self, rng: np.random.Generator) -> Crop:
        return self.crops[int(rng.integers(len(self.crops)))]

    def by_category(self, category: str) -> list[Crop]:
        return [c for c in self.crops if c.category == category]


def load_crop_library(directory) -> CropLibrary:
    """Load `<id>.png` / `<id>.mask.png` pairs (plus optional `<id>.json`
    metadata), sorted by id for deterministic sampling."""
    directory = Path(directory)
    if not directory.is_dir():
        raise CropLibraryError(f"crop directory {directory} does not exist")
    ids = sorted(p.stem for p in directory.glob("*.png")
                 if not p.name.endswith(".mask.png"))
    crops: list[Crop] = []
    warnings: list[str] = []
    for crop_id in ids:
        img_path = directory / f"{crop_id}.png"
        mask_path = directory / f"{crop_id}.mask.png"
        if not mask_path.exists():
            warnings.append(f"{crop_id}: missing mask file")
            continue
        img = cv2.imread(str(img_path), cv2.IMREAD_UNCHANGED)
        mask = cv2.imread(str(mask_path), cv2.IMREAD_UNCHANGED)
        if img is None or mask is None or img.ndim != 2 or mask.ndim != 2:
            warnings.append(f"{crop_id}: unreadable image or mask")
            continue
        if img.shape != mask.shape:
            warnings.append(f"{crop_id}: image/mask dimension mismatch")
            continue
        category = "unknown"
        meta_path = directory / f"{crop_id}.json"
        if meta_path.exists():
            try:
                category = str(json.loads(meta_path.read_text()).get("category",
                                                                     "unknown"))
            except json.JSONDecodeError:
                warnings.append(f"{crop_id}: unreadable metadata")
        scale = float(np.iinfo(img.dtype).max) if img.dtype.kind == "u" else 1.0
        try:
            crops.append(Crop(intensity=img.astype(np.float32) / scale,
                              mask=mask > 0, source_id=crop_id,
                              category=category))
        except ValueError as e:
            warnings.append(f"{crop_id}: {e}")
    if not crops:
        raise CropLibraryError(f"no usable crops in {directory}")
    for msg in warnings:
        log.warning("crop library: %s", msg)
    return CropLibrary(crops=tuple(crops), warnings=tuple(warnings))


def _tighten(crop: Crop) -> Crop:
    ys, xs = np.nonzero(crop.mask)
    y0, y1, x0, x1 = ys.min(), ys.max(), xs.min(), xs.max()
    return replace(crop, intensity=crop.intensity[y0:y1 + 1, x0:x1 + 1],
                   mask=crop.mask[y0:y1 + 1, x0:x1 + 1])


def _apply_transform(crop: Crop, flip: bool, angle_deg: float, scale: float,
                     gain: float) -> Optional[Crop]:
    inten = crop.intensity[:, ::-1] if flip else crop.intensity
    mask = crop.mask[:, ::-1] if flip else crop.mask
    h, w = mask.shape
    theta = math.radians(angle_deg)
    new_w = max(1, int(math.ceil(scale * (w * abs(math.cos(theta))
                                          + h * abs(math.sin(theta))))) + 2)
    new_h = max(1, int(math.ceil(scale * (w * abs(math.sin(theta))
                                          + h * abs(math.cos(theta))))) + 2)
    m = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle_deg, scale)
    m[0, 2] += new_w / 2.0 - w / 2.0
    m[1, 2] += new_h / 2.0 - h / 2.0
    out_i = cv2.warpAffine(inten, m, (new_w, new_h), flags=cv2.INTER_LINEAR,
                           borderValue=0.0)
    out_m = cv2.warpAffine(mask.astype(np.uint8), m, (new_w, new_h),
                           flags=cv2.INTER_NEAREST, borderValue=0)
    out_m = out_m.astype(bool)
    if not out_m.any():
        return None
    out_i = np.clip(out_i * gain, 0.0, 1.0)
    return _tighten(replace(crop, intensity=out_i, mask=out_m))


def augment_crop(crop: Crop, rng: np.random.Generator,
                 cfg: GenConfig) -> tuple[Crop, dict]:
    """Weak augmentation: optional horizontal flip, small rotation,
    isotropic scale, and intensity gain. The mask is transformed
    nearest-neighbor and re-tightened. One resample on an empty result."""
    for _ in range(2):
        flip = bool(rng.random() < cfg.flip_prob)
        angle = cfg.crop_rotation_deg.sample(rng)
        scale = cfg.crop_scale.sample(rng)
        gain = cfg.crop_gain.sample(rng)
        out = _apply_transform(crop, flip, angle, scale, gain)
        if out is not None:
            return out, {"flip": flip, "rotation_deg": angle, "scale": scale,
                         "gain": gain}
    raise AugmentError("augmented mask is empty after resample")


def paste_crop(dst: GrayImage, crop: Crop, region: RegionSample, mode: str,
               rng: np.random.Generator, cfg: GenConfig,
               z_order: int = 0) -> tuple[GrayImage, InstanceRecord]:
    """Insert an (already augmented) crop centered at a sampled in-region
    point via the given blend mode. Retries up to 8 anchors for a fit."""
    h, w = crop.mask.shape
    margin = 1 if mode != "direct" else 0
    for _ in range(PLACEMENT_RETRIES):
        ax, ay = sample_point_in_region(region, rng)
        x0, y0 = ax - w // 2, ay - h // 2
        if (x0 >= margin and y0 >= margin and x0 + w <= dst.width - margin
                and y0 + h <= dst.height - margin):
            break
    else:
        raise PlacementError("placement failed")
    out, applied_mode = blend_mod.blend(dst, crop.intensity, crop.mask,
                                        (x0, y0), mode, tol=cfg.solver_tol,
                                        max_iter=cfg.solver_max_iter)
    canvas_mask = np.zeros((dst.height, dst.width), dtype=bool)
    canvas_mask[y0:y0 + h, x0:x0 + w] = crop.mask
    record = make_record(canvas_mask, "cutpaste", z_order,
                         anchor_anatomy=region.label_id,
                         params={"crop_id": crop.source_id,
                                 "crop_category": crop.category,
                                 "mode": applied_mode,
                                 "requested_mode": mode,
                                 "origin": [int(x0), int(y0)],
                                 "anchor": [int(ax), int(ay)]})
    return out, record
