"""COCO-style dataset serialization with uncompressed RLE masks.

Masks use the COCO uncompressed RLE convention: column-major scan,
alternating run lengths starting with the zero run. Extension fields
(z-order, anchor anatomy, sampling parameters) live under the namespaced
"fbsynth" key so strict COCO parsers are unaffected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import CATEGORIES, EXTRACTED_CATEGORY, InstanceRecord

CLASS_AGNOSTIC_CATEGORY = "foreign_body"


class CocoFormatError(ValueError):
    pass


@dataclass(frozen=True)
class RleMask:
    size: tuple[int, int]  # (height, width)
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        h, w = self.size
        if any(c < 0 for c in counts) or any(c == 0 for c in counts[1:]):
            raise CocoFormatError("only the first run length may be zero")
        if sum(counts) != h * w:
            raise CocoFormatError(
                f"run lengths sum to {sum(counts)}, expected {h * w}")
        object.__setattr__(self, "size", (int(h), int(w)))
        object.__setattr__(self, "counts", counts)

    def to_json(self) -> dict:
        return {"size": list(self.size), "counts": list(self.counts)}


def rle_encode(mask: np.ndarray) -> RleMask:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.size == 0:
        raise CocoFormatError("mask must be a non-empty 2-D raster")
    flat = mask.ravel(order="F")
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(size=mask.shape, counts=tuple(counts))


def rle_decode(rle: RleMask) -> np.ndarray:
    h, w = rle.size
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in rle.counts:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape((w, h)).T  # undo column-major scan


def category_table(mode: str) -> list[dict]:
    if mode == "class_agnostic":
        return [{"id": 1, "name": CLASS_AGNOSTIC_CATEGORY}]
    if mode == "per_family":
        return [{"id": i + 1, "name": name} for i, name in enumerate(CATEGORIES)]
    raise CocoFormatError(f"unknown categories mode {mode!r}")


def _category_id(category: str, mode: str) -> int:
    if mode == "class_agnostic":
        return 1
    if category == EXTRACTED_CATEGORY:
        return CATEGORIES.index("cutpaste") + 1
    return CATEGORIES.index(category) + 1


def record_payload(record: InstanceRecord) -> dict:
    """Serialize one InstanceRecord into an annotation payload (no ids yet)."""
    return {
        "category": record.category,
        "segmentation": rle_encode(record.mask).to_json(),
        "bbox": list(record.bbox),
        "area": record.area,
        "z_order": record.z_order,
        "anchor_anatomy": record.anchor_anatomy,
        "params": record.params,
    }


def write_coco(samples: list[dict], categories_mode: str, path) -> dict:
    """Write a COCO JSON document from per-sample payloads.

    Each sample is a dict with keys id, file_name, width, height, optional
    source_id / seed_path, and "annotations": a list of record payloads
    (see record_payload). Returns the written document.
    """
    images = []
    annotations = []
    ann_id = 1
    for sample in samples:
        image_entry = {
            "id": int(sample["id"]),
            "file_name": sample["file_name"],
            "width": int(sample["width"]),
            "height": int(sample["height"]),
        }
        ext = {k: sample[k] for k in ("source_id", "seed_path") if k in sample}
        if ext:
            image_entry["fbsynth"] = ext
        images.append(image_entry)
        for payload in sample["annotations"]:
            annotations.append({
                "id": ann_id,
                "image_id": int(sample["id"]),
                "category_id": _category_id(payload["category"], categories_mode),
                "segmentation": payload["segmentation"],
                "bbox": payload["bbox"],
                "area": payload["area"],
                "iscrowd": 0,
                "fbsynth": {
                    "category": payload["category"],
                    "z_order": payload["z_order"],
                    "anchor_anatomy": payload["anchor_anatomy"],
                    "params": payload["params"],
                },
            })
            ann_id += 1
    doc = {
        "images": images,
        "annotations": annotations,
        "categories": category_table(categories_mode),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
    return doc


def load_coco(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CocoFormatError(f"cannot parse {path}: {e}") from e
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise CocoFormatError(f"missing top-level key {key!r}")
    return doc


def decode_annotation(ann: dict) -> np.ndarray:
    seg = ann["segmentation"]
    return rle_decode(RleMask(size=tuple(seg["size"]), counts=tuple(seg["counts"])))


def dataset_stats(path) -> dict:
    """Per-category counts, area/instances-per-image histograms, and the
    fraction of instances whose mask overlaps another in the same image."""
    doc = load_coco(path)
    cat_names = {c["id"]: c["name"] for c in doc["categories"]}
    by_image: dict[int, list[dict]] = {}
    for ann in doc["annotations"]:
        by_image.setdefault(ann["image_id"], []).append(ann)
    category_counts = {name: 0 for name in cat_names.values()}
    area_hist: dict[str, int] = {}
    per_image_hist: dict[int, int] = {}
    overlapping = 0
    total = 0
    for image in doc["images"]:
        anns = by_image.get(image["id"], [])
        per_image_hist[len(anns)] = per_image_hist.get(len(anns), 0) + 1
        masks = [decode_annotation(a) for a in anns]
        union_counts = None
        if masks:
            union_counts = np.zeros(masks[0].shape, dtype=np.int32)
            for m in masks:
                union_counts += m
        for ann, mask in zip(anns, masks):
            total += 1
            category_counts[cat_names[ann["category_id"]]] += 1
            bucket = 1 << max(0, int(ann["area"]).bit_length() - 1)
            key = f"{bucket}-{2 * bucket - 1}"
            area_hist[key] = area_hist.get(key, 0) + 1
            if union_counts is not None and np.any(union_counts[mask] > 1):
                overlapping += 1
    return {
        "images": len(doc["images"]),
        "instances": total,
        "category_counts": category_counts,
        "area_histogram": dict(sorted(area_hist.items(),
                                      key=lambda kv: int(kv[0].split("-")[0]))),
        "instances_per_image": {str(k): v for k, v in sorted(per_image_hist.items())},
        "overlap_rate": (overlapping / total) if total else 0.0,
    }
