"""The generation loop: per-image annotation sampling and whole-dataset runs.

Every image is a pure function of (config, manifest, image index): image i
uses the stream derive(root, i), where root = derive(master, 0) for training
sets and derive(master, 1) for validation sets. This makes datasets
reproducible byte-for-byte, independent of worker count, and prefix-stable
(the first n images of a longer run equal an n-image run).
"""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from . import blend as blend_mod
from . import cocoio, raster, structures
from .anatomy import LabelMap, load_label_map, sample_regions
from .core import (GenConfig, GrayImage, InstanceRecord, SeedStream,
                   make_record, sample_num_annotations, sample_weighted)
from .cutpaste import (AugmentError, CropLibrary, PlacementError, augment_crop,
                       load_crop_library, paste_crop)

log = logging.getLogger("fbsynth.pipeline")

ANNOTATION_RETRIES = 8
TRAIN_ROOT_INDEX = 0
VALIDATION_ROOT_INDEX = 1


class GenerationError(RuntimeError):
    pass


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratedSample:
    image: GrayImage
    instances: tuple
    source_id: str
    seed_path: tuple

    def __post_init__(self):
        if not self.instances:
            raise ValueError("a generated sample needs at least one instance")
        z = sorted(r.z_order for r in self.instances)
        if z != list(range(len(self.instances))):
            raise ValueError("z_orders must be 0..n-1 exactly once")


def _generate_plot(canvas: GrayImage, label_map: LabelMap, cfg: GenConfig,
                   family: str, regions: list[RegionSample],
                   rng: np.random.Generator, budget: int,
                   z_start: int) -> tuple[GrayImage, list[InstanceRecord]]:
    dims = (canvas.width, canvas.height)
    eligible = cfg.eligibility[family]
    if eligible == [] or eligible == ():
        if family == "text":
            patch, spec = structures.gen_text(cfg, dims, rng)
        elif family == "rectangular":
            patch, spec = structures.gen_rect(cfg, dims, rng)
        elif family == "line":
            patch, spec = structures.gen_line(cfg, label_map, rng, dims)
        elif family == "parallel_lines":
            patch, spec = structures.gen_parallel_lines(cfg, label_map, rng, dims)
        else:
            raise structures.StructureError(
                f"family {family} requires an anchor region")
        results = [(patch, spec)]
    else:
        candidates = [r for r in regions
                      if eligible == "*" or r.label_id in eligible]
        if not candidates:
            raise structures.StructureError(f"no eligible region for {family}")
        region = candidates[int(rng.integers(len(candidates)))]
        if family == "circular":
            results = [structures.gen_circular(cfg, region, rng, dims)]
        elif family == "ring":
            results = [structures.gen_ring(cfg, region, rng, dims)]
        elif family == "grid":
            results = [structures.gen_grid(cfg, region, rng, dims)]
        elif family == "clip":
            results = structures.gen_clips(cfg, region, rng, dims)
        elif family in ("line", "parallel_lines", "text", "rectangular"):
            # Families that are unanchored by default but were given an
            # eligibility set still render without a region anchor.
            return _generate_plot(canvas, label_map,
                                  cfg.with_overrides({f"eligibility.{family}": []}),
                                  family, regions, rng, budget, z_start)
        else:
            raise structures.StructureError(f"unknown family {family}")
    results = results[:budget]
    records = []
    out = canvas
    for patch, spec in results:
        mask = np.zeros((canvas.height, canvas.width), dtype=bool)
        fp = patch.footprint()
        x0, y0 = patch.origin
        mask[y0:y0 + patch.height, x0:x0 + patch.width] = fp
        out = blend_mod.composite_direct(out, patch)
        records.append(make_record(mask, spec.family, z_start + len(records),
                                   anchor_anatomy=spec.anchor_anatomy,
                                   params=spec.params))
    return out, records


def _try_generate(src: GrayImage, label_map: LabelMap, cfg: GenConfig,
                  base: SeedStream,
                  crops: Optional[CropLibrary]) -> list:
    num_ann = sample_num_annotations(cfg, base.child(0).generator())
    try:
        regions = sample_regions(label_map, base.child(1).generator(),
                                 cfg.anatomy_subset)
    except Exception:
        regions = []
    canvas = src
    records: list[InstanceRecord] = []
    slot = 0
    while len(records) < num_ann and slot < num_ann:
        slot_stream = base.child(2 + slot)
        for attempt in range(ANNOTATION_RETRIES):
            rng = slot_stream.child(attempt).generator()
            ann_type = sample_weighted(cfg.annotation_type_weights, rng)
            if ann_type == "cutpaste" and (crops is None or len(crops) == 0):
                ann_type = "plot"
            try:
                if ann_type == "plot":
                    family = sample_weighted(cfg.structure_weights, rng)
                    canvas, new = _generate_plot(canvas, label_map, cfg, family,
                                                 regions, rng,
                                                 num_ann - len(records),
                                                 len(records))
                    records.extend(new)
                else:
                    if not regions:
                        raise PlacementError("no anatomy for cut-paste")
                    crop = crops.sample(rng)
                    crop, aug_params = augment_crop(crop, rng, cfg)
                    mode = sample_weighted(cfg.blend_mode_weights, rng)
                    region = regions[int(rng.integers(len(regions)))]
                    canvas, record = paste_crop(canvas, crop, region, mode, rng,
                                                cfg, z_order=len(records))
                    record = InstanceRecord(
                        mask=record.mask, bbox=record.bbox,
                        category=record.category, z_order=record.z_order,
                        anchor_anatomy=record.anchor_anatomy,
                        params={**record.params, "augment": aug_params})
                    records.append(record)
                break
            except (structures.StructureError, PlacementError, AugmentError,
                    blend_mod.BlendError, blend_mod.SolverError,
                    raster.RasterError) as e:
                log.debug("annotation attempt failed: %s", e)
        slot += 1
    return [canvas, records]


def generate_sample(src: GrayImage, label_map: LabelMap, cfg: GenConfig,
                    stream: SeedStream,
                    crops: Optional[CropLibrary] = None) -> GeneratedSample:
    """Generate one synthetic sample; deterministic in all arguments."""
    if (label_map.height, label_map.width) != src.shape:
        raise GenerationError("source image and label map dimensions differ")
    for whole_attempt in range(2):
        canvas, records = _try_generate(src, label_map, cfg,
                                        stream.child(whole_attempt), crops)
        if records:
            return GeneratedSample(image=canvas, instances=tuple(records),
                                   source_id="", seed_path=stream.path)
    raise GenerationError("generation failed for image")


# ---------------------------------------------------------------------------
# dataset-level generation

_IMAGE_CACHE: dict = {}
_CROPS_CACHE: dict = {}


def read_gray_image(path) -> GrayImage:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None or raw.ndim != 2:
        raise DatasetError(f"cannot read grayscale image {path}")
    scale = float(np.iinfo(raw.dtype).max) if raw.dtype.kind == "u" else 1.0
    return GrayImage(raw.astype(np.float32) / scale)


def write_gray_image(img: GrayImage, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    data = np.rint(img.data * 255.0).astype(np.uint8)
    if not cv2.imwrite(str(path), data):
        raise DatasetError(f"cannot write {path}")


def read_manifest(data_root: Path) -> list[str]:
    manifest = data_root / "manifest.txt"
    if not manifest.exists():
        raise DatasetError(f"manifest not found: {manifest}")
    ids = [line.strip() for line in manifest.read_text().splitlines()
           if line.strip()]
    if not ids:
        raise DatasetError(f"manifest {manifest} is empty")
    return ids


def _load_source(data_root: Path, source_id: str,
                 cfg: GenConfig) -> tuple[GrayImage, LabelMap]:
    key = (str(data_root), source_id, str(cfg.image_size))
    if key in _IMAGE_CACHE:
        return _IMAGE_CACHE[key]
    img = read_gray_image(data_root / "images" / f"{source_id}.png")
    label_map = load_label_map(data_root / "anatomy" / f"{source_id}.png",
                               expected_dims=(img.width, img.height))
    if cfg.image_size != "keep":
        w, h = cfg.image_size
        img = GrayImage(np.clip(cv2.resize(np.asarray(img.data), (w, h),
                                           interpolation=cv2.INTER_AREA), 0, 1))
        labels = cv2.resize(label_map.labels, (w, h),
                            interpolation=cv2.INTER_NEAREST)
        label_map = LabelMap(labels=labels, catalog=label_map.catalog)
    if len(_IMAGE_CACHE) > 32:
        _IMAGE_CACHE.clear()
    _IMAGE_CACHE[key] = (img, label_map)
    return img, label_map


def _load_crops(cfg: GenConfig) -> Optional[CropLibrary]:
    if not cfg.crops_dir:
        return None
    key = cfg.crops_dir
    if key not in _CROPS_CACHE:
        _CROPS_CACHE[key] = load_crop_library(cfg.crops_dir)
    return _CROPS_CACHE[key]


def generate_one(args) -> dict:
    """Generate and write image ``index``; returns the annotation payload.

    Module-level so process pools can pickle it. Deterministic per index.
    """
    cfg_doc, index, root_index, out_dir = args
    cfg = GenConfig.from_json_dict(cfg_doc)
    data_root = Path(cfg.data_root)
    manifest = read_manifest(data_root)
    root = SeedStream(cfg.master_seed).child(root_index)
    stream = root.child(index)
    src_rng = stream.child(0).generator()
    source_id = manifest[int(src_rng.integers(len(manifest)))]
    src, label_map = _load_source(data_root, source_id, cfg)
    crops = _load_crops(cfg)
    file_name = f"images/{index:06d}.png"
    try:
        sample = generate_sample(src, label_map, cfg, stream.child(1), crops)
    except GenerationError as e:
        return {"id": index, "error": str(e)}
    write_gray_image(sample.image, Path(out_dir) / file_name)
    return {
        "id": index,
        "file_name": file_name,
        "width": sample.image.width,
        "height": sample.image.height,
        "source_id": source_id,
        "seed_path": list(stream.path),
        "annotations": [cocoio.record_payload(r) for r in sample.instances],
    }


def generate_dataset(cfg: GenConfig, n_images: int, out_dir, workers: int = 1,
                     root_index: int = TRAIN_ROOT_INDEX) -> dict:
    """Generate n_images samples into out_dir (images/, annotations.json,
    summary.json, config.lock.json). Output is independent of workers."""
    if n_images < 1:
        raise DatasetError("n_images must be >= 1")
    if not cfg.data_root:
        raise DatasetError("config has no data_root")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    read_manifest(Path(cfg.data_root))  # fail fast on a bad manifest
    cfg_doc = cfg.to_json_dict()
    tasks = [(cfg_doc, i, root_index, str(out_dir)) for i in range(n_images)]
    t0 = time.monotonic()
    if workers <= 1:
        results = [generate_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(generate_one, tasks, chunksize=16))
    results.sort(key=lambda r: r["id"])
    samples = [r for r in results if "error" not in r]
    failures = [r for r in results if "error" in r]
    cocoio.write_coco(samples, cfg.categories_mode, out_dir / "annotations.json")
    elapsed = time.monotonic() - t0
    category_counts: dict[str, int] = {}
    for s in samples:
        for a in s["annotations"]:
            category_counts[a["category"]] = category_counts.get(a["category"], 0) + 1
    summary = {
        "requested": n_images,
        "generated": len(samples),
        "failures": failures,
        "category_counts": dict(sorted(category_counts.items())),
        "wall_time_s": round(elapsed, 3),
        "workers": workers,
        "root_index": root_index,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    lock = {"config": cfg_doc, "n_images": n_images, "root_index": root_index}
    (out_dir / "config.lock.json").write_text(json.dumps(lock, indent=2))
    return summary


def split_validation(cfg: GenConfig, n_val: int, out_dir,
                     workers: int = 1) -> dict:
    """Validation split on a seed-path branch disjoint from training."""
    return generate_dataset(cfg, n_val, out_dir, workers=workers,
                            root_index=VALIDATION_ROOT_INDEX)
