import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from fbsynth import cocoio, pipeline
from fbsynth.core import GenConfig, SeedStream


def dataset_digest(out_dir: Path) -> str:
    h = hashlib.sha256()
    for png in sorted((out_dir / "images").glob("*.png")):
        h.update(png.name.encode())
        h.update(png.read_bytes())
    h.update((out_dir / "annotations.json").read_bytes())
    return h.hexdigest()


def base_config(source_set, crops=None, **overrides):
    doc = {"data_root": str(source_set), "master_seed": 11}
    if crops is not None:
        doc["crops_dir"] = str(crops)
    doc.update(overrides)
    return GenConfig.from_json_dict(doc)


def test_single_image_run(source_set_128, tmp_path, crops_dir):
    cfg = base_config(source_set_128, crops_dir)
    summary = pipeline.generate_dataset(cfg, 1, tmp_path / "out")
    assert summary["generated"] == 1
    assert (tmp_path / "out" / "images" / "000000.png").exists()
    doc = cocoio.load_coco(tmp_path / "out" / "annotations.json")
    assert len(doc["images"]) == 1
    assert len(doc["annotations"]) >= 1
    lock = json.loads((tmp_path / "out" / "config.lock.json").read_text())
    assert lock["config"]["master_seed"] == 11


def test_regeneration_is_byte_identical(source_set_128, tmp_path, crops_dir):
    cfg = base_config(source_set_128, crops_dir)
    pipeline.generate_dataset(cfg, 4, tmp_path / "a")
    pipeline.generate_dataset(cfg, 4, tmp_path / "b")
    assert dataset_digest(tmp_path / "a") == dataset_digest(tmp_path / "b")


def test_worker_count_does_not_change_output(source_set_128, tmp_path):
    cfg = base_config(source_set_128)
    pipeline.generate_dataset(cfg, 6, tmp_path / "w1", workers=1)
    pipeline.generate_dataset(cfg, 6, tmp_path / "w2", workers=2)
    assert dataset_digest(tmp_path / "w1") == dataset_digest(tmp_path / "w2")


def test_validation_split_differs_and_paths_disjoint(source_set_128, tmp_path):
    cfg = base_config(source_set_128)
    pipeline.generate_dataset(cfg, 3, tmp_path / "train")
    pipeline.split_validation(cfg, 3, tmp_path / "val")
    assert dataset_digest(tmp_path / "train") != dataset_digest(tmp_path / "val")
    train = cocoio.load_coco(tmp_path / "train" / "annotations.json")
    val = cocoio.load_coco(tmp_path / "val" / "annotations.json")
    train_paths = {tuple(i["fbsynth"]["seed_path"]) for i in train["images"]}
    val_paths = {tuple(i["fbsynth"]["seed_path"]) for i in val["images"]}
    assert not train_paths & val_paths


def test_z_orders_are_consecutive(source_set_128, crops_dir):
    cfg = base_config(source_set_128, crops_dir, max_annotations=6)
    src, label_map = pipeline._load_source(Path(cfg.data_root), "src0", cfg)
    crops = pipeline._load_crops(cfg)
    for i in range(5):
        sample = pipeline.generate_sample(src, label_map, cfg,
                                          SeedStream(3).child(i), crops)
        z = sorted(r.z_order for r in sample.instances)
        assert z == list(range(len(sample.instances)))
        assert 1 <= len(sample.instances) <= 6


def test_instance_count_within_max(source_set_128, tmp_path):
    cfg = base_config(source_set_128, max_annotations=3)
    pipeline.generate_dataset(cfg, 8, tmp_path / "out")
    doc = cocoio.load_coco(tmp_path / "out" / "annotations.json")
    per_image = {}
    for ann in doc["annotations"]:
        per_image[ann["image_id"]] = per_image.get(ann["image_id"], 0) + 1
    assert per_image and all(1 <= n <= 3 for n in per_image.values())


def test_missing_manifest_raises(tmp_path):
    cfg = GenConfig.from_json_dict({"data_root": str(tmp_path / "nowhere")})
    with pytest.raises(pipeline.DatasetError):
        pipeline.generate_dataset(cfg, 1, tmp_path / "out")


def test_image_size_override(source_set_128, tmp_path):
    cfg = base_config(source_set_128, image_size=[96, 80])
    pipeline.generate_dataset(cfg, 1, tmp_path / "out")
    img = pipeline.read_gray_image(tmp_path / "out" / "images" / "000000.png")
    assert (img.width, img.height) == (96, 80)


def test_written_images_are_8bit_png(source_set_128, tmp_path):
    import cv2
    cfg = base_config(source_set_128)
    pipeline.generate_dataset(cfg, 1, tmp_path / "out")
    raw = cv2.imread(str(tmp_path / "out" / "images" / "000000.png"),
                     cv2.IMREAD_UNCHANGED)
    assert raw.dtype == np.uint8 and raw.ndim == 2
