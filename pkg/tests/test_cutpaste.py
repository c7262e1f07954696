import numpy as np
import pytest

from fbsynth import cutpaste
from fbsynth.anatomy import LabelMap
from fbsynth.core import GenConfig, GrayImage, Range, SeedStream

from conftest import make_crop_dir


def disk_crop(size=21, source_id="c0"):
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    mask = (xx - c) ** 2 + (yy - c) ** 2 <= (0.4 * size) ** 2
    return cutpaste.Crop(intensity=np.where(mask, 0.8, 0.0).astype(np.float32),
                         mask=mask, source_id=source_id)


def test_load_library_skips_bad_pairs(tmp_path):
    import cv2
    make_crop_dir(tmp_path, n=2)
    # third crop with a dimension-mismatched mask
    cv2.imwrite(str(tmp_path / "cropX.png"), np.full((20, 20), 128, np.uint8))
    cv2.imwrite(str(tmp_path / "cropX.mask.png"),
                np.full((10, 10), 255, np.uint8))
    lib = cutpaste.load_crop_library(tmp_path)
    assert len(lib) == 2
    assert len(lib.warnings) == 1 and "mismatch" in lib.warnings[0]


def test_load_library_empty_dir_raises(tmp_path):
    with pytest.raises(cutpaste.CropLibraryError):
        cutpaste.load_crop_library(tmp_path)


def test_library_order_is_deterministic(tmp_path):
    make_crop_dir(tmp_path, n=4)
    ids = [c.source_id for c in cutpaste.load_crop_library(tmp_path).crops]
    assert ids == sorted(ids)


def test_identity_transform_is_identity():
    crop = disk_crop()
    out = cutpaste._apply_transform(crop, flip=False, angle_deg=0.0,
                                    scale=1.0, gain=1.0)
    # identity up to the tighten step
    ys, xs = np.nonzero(crop.mask)
    y0, y1, x0, x1 = ys.min(), ys.max(), xs.min(), xs.max()
    assert np.array_equal(out.mask, crop.mask[y0:y1 + 1, x0:x1 + 1])
    np.testing.assert_allclose(out.intensity[out.mask],
                               crop.intensity[crop.mask], atol=1e-3)


def test_rotation_round_trip_iou():
    crop = disk_crop(size=31)
    fwd = cutpaste._apply_transform(crop, False, 17.0, 1.0, 1.0)
    back = cutpaste._apply_transform(fwd, False, -17.0, 1.0, 1.0)
    a, b = crop.mask, back.mask
    # align by padding to a common shape, centered
    h = max(a.shape[0], b.shape[0]) + 2
    w = max(a.shape[1], b.shape[1]) + 2
    pa = np.zeros((h, w), dtype=bool)
    pb = np.zeros((h, w), dtype=bool)
    pa[(h - a.shape[0]) // 2:(h - a.shape[0]) // 2 + a.shape[0],
       (w - a.shape[1]) // 2:(w - a.shape[1]) // 2 + a.shape[1]] = a
    pb[(h - b.shape[0]) // 2:(h - b.shape[0]) // 2 + b.shape[0],
       (w - b.shape[1]) // 2:(w - b.shape[1]) // 2 + b.shape[1]] = b
    iou = np.logical_and(pa, pb).sum() / np.logical_or(pa, pb).sum()
    assert iou >= 0.9


def test_augment_is_deterministic_per_stream():
    crop = disk_crop()
    cfg = GenConfig()
    a, pa = cutpaste.augment_crop(crop, SeedStream(5).generator(), cfg)
    b, pb = cutpaste.augment_crop(crop, SeedStream(5).generator(), cfg)
    assert pa == pb
    assert np.array_equal(a.mask, b.mask)
    assert np.array_equal(a.intensity, b.intensity)


def center_region():
    labels = np.zeros((64, 64), dtype=np.uint16)
    labels[24:40, 24:40] = 1
    return LabelMap(labels=labels, catalog={1: "r"}).region(1)


def test_paste_direct_replaces_masked_pixels():
    dst = GrayImage(np.full((64, 64), 0.3, dtype=np.float32))
    crop = disk_crop()
    region = center_region()
    out, rec = cutpaste.paste_crop(dst, crop, region, "direct",
                                   SeedStream(1).generator(), GenConfig())
    x0, y0 = rec.params["origin"]
    assert np.array_equal(
        out.data[y0:y0 + crop.height, x0:x0 + crop.width][crop.mask],
        crop.intensity[crop.mask])
    assert rec.category == "cutpaste"
    assert rec.anchor_anatomy == 1
    # bbox tight by construction
    from fbsynth.core import tight_bbox
    assert rec.bbox == tight_bbox(rec.mask)


def test_paste_placement_failure():
    dst = GrayImage(np.full((16, 16), 0.3, dtype=np.float32))
    crop = disk_crop(size=21)  # larger than the canvas
    with pytest.raises(cutpaste.PlacementError):
        cutpaste.paste_crop(dst, crop, center_region(), "direct",
                            SeedStream(0).generator(), GenConfig())
