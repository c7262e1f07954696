import numpy as np
import pytest

from fbsynth import cocoio, extractor
from fbsynth.core import GrayImage


def make_pair(size=64, seed=0):
    rng = np.random.default_rng(seed)
    clean = rng.uniform(0.3, 0.7, (size, size)).astype(np.float32)
    annotated = np.repeat(clean[:, :, None], 3, axis=2).copy()
    return annotated, GrayImage(clean)


def paint(annotated, y, x, h, w, color):
    annotated[y:y + h, x:x + w] = color
    mask = np.zeros(annotated.shape[:2], dtype=bool)
    mask[y:y + h, x:x + w] = True
    return mask


def test_single_red_block_recovered_exactly():
    annotated, clean = make_pair()
    mask = paint(annotated, 10, 12, 20, 20, (1.0, 0.0, 0.0))
    records = extractor.extract_masks(extractor.ColorImage(annotated), clean)
    assert len(records) == 1
    assert np.array_equal(records[0].mask, mask)
    assert records[0].category == "extracted"


def test_two_hues_give_two_instances():
    annotated, clean = make_pair()
    red = paint(annotated, 5, 5, 10, 10, (1.0, 0.0, 0.0))
    blue = paint(annotated, 40, 40, 12, 8, (0.0, 0.0, 1.0))
    records = extractor.extract_masks(extractor.ColorImage(annotated), clean)
    assert len(records) == 2
    masks = [r.mask for r in records]
    assert not np.any(masks[0] & masks[1])
    got = {m.tobytes() for m in masks}
    assert got == {red.tobytes(), blue.tobytes()}


def test_same_hue_components_split():
    annotated, clean = make_pair()
    a = paint(annotated, 5, 5, 8, 8, (0.0, 1.0, 0.0))
    b = paint(annotated, 40, 40, 8, 8, (0.0, 1.0, 0.0))
    records = extractor.extract_masks(extractor.ColorImage(annotated), clean)
    assert len(records) == 2
    union = records[0].mask | records[1].mask
    assert np.array_equal(union, a | b)


def test_min_area_filters_specks():
    annotated, clean = make_pair()
    paint(annotated, 5, 5, 3, 3, (1.0, 0.0, 0.0))  # 9 px < min_area
    records = extractor.extract_masks(extractor.ColorImage(annotated), clean,
                                      min_area=20)
    assert records == []
    records = extractor.extract_masks(extractor.ColorImage(annotated), clean,
                                      min_area=5)
    assert len(records) == 1


def test_threshold_monotone():
    annotated, clean = make_pair()
    # weakly tinted block: chroma 0.2
    annotated[20:40, 20:40, 0] = np.clip(annotated[20:40, 20:40, 0] + 0.2,
                                         0, 1)
    low = extractor.extract_masks(extractor.ColorImage(annotated), clean,
                                  chroma_threshold=0.1)
    high = extractor.extract_masks(extractor.ColorImage(annotated), clean,
                                   chroma_threshold=0.5)
    low_count = sum(r.area for r in low)
    high_count = sum(r.area for r in high)
    assert low_count >= high_count


def test_dimension_mismatch_raises():
    annotated, _ = make_pair(size=64)
    clean = GrayImage(np.full((32, 32), 0.5, dtype=np.float32))
    with pytest.raises(extractor.AlignmentError):
        extractor.extract_masks(extractor.ColorImage(annotated), clean)


def test_export_extracted(tmp_path):
    annotated, clean = make_pair()
    paint(annotated, 10, 10, 10, 10, (1.0, 0.0, 0.0))
    paint(annotated, 40, 40, 10, 10, (0.0, 0.0, 1.0))
    records = extractor.extract_masks(extractor.ColorImage(annotated), clean)
    doc = extractor.export_extracted(records, "img.png", (64, 64),
                                     tmp_path / "out.json")
    assert len(doc["annotations"]) == 2
    loaded = cocoio.load_coco(tmp_path / "out.json")
    assert loaded == doc

    doc = extractor.export_extracted([], "img.png", (64, 64),
                                     tmp_path / "empty.json")
    assert doc["annotations"] == []
    assert doc["images"][0]["file_name"] == "img.png"
