import math

import cv2
import numpy as np
import pytest

from fbsynth import structures
from fbsynth.anatomy import LabelMap, body_mask
from fbsynth.core import GenConfig, Range, SeedStream

from conftest import make_label_array, CATALOG

CFG = GenConfig()


def rng_for(seed):
    return SeedStream(seed).generator()


@pytest.fixture(scope="module")
def label_map_1024():
    return LabelMap(labels=make_label_array((1024, 1024)), catalog=CATALOG)


def canvas_mask(patch, dims):
    w, h = dims
    m = np.zeros((h, w), dtype=bool)
    x0, y0 = patch.origin
    m[y0:y0 + patch.height, x0:x0 + patch.width] = patch.footprint()
    return m


def region_contains(region, x, y):
    return bool(np.any((region.pixels[:, 0] == y) & (region.pixels[:, 1] == x)))


# ---------------------------------------------------------------------------
# unanchored families


def test_text_fits_canvas_and_has_no_anchor():
    for seed in range(20):
        patch, spec = structures.gen_text(CFG, (256, 256), rng_for(seed))
        x0, y0 = patch.origin
        assert x0 >= 0 and y0 >= 0
        assert x0 + patch.width <= 256 and y0 + patch.height <= 256
        assert spec.anchor_anatomy is None


def test_text_strings_vary():
    strings = {structures.gen_text(CFG, (256, 256), rng_for(s))[1].params["string"]
               for s in range(100)}
    assert len(strings) >= 2


def test_rect_footprint_and_alpha_range():
    for seed in range(20):
        patch, spec = structures.gen_rect(CFG, (256, 256), rng_for(seed))
        _, _, bw, bh = spec.params["bbox"]
        assert int(patch.footprint().sum()) == bw * bh
        assert CFG.opacity.contains(spec.params["alpha"])
        assert spec.anchor_anatomy is None


# ---------------------------------------------------------------------------
# anchored families


def test_circular_center_in_region_and_area(label_map_256):
    region = label_map_256.region(1)
    checked = 0
    for seed in range(30):
        try:
            patch, spec = structures.gen_circular(CFG, region, rng_for(seed),
                                                  (256, 256))
        except structures.StructureError:
            continue
        cx, cy = spec.params["center"]
        assert region_contains(region, cx, cy)
        assert spec.params["intensity"] >= CFG.bright_intensity.lo
        assert spec.anchor_anatomy == 1
        a, b = spec.params["semi_axes"]
        if min(a, b) >= 8:  # raster area oracle only meaningful above a few px
            count = int(canvas_mask(patch, (256, 256)).sum())
            full = math.pi * a * b
            # parts of the ellipse may be clipped by the canvas edge
            assert count <= full * 1.05
            if (cx - a - b >= 0 and cy - a - b >= 0
                    and cx + a + b < 256 and cy + a + b < 256):
                assert abs(count - full) <= 0.05 * full
        checked += 1
    assert checked >= 10


def test_ring_center_in_region_and_annulus_count(label_map_256):
    region = label_map_256.region(2)
    checked = 0
    for seed in range(40):
        try:
            patch, spec = structures.gen_ring(CFG, region, rng_for(seed),
                                              (256, 256))
        except structures.StructureError:
            continue
        cx, cy = spec.params["center"]
        assert region_contains(region, cx, cy)
        a, b = spec.params["semi_axes"]
        t = spec.params["thickness"]
        reach = max(a, b) + t
        if min(a, b) - t / 2 >= 2 and cx - reach >= 0 and cy - reach >= 0 \
                and cx + reach < 256 and cy + reach < 256:
            count = int(canvas_mask(patch, (256, 256)).sum())
            oracle = math.pi * ((a + t / 2) * (b + t / 2)
                                - (a - t / 2) * (b - t / 2))
            assert abs(count - oracle) <= 0.10 * oracle + 8
            checked += 1
    assert checked >= 5


def test_clips_count_and_length(label_map_1024):
    region = label_map_1024.region(1)
    for seed in range(10):
        results = structures.gen_clips(CFG, region, rng_for(seed), (1024, 1024))
        assert 1 <= len(results) <= 6
        for patch, spec in results:
            assert spec.anchor_anatomy == 1
            ys, xs = np.nonzero(patch.footprint())
            pts = np.column_stack([xs, ys]).astype(float)
            d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
            diameter = math.sqrt(float(d2.max()))
            # stroke caps extend the segment by ~thickness
            body = diameter - spec.params["thickness"]
            assert abs(body - spec.params["length"]) \
                <= 0.2 * spec.params["length"] + 2.0


class ZeroJitterRng:
    """Delegating RNG that suppresses the 2-vector jitter draws."""

    def __init__(self, rng):
        self._rng = rng

    def uniform(self, low=0.0, high=1.0, size=None):
        if size == 2:
            return np.zeros(2)
        return self._rng.uniform(low, high, size)

    def __getattr__(self, name):
        return getattr(self._rng, name)


def test_grid_node_count_without_jitter_loss():
    labels = np.zeros((256, 256), dtype=np.uint16)
    labels[10:110, 10:110] = 1
    m = LabelMap(labels=labels, catalog={1: "rect"})
    rel = 20.0 / math.hypot(100, 100)
    cfg = GenConfig(grid_spacing_rel=Range(rel, rel))
    patch, spec = structures.gen_grid(cfg, m.region(1),
                                      ZeroJitterRng(rng_for(0)), (256, 256))
    assert spec.params["node_count"] == 25  # ceil(100/20)^2
    assert spec.params["spacing"] == pytest.approx(20.0)


def test_grid_degree_at_most_four(label_map_256):
    region = label_map_256.region(1)
    for seed in range(10):
        try:
            _, spec = structures.gen_grid(CFG, region, rng_for(seed), (256, 256))
        except structures.StructureError:
            continue
        nodes = {tuple(n) for n in spec.params["lattice_nodes"]}
        for (i, j) in nodes:
            degree = sum((i + di, j + dj) in nodes
                         for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)))
            assert degree <= 4


# ---------------------------------------------------------------------------
# exterior line families


def test_line_starts_outside_body(label_map_256):
    body = body_mask(label_map_256)
    for seed in range(20):
        _, spec = structures.gen_line(CFG, label_map_256, rng_for(seed),
                                      (256, 256))
        x0, y0 = spec.params["control_points"][0][0]
        assert not body[int(round(y0)), int(round(x0))]
        assert spec.anchor_anatomy is None


def test_line_chain_joints_are_c0(label_map_256):
    for seed in range(10):
        _, spec = structures.gen_line(CFG, label_map_256, rng_for(seed),
                                      (256, 256))
        segs = spec.params["control_points"]
        for a, b in zip(segs, segs[1:]):
            assert np.allclose(a[3], b[0])


def test_parallel_lines_constant_fill_and_connected(label_map_1024):
    for seed in range(5):
        patch, spec = structures.gen_parallel_lines(CFG, label_map_1024,
                                                    rng_for(seed), (1024, 1024))
        fill = spec.params["fill_intensity"]
        wall = spec.params["wall_intensity"]
        fp = patch.footprint()
        vals = set(np.unique(patch.intensity[fp]).tolist())
        assert vals <= {np.float32(fill), np.float32(wall)}
        n, _ = cv2.connectedComponents(fp.astype(np.uint8), connectivity=4)
        assert n == 2  # background + one tube


def test_parallel_lines_wall_separation(label_map_1024):
    # the two wall curves sit ~tube_width apart along the center curve
    for seed in range(3):
        rng = rng_for(seed + 100)
        from fbsynth import raster
        chain = structures._sample_chain(label_map_1024, rng, (1024, 1024), 3)
        pts = raster.flatten_chain(chain)
        normals = structures._polyline_normals(pts)
        d = 12.0
        off1 = pts + normals * d / 2
        off2 = pts - normals * d / 2
        dist = np.hypot(*(off1 - off2).T)
        assert np.allclose(dist, d, atol=1e-6)
