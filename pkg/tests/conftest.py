"""Shared fixtures: synthetic source sets (image + anatomy + manifest) and
crop libraries built on the fly, so tests need no external data."""
from pathlib import Path

import cv2
import numpy as np
import pytest

from fbsynth.anatomy import LabelMap, save_label_map

CATALOG = {1: "left_lung", 2: "right_lung", 3: "mediastinum", 4: "heart"}


def make_label_array(size: tuple[int, int]) -> np.ndarray:
    """A plausible chest layout: two lung ellipses, a mediastinal strip and a
    heart ellipse, surrounded by unlabeled exterior."""
    w, h = size
    labels = np.zeros((h, w), dtype=np.uint16)
    yy, xx = np.mgrid[0:h, 0:w]

    def ellipse(cx, cy, a, b):
        return ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0

    labels[ellipse(0.32 * w, 0.48 * h, 0.17 * w, 0.33 * h)] = 1
    labels[ellipse(0.68 * w, 0.48 * h, 0.17 * w, 0.33 * h)] = 2
    med = np.zeros((h, w), dtype=bool)
    med[int(0.2 * h):int(0.8 * h), int(0.46 * w):int(0.54 * w)] = True
    labels[med & (labels == 0)] = 3
    heart = ellipse(0.55 * w, 0.62 * h, 0.10 * w, 0.12 * h)
    labels[heart & (labels == 0)] = 4
    return labels


def make_source_set(root: Path, size=(256, 256), n_sources=3, seed=0) -> Path:
    """Write images/, anatomy/ (+ sidecars) and manifest.txt under root."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "anatomy").mkdir(parents=True, exist_ok=True)
    w, h = size
    ids = []
    labels = make_label_array(size)
    for i in range(n_sources):
        rng = np.random.default_rng(seed * 1000 + i)
        noise = rng.uniform(0.0, 1.0, (h // 8, w // 8)).astype(np.float32)
        base = cv2.resize(noise, (w, h), interpolation=cv2.INTER_CUBIC)
        base = 0.25 + 0.5 * np.clip(base, 0.0, 1.0)
        base[labels > 0] = np.clip(base[labels > 0] + 0.1, 0.0, 1.0)
        cv2.imwrite(str(root / "images" / f"src{i}.png"),
                    np.rint(base * 255).astype(np.uint8))
        save_label_map(LabelMap(labels=labels, catalog=CATALOG),
                       root / "anatomy" / f"src{i}.png")
        ids.append(f"src{i}")
    (root / "manifest.txt").write_text("\n".join(ids) + "\n")
    return root


def make_crop_dir(root: Path, n=4, seed=0) -> Path:
    """Write <id>.png / <id>.mask.png crop pairs: disks, bars and annuli."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        s = int(rng.integers(18, 36))
        yy, xx = np.mgrid[0:s, 0:s]
        c = (s - 1) / 2.0
        r2 = (xx - c) ** 2 + (yy - c) ** 2
        kind = i % 3
        if kind == 0:
            mask = r2 <= (0.4 * s) ** 2
        elif kind == 1:
            mask = ((0.22 * s) ** 2 <= r2) & (r2 <= (0.42 * s) ** 2)
        else:
            mask = np.abs(yy - c) <= max(1.5, 0.12 * s)
        intensity = np.where(mask, rng.uniform(0.7, 1.0), 0.0)
        cv2.imwrite(str(root / f"crop{i}.png"),
                    np.rint(intensity * 255).astype(np.uint8))
        cv2.imwrite(str(root / f"crop{i}.mask.png"),
                    mask.astype(np.uint8) * 255)
    return root


@pytest.fixture(scope="session")
def source_set_256(tmp_path_factory):
    return make_source_set(tmp_path_factory.mktemp("src256"), size=(256, 256))


@pytest.fixture(scope="session")
def source_set_128(tmp_path_factory):
    return make_source_set(tmp_path_factory.mktemp("src128"), size=(128, 128))


@pytest.fixture(scope="session")
def crops_dir(tmp_path_factory):
    return make_crop_dir(tmp_path_factory.mktemp("crops"))


@pytest.fixture(scope="session")
def label_map_256():
    return LabelMap(labels=make_label_array((256, 256)), catalog=CATALOG)
