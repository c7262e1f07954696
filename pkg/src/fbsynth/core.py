"""Core data types, splittable RNG streams, and the generation config."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np

# The eight plotted structure families, plus the cut-paste category and the
# category used by the color-annotation extractor.
FAMILIES = (
    "text",
    "circular",
    "ring",
    "rectangular",
    "clip",
    "grid",
    "line",
    "parallel_lines",
)
CATEGORIES = FAMILIES + ("cutpaste",)
EXTRACTED_CATEGORY = "extracted"

ANNOTATION_TYPES = ("plot", "cutpaste")
BLEND_MODES = ("direct", "poisson_normal", "poisson_seamless")

WEIGHT_SUM_TOL = 1e-9


class ConfigError(ValueError):
    """Raised when a config document cannot be parsed or fails validation."""


# ---------------------------------------------------------------------------
# rasters


@dataclass(frozen=True)
class GrayImage:
    """Single-channel intensity raster with values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("GrayImage data must be a non-empty 2-D array")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"intensities must lie in [0,1], got [{lo}, {hi}]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class AlphaPatch:
    """A renderable patch: intensity + per-pixel alpha + placement offset.

    ``origin`` is the (x, y) pixel position of the patch's top-left corner in
    the destination canvas. The footprint (alpha > 0) is never empty.
    """

    intensity: np.ndarray
    alpha: np.ndarray
    origin: tuple[int, int]

    def __post_init__(self):
        inten = np.ascontiguousarray(np.asarray(self.intensity, dtype=np.float32))
        alpha = np.ascontiguousarray(np.asarray(self.alpha, dtype=np.float32))
        if inten.ndim != 2 or inten.shape != alpha.shape:
            raise ValueError("intensity and alpha must be 2-D arrays of equal shape")
        if not np.any(alpha > 0):
            raise ValueError("empty footprint")
        for name, arr in (("intensity", inten), ("alpha", alpha)):
            if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
                raise ValueError(f"{name} values must lie in [0,1]")
        inten.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    def footprint(self) -> np.ndarray:
        return self.alpha > 0


def tight_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """(x, y, w, h) bounds of the true pixels of ``mask``."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise ValueError("empty mask has no bounding box")
    x0, x1 = int(cols[0]), int(cols[-1])
    y0, y1 = int(rows[0]), int(rows[-1])
    return (x0, y0, x1 - x0 + 1, y1 - y0 + 1)


@dataclass(frozen=True)
class InstanceRecord:
    """One annotation: a full-canvas binary mask plus provenance."""

    mask: np.ndarray
    bbox: tuple[int, int, int, int]
    category: str
    z_order: int
    anchor_anatomy: Optional[int] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        mask = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
        if mask.ndim != 2 or not mask.any():
            raise ValueError("instance mask must be a non-empty 2-D raster")
        if self.category not in CATEGORIES + (EXTRACTED_CATEGORY,):
            raise ValueError(f"unknown category {self.category!r}")
        if self.z_order < 0:
            raise ValueError("z_order must be >= 0")
        if tuple(self.bbox) != tight_bbox(mask):
            raise ValueError("bbox is not the tight bounding box of mask")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "bbox", tuple(int(v) for v in self.bbox))

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))


def make_record(mask: np.ndarray, category: str, z_order: int,
                anchor_anatomy: Optional[int] = None,
                params: Optional[dict] = None) -> InstanceRecord:
    return InstanceRecord(mask=mask, bbox=tight_bbox(mask), category=category,
                          z_order=z_order, anchor_anatomy=anchor_anatomy,
                          params=params or {})


# ---------------------------------------------------------------------------
# deterministic splittable randomness


@dataclass(frozen=True)
class SeedStream:
    """A splittable random stream: (master seed, derivation path).

    Children derived with distinct indices are statistically independent;
    re-deriving the same path always yields the same stream. Backed by
    numpy's ``SeedSequence`` spawn keys with the Philox counter generator.
    """

    master_seed: int
    path: tuple[int, ...] = ()

    def child(self, index: int) -> "SeedStream":
        return SeedStream(self.master_seed, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


def derive_stream(stream: SeedStream, index: int) -> SeedStream:
    return stream.child(index)


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class Range:
    """Closed interval [lo, hi] used for uniform scalar sampling."""

    lo: float
    hi: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo, self.hi))

    def sample_int(self, rng: np.random.Generator) -> int:
        return int(rng.integers(int(self.lo), int(self.hi) + 1))

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def to_json(self) -> list[float]:
        return [self.lo, self.hi]


# Eligibility values: "*" = any labeled region, [] = unanchored, or an
# explicit list of eligible label ids.
Eligibility = Union[str, list]

_DEFAULT_ELIGIBILITY: dict[str, Eligibility] = {
    "text": [],
    "rectangular": [],
    "line": [],
    "parallel_lines": [],
    "circular": "*",
    "ring": "*",
    "clip": "*",
    "grid": "*",
}


@dataclass(frozen=True)
class GenConfig:
    """Full sampling configuration for the generation pipeline.

    Pixel-valued ranges (thicknesses, clip lengths, tube widths) are given
    at a 1024-px reference width and scaled linearly with the canvas.
    """

    master_seed: int = 0
    max_annotations: int = 12
    annotation_type_weights: dict = field(
        default_factory=lambda: {"plot": 0.5, "cutpaste": 0.5})
    structure_weights: dict = field(
        default_factory=lambda: {f: 1.0 / len(FAMILIES) for f in FAMILIES})
    blend_mode_weights: dict = field(
        default_factory=lambda: {"direct": 1 / 3, "poisson_normal": 1 / 3,
                                 "poisson_seamless": 1 / 3})
    dark_intensity: Range = Range(0.0, 0.35)
    bright_intensity: Range = Range(0.65, 1.0)
    opacity: Range = Range(0.3, 1.0)
    rel_size: Range = Range(0.03, 0.25)
    line_thickness: Range = Range(1.5, 8.0)
    tube_width: Range = Range(6.0, 20.0)
    clip_length: Range = Range(4.0, 16.0)
    clip_count: Range = Range(1, 6)
    grid_spacing_rel: Range = Range(0.08, 0.2)
    text_length: Range = Range(1, 8)
    text_scale: Range = Range(1, 3)
    eligibility: dict = field(default_factory=lambda: dict(_DEFAULT_ELIGIBILITY))
    anatomy_subset: int = 8
    image_size: Union[str, list] = "keep"
    solver_tol: float = 1e-5
    solver_max_iter: int = 10000
    flip_prob: float = 0.5
    crop_rotation_deg: Range = Range(-15.0, 15.0)
    crop_scale: Range = Range(0.7, 1.3)
    crop_gain: Range = Range(0.8, 1.2)
    categories_mode: str = "per_family"
    data_root: Optional[str] = None
    crops_dir: Optional[str] = None

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_json() if isinstance(v, Range) else v
        return out

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GenConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        defaults = cls()
        for name, value in doc.items():
            if isinstance(getattr(defaults, name), Range):
                if (not isinstance(value, (list, tuple)) or len(value) != 2):
                    raise ConfigError(f"{name}: expected a [lo, hi] pair")
                kwargs[name] = Range(float(value[0]), float(value[1]))
            else:
                kwargs[name] = value
        cfg = cls(**kwargs)
        errors = validate_config(cfg)
        if errors:
            raise ConfigError("; ".join(errors))
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "GenConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}") from e
        return cls.from_json_dict(doc)

    def with_overrides(self, overrides: dict[str, Any]) -> "GenConfig":
        """Apply dotted-key overrides on top of this config (then revalidate)."""
        doc = self.to_json_dict()
        for key, value in overrides.items():
            parts = key.split(".")
            node = doc
            for p in parts[:-1]:
                if not isinstance(node, dict) or p not in node:
                    raise ConfigError(f"override references unknown key {key!r}")
                node = node[p]
            if not isinstance(node, dict) or parts[-1] not in node:
                raise ConfigError(f"override references unknown key {key!r}")
            node[parts[-1]] = value
        return GenConfig.from_json_dict(doc)


def _check_weights(errors: list[str], name: str, weights: Any,
                   expected_keys: Sequence[str]) -> None:
    if not isinstance(weights, dict):
        errors.append(f"{name}: expected an object of weights")
        return
    if set(weights) != set(expected_keys):
        errors.append(f"{name}: keys must be exactly {sorted(expected_keys)}")
        return
    vals = list(weights.values())
    if any(not isinstance(v, (int, float)) or v < 0 for v in vals):
        errors.append(f"{name}: weights must be non-negative numbers")
        return
    if abs(sum(vals) - 1.0) > WEIGHT_SUM_TOL:
        errors.append(f"{name}: weights sum to {sum(vals)!r}, expected 1")


def validate_config(cfg: GenConfig) -> list[str]:
    """Return every violated invariant, each naming the offending field."""
    errors: list[str] = []
    if cfg.max_annotations < 1:
        errors.append("max_annotations: must be >= 1")
    _check_weights(errors, "annotation_type_weights",
                   cfg.annotation_type_weights, ANNOTATION_TYPES)
    _check_weights(errors, "structure_weights", cfg.structure_weights, FAMILIES)
    _check_weights(errors, "blend_mode_weights", cfg.blend_mode_weights, BLEND_MODES)
    for name in ("dark_intensity", "bright_intensity", "opacity", "rel_size",
                 "line_thickness", "tube_width", "clip_length", "clip_count",
                 "grid_spacing_rel", "text_length", "text_scale",
                 "crop_rotation_deg", "crop_scale", "crop_gain"):
        r = getattr(cfg, name)
        if not isinstance(r, Range):
            errors.append(f"{name}: expected a [lo, hi] range")
            continue
        if r.lo > r.hi:
            errors.append(f"{name}: lo > hi")
    for name in ("dark_intensity", "bright_intensity", "opacity", "rel_size",
                 "grid_spacing_rel"):
        r = getattr(cfg, name)
        if isinstance(r, Range) and (r.lo < 0.0 or r.hi > 1.0):
            errors.append(f"{name}: range must lie in [0,1]")
    if not (0.0 <= cfg.flip_prob <= 1.0):
        errors.append("flip_prob: must lie in [0,1]")
    if isinstance(cfg.eligibility, dict):
        for fam, elig in cfg.eligibility.items():
            if fam not in FAMILIES:
                errors.append(f"eligibility.{fam}: unknown structure family")
            elif not (elig == "*" or isinstance(elig, list)):
                errors.append(f"eligibility.{fam}: expected '*' or a list of label ids")
        missing = sorted(set(FAMILIES) - set(cfg.eligibility))
        if missing:
            errors.append(f"eligibility: missing families {missing}")
    else:
        errors.append("eligibility: expected an object")
    if cfg.anatomy_subset < 1:
        errors.append("anatomy_subset: must be >= 1")
    if not (cfg.image_size == "keep"
            or (isinstance(cfg.image_size, (list, tuple)) and len(cfg.image_size) == 2
                and all(isinstance(v, int) and v > 0 for v in cfg.image_size))):
        errors.append("image_size: expected 'keep' or [width, height]")
    if cfg.solver_tol <= 0:
        errors.append("solver_tol: must be > 0")
    if cfg.solver_max_iter < 1:
        errors.append("solver_max_iter: must be >= 1")
    if cfg.categories_mode not in ("per_family", "class_agnostic"):
        errors.append("categories_mode: expected per_family or class_agnostic")
    return errors


def sample_num_annotations(cfg: GenConfig, rng: np.random.Generator) -> int:
    """Uniform integer in [1, max_annotations]."""
    return int(rng.integers(1, cfg.max_annotations + 1))


def sample_weighted(weights: dict, rng: np.random.Generator) -> str:
    """Draw a key of ``weights`` with probability proportional to its value."""
    keys = list(weights.keys())
    p = np.asarray([weights[k] for k in keys], dtype=np.float64)
    p = p / p.sum()
    return keys[int(rng.choice(len(keys), p=p))]
