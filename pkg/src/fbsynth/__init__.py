"""fbsynth: deterministic synthetic foreign-body datasets for chest X-rays.

Plots parameterized synthetic structures and pastes pre-extracted object
crops into foreign-body-free radiographs, guided by anatomy label maps, and
emits pixel-exact COCO-style instance annotations.
"""

from .core import (AlphaPatch, GenConfig, GrayImage, InstanceRecord, Range,
                   SeedStream, derive_stream, sample_num_annotations,
                   validate_config)
from .anatomy import LabelMap, RegionSample, load_label_map, save_label_map
from .pipeline import GeneratedSample, generate_dataset, generate_sample, split_validation

__version__ = "0.1.0"

__all__ = [
    "AlphaPatch", "GenConfig", "GrayImage", "InstanceRecord", "Range",
    "SeedStream", "derive_stream", "sample_num_annotations", "validate_config",
    "LabelMap", "RegionSample", "load_label_map", "save_label_map",
    "GeneratedSample", "generate_dataset", "generate_sample", "split_validation",
    "__version__",
]
