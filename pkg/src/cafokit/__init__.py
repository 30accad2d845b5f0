"""Infrastructure-mask filtering, engineered priors, mask-guided attention
classification and explainability for CAFO scene analysis."""

from .features import (FeatureStandardizer, InsufficientDataError, area_ratios,
                       assemble_features, chamfer_distance, load_county_table,
                       resolve_county)
from .masks import (BinaryMask, Candidate, DetectionBox, DimensionMismatchError,
                    EmptyMaskError, FilterThresholds, InfraCategory, Taxonomy,
                    UnknownCategoryError, composite_masks, filter_candidates,
                    geometric_functionals, resize_composite, rle_decode,
                    rle_encode)
from .metrics import LengthMismatchError, macro_f1, per_class_f1
from .model import (CLASS_NAMES, ConfigMismatchError, ModelConfig, ModelState,
                    NonFiniteLossError, ShapeMismatchError, UntrainedModelError,
                    classify_forward, init_params, loss_and_gradients)
from .synth import SceneRecipe, SynthConfig, generate_dataset
from .train import TrainConfig, TrainSample, predict, train

__all__ = [
    "BinaryMask", "Candidate", "DetectionBox", "InfraCategory", "Taxonomy",
    "FilterThresholds", "geometric_functionals", "filter_candidates",
    "composite_masks", "resize_composite", "rle_encode", "rle_decode",
    "FeatureStandardizer", "area_ratios", "chamfer_distance",
    "assemble_features", "load_county_table", "resolve_county",
    "ModelConfig", "ModelState", "CLASS_NAMES", "classify_forward",
    "init_params", "loss_and_gradients", "TrainConfig", "TrainSample",
    "train", "predict", "SynthConfig", "SceneRecipe", "generate_dataset",
    "per_class_f1", "macro_f1",
    "EmptyMaskError", "UnknownCategoryError", "DimensionMismatchError",
    "InsufficientDataError", "ShapeMismatchError", "ConfigMismatchError",
    "NonFiniteLossError", "UntrainedModelError", "LengthMismatchError",
]
