"""Radon cumulative distribution transform nearest-subspace classification."""
from ._validation import ConfigError, ParseError, ValidationError
from .transforms import (DEFAULT_N_THETA, cdt_forward, cdt_inverse, radon_forward, radon_inverse,
                         rcdt_batch, rcdt_forward, rcdt_inverse, sliced_wasserstein_sq)
from .invariance import (SpanningSet, predict_gamma, predict_theta_prime, rotate_rcdt,
                         spanning_affine, spanning_translation)
from .classifier import (ClassifierConfig, SubspaceModel, classify, distance_to_subspace,
                         predict_maps, train)
from .data import (DeformationRange, LabeledDataset, apply_affine, builtin_templates, load_idx,
                   normalize_image, synth_affine_dataset)
from .estimators import RCDTNSClassifier, RCDTTransformer

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ParseError", "ValidationError", "DEFAULT_N_THETA", "cdt_forward",
    "cdt_inverse", "radon_forward", "radon_inverse", "rcdt_batch", "rcdt_forward",
    "rcdt_inverse", "sliced_wasserstein_sq", "SpanningSet", "predict_gamma",
    "predict_theta_prime", "rotate_rcdt", "spanning_affine", "spanning_translation",
    "ClassifierConfig", "SubspaceModel", "classify", "distance_to_subspace", "predict_maps",
    "train", "DeformationRange", "LabeledDataset", "apply_affine", "builtin_templates",
    "load_idx", "normalize_image", "synth_affine_dataset", "RCDTNSClassifier", "RCDTTransformer",
]
