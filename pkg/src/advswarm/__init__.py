"""Influence-guided particle-swarm adversarial image generation.

Pipeline: train or load a small softmax classifier (`classifier`), find
vulnerable images and pixels with the manifold influence measure
(`influence`), search for bounded perturbations with a particle swarm
(`pso`, `attack`), and write tables, heatmaps and result records (`report`).
`kernels` holds the compiled fast path for the attack objective with its
numpy fallback.
"""

from .attack import (
    AdversarialResult,
    AttackSpec,
    DatasetAttackSpec,
    generate_adversarial,
    generate_adversarial_set,
)
from .classifier import MlpClassifier, TrainConfig, load, predict, save, train
from .data import Dataset, Image, load_idx, load_image_dir, split, synth_blobs
from .errors import (
    AdvswarmError,
    DataError,
    InputError,
    NumericalError,
    OptimizerError,
    TrainingDivergedError,
)
from .influence import (
    MetricTensor,
    PerturbationSpec,
    image_influence,
    metric_tensor,
    mfi,
    pixel_influence_map,
    top_pixels,
)
from .pso import Bounds, SwarmConfig, SwarmResult, optimize

__version__ = "0.1.0"

__all__ = [
    "AdversarialResult",
    "AttackSpec",
    "AdvswarmError",
    "Bounds",
    "DataError",
    "Dataset",
    "DatasetAttackSpec",
    "Image",
    "InputError",
    "MetricTensor",
    "MlpClassifier",
    "NumericalError",
    "OptimizerError",
    "PerturbationSpec",
    "SwarmConfig",
    "SwarmResult",
    "TrainConfig",
    "TrainingDivergedError",
    "generate_adversarial",
    "generate_adversarial_set",
    "image_influence",
    "load",
    "load_idx",
    "load_image_dir",
    "metric_tensor",
    "mfi",
    "optimize",
    "pixel_influence_map",
    "predict",
    "save",
    "split",
    "synth_blobs",
    "top_pixels",
    "train",
]
