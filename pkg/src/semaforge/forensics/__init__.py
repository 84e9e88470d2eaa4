from .bart import TransformSpec, apply_transform, bart_augment, default_bart_specs
from .detector import DetectorModel, load_detector, save_detector
from .heatmap import DetectionHeatmap, heatmap
from .robustness import RobustnessCurve, robustness_sweep
from .train import (
    DetectorTrainConfig,
    adversarial_train,
    max_accuracy,
    pgd_attack,
    train_detector,
)

__all__ = [
    "TransformSpec",
    "apply_transform",
    "bart_augment",
    "default_bart_specs",
    "DetectorModel",
    "load_detector",
    "save_detector",
    "DetectionHeatmap",
    "heatmap",
    "RobustnessCurve",
    "robustness_sweep",
    "DetectorTrainConfig",
    "adversarial_train",
    "max_accuracy",
    "pgd_attack",
    "train_detector",
]
