from .losses import (
    cycle_consistency_loss,
    cyclegan_objective,
    feature_matching_loss,
    gan_loss,
    identity_loss,
    multiscale_gan_objective,
    patchgan_score,
    pix2pixhd_objective,
)
from .model import (
    DiscriminatorSpec,
    GeneratorSpec,
    LossWeights,
    TranslatorModel,
    build_translator,
    load_checkpoint,
    save_checkpoint,
)
from .networks import (
    NLayerDiscriminator,
    Pix2PixHDGenerator,
    ResnetGenerator,
)

__all__ = [
    "cycle_consistency_loss",
    "cyclegan_objective",
    "feature_matching_loss",
    "gan_loss",
    "identity_loss",
    "multiscale_gan_objective",
    "patchgan_score",
    "pix2pixhd_objective",
    "DiscriminatorSpec",
    "GeneratorSpec",
    "LossWeights",
    "TranslatorModel",
    "build_translator",
    "load_checkpoint",
    "save_checkpoint",
    "NLayerDiscriminator",
    "Pix2PixHDGenerator",
    "ResnetGenerator",
]
