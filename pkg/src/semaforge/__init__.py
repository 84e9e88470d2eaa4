"""semaforge: semantic-map driven image forgery and its forensic counterpart.

Forgery side: fine-tune an image-to-image translation GAN (CycleGAN or
pix2pixHD) until it memorizes a small map/image dataset, generate from a
tampered map, and feather-blend the result into the pristine image.

Forensics side: patch-based manipulation detectors (plain, BaRT-augmented,
adversarially trained), stride-1 localization heatmaps, and the patch-wise
FID/KID/SSIM evaluation protocol.
"""

__version__ = "0.1.0"

from .raster import DEFAULT_PALETTE, ImageTile, Palette, SemanticMap

__all__ = ["DEFAULT_PALETTE", "ImageTile", "Palette", "SemanticMap", "__version__"]
