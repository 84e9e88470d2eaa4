"""Mask derivation, feathered alpha blending and the forge pipeline.

The blend keeps a hard guarantee: pixels whose feathered alpha is exactly
zero are byte-identical to the pristine image after 8-bit quantization, and
pixels deep enough inside the mask (erosion by the feather radius) equal the
generated image exactly. Feathering uses a normalized Gaussian whose kernel
is truncated at the feather radius (sigma = radius / 3), which is what makes
both exactness claims hold.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatchError
from .raster import ImageTile, SemanticMap, require_same_shape

DEFAULT_DILATION = 4
DEFAULT_FEATHER = 3


def disc_footprint(radius: int) -> np.ndarray:
    """Binary disc: offsets with dx^2 + dy^2 <= radius^2."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    r = int(radius)
    yy, xx = np.mgrid[-r: r + 1, -r: r + 1]
    return (yy ** 2 + xx ** 2) <= r * r


@dataclass
class ManipulationMask:
    """Binary raster marking tampered map regions."""

    mask: np.ndarray  # (H, W) bool
    feather_radius: int = DEFAULT_FEATHER
    dilation: int = 0

    def __post_init__(self):
        self.mask = np.asarray(self.mask).astype(bool)
        if self.mask.ndim != 2:
            raise ShapeMismatchError(f"mask must be 2-D, got {self.mask.shape}")

    @property
    def empty(self) -> bool:
        return not bool(self.mask.any())

    def to_image(self) -> ImageTile:
        gray = self.mask.astype(np.float32)
        return ImageTile(np.repeat(gray[:, :, None], 3, axis=2))

    @classmethod
    def from_image(cls, tile: ImageTile, feather_radius: int = DEFAULT_FEATHER) -> "ManipulationMask":
        return cls(tile.pixels.mean(axis=2) > 0.5, feather_radius=feather_radius)


def derive_mask(original: SemanticMap, tampered: SemanticMap, dilation: int = DEFAULT_DILATION,
                feather_radius: int = DEFAULT_FEATHER) -> ManipulationMask:
    """Pixels whose class changed, dilated by a disc structuring element."""
    require_same_shape(original.indices, tampered.indices)
    changed = original.indices != tampered.indices
    if dilation > 0 and changed.any():
        changed = ndimage.binary_dilation(changed, structure=disc_footprint(dilation))
    return ManipulationMask(changed, feather_radius=feather_radius, dilation=dilation)


def feather_alpha(mask: np.ndarray, feather_radius: int) -> np.ndarray:
    """Feathered alpha in [0, 1].

    The Gaussian ramp lives strictly inside the mask (masks are dilated
    before blending, so the soft edge still covers the seam): alpha is
    exactly 0 on the whole mask complement and exactly 1 on the mask's
    erosion by the feather radius.
    """
    mask = np.asarray(mask).astype(bool)
    if feather_radius <= 0:
        return mask.astype(np.float64)
    sigma = feather_radius / 3.0
    radius = int(feather_radius)
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    alpha = ndimage.correlate1d(mask.astype(np.float64), g, axis=0, mode="constant")
    alpha = ndimage.correlate1d(alpha, g, axis=1, mode="constant")
    alpha = np.clip(alpha, 0.0, 1.0)

    # Pin exact endpoints (the truncated kernel leaves float dust at both).
    alpha[~mask] = 0.0
    interior = ndimage.binary_erosion(mask, structure=disc_footprint(feather_radius),
                                      border_value=1)
    alpha[interior] = 1.0
    return alpha


def blend(pristine: ImageTile, generated: ImageTile, mask: ManipulationMask,
          method: str = "feather") -> ImageTile:
    """Composite generated over pristine inside the mask.

    The default feathered alpha composite works in float and quantizes to
    8 bits exactly once on the caller's save path; where alpha is 0 or 1
    the float output already equals the corresponding source bit-exactly.
    ``method="seamless"`` swaps in Poisson-style seamless cloning, which
    relaxes bit-exactness to pixels beyond the mask's feather halo.
    """
    require_same_shape(pristine.pixels, generated.pixels, mask.mask)
    if method == "seamless":
        return _seamless_clone(pristine, generated, mask)
    if method != "feather":
        raise ValueError(f"unknown blend method {method!r}")
    alpha = feather_alpha(mask.mask, mask.feather_radius)[:, :, None]
    out = alpha * generated.pixels.astype(np.float64) + (1.0 - alpha) * pristine.pixels.astype(np.float64)
    return ImageTile(out.astype(np.float32))


def _seamless_clone(pristine: ImageTile, generated: ImageTile,
                    mask: ManipulationMask) -> ImageTile:
    import cv2

    if mask.empty:
        return ImageTile(pristine.pixels.copy())
    dst = pristine.to_uint8()[:, :, ::-1]  # OpenCV wants BGR
    src = generated.to_uint8()[:, :, ::-1]
    mask_u8 = (mask.mask.astype(np.uint8)) * 255
    ys, xs = np.nonzero(mask.mask)
    center = (int((xs.min() + xs.max()) // 2), int((ys.min() + ys.max()) // 2))
    out = cv2.seamlessClone(src, dst, mask_u8, center, cv2.NORMAL_CLONE)
    return ImageTile.from_uint8(out[:, :, ::-1])


@dataclass
class ForgeryRecord:
    original_map: SemanticMap
    tampered_map: SemanticMap
    pristine: ImageTile
    generated: ImageTile
    mask: ManipulationMask
    blended: ImageTile
    provenance: dict = field(default_factory=dict)

    def save(self, out_dir: Path | str) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.blended.save_png(out_dir / "blended.png")
        self.mask.to_image().save_png(out_dir / "mask.png")
        self.generated.save_png(out_dir / "generated.png")
        (out_dir / "provenance.json").write_text(
            json.dumps(self.provenance, indent=2, sort_keys=True))
        return out_dir


def forge(model, sample, tampered: SemanticMap, dilation: int = DEFAULT_DILATION,
          feather: int = DEFAULT_FEATHER, deterministic: bool = False,
          checkpoint_id: str = "", blend_method: str = "feather") -> ForgeryRecord:
    """generate -> derive_mask -> blend, with full provenance."""
    from .training import generate  # local import to avoid a module cycle

    generated = generate(model, tampered)
    mask = derive_mask(sample.map, tampered, dilation=dilation, feather_radius=feather)
    blended = blend(sample.image, generated, mask, method=blend_method)
    provenance = {
        "checkpoint": checkpoint_id,
        "source_id": sample.source_id,
        "dilation": dilation,
        "feather": feather,
        "blend_method": blend_method,
        "mask_pixels": int(mask.mask.sum()),
        "timestamp": 0.0 if deterministic else time.time(),
    }
    return ForgeryRecord(original_map=sample.map, tampered_map=tampered,
                         pristine=sample.image, generated=generated,
                         mask=mask, blended=blended, provenance=provenance)
