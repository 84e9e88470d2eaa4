"""Barrage-of-random-transforms augmentation for detector hardening.

Half of the training samples (seeded coin flip) pass through unchanged; the
other half receive exactly one transform, chosen uniformly, with its
parameter drawn uniformly from the declared range. Identity parameter
values (gamma 1, blur 0, scale 1, angle 0, noise 0) return the input
unchanged so robustness sweeps can anchor their clean point exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

log = logging.getLogger(__name__)

KINDS = ("gamma", "gaussian-noise", "gaussian-blur", "upscale",
         "upscale-downscale", "rotate-cw", "rotate-ccw")

BLUR_RADIUS_RANGE = (0.1, 5.0)

# Identity parameter per kind (transform degenerates to a no-op there).
IDENTITY_PARAM = {
    "gamma": 1.0,
    "gaussian-noise": 0.0,
    "gaussian-blur": 0.0,
    "upscale": 1.0,
    "upscale-downscale": 1.0,
    "rotate-cw": 0.0,
    "rotate-ccw": 0.0,
}


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    low: float
    high: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if not self.low <= self.high:
            raise ValueError(f"empty parameter range [{self.low}, {self.high}]")
        if self.kind == "gaussian-blur" and not (
                BLUR_RADIUS_RANGE[0] <= self.low and self.high <= BLUR_RADIUS_RANGE[1]):
            raise ValueError(f"blur radius range must stay within {BLUR_RADIUS_RANGE}")


def default_bart_specs() -> list[TransformSpec]:
    return [
        TransformSpec("gamma", 0.5, 2.0),
        TransformSpec("gaussian-noise", 1e-4, 0.1),
        TransformSpec("gaussian-blur", 0.1, 5.0),
        TransformSpec("upscale", 1.1, 2.0),
        TransformSpec("upscale-downscale", 1.1, 2.0),
        TransformSpec("rotate-cw", 1.0, 30.0),
        TransformSpec("rotate-ccw", 1.0, 30.0),
    ]


def _resize(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    t = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32)).permute(2, 0, 1)[None]
    out = F.interpolate(t, size=size, mode="bilinear", align_corners=False)
    return out[0].permute(1, 2, 0).numpy()


def _center_crop(img: np.ndarray, h: int, w: int) -> np.ndarray:
    y0 = (img.shape[0] - h) // 2
    x0 = (img.shape[1] - w) // 2
    return img[y0: y0 + h, x0: x0 + w]


def apply_transform(patch: np.ndarray, kind: str, param: float,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """One post-processing step on a unit-range (H, W, 3) patch."""
    patch = np.asarray(patch, dtype=np.float32)
    if np.isclose(param, IDENTITY_PARAM.get(kind, np.nan)):
        return patch.copy()
    h, w = patch.shape[:2]
    if kind == "gamma":
        out = np.clip(patch, 0.0, 1.0) ** param
    elif kind == "gaussian-noise":
        rng = rng or np.random.default_rng(0)
        out = patch + rng.normal(0.0, param, size=patch.shape)
    elif kind == "gaussian-blur":
        out = np.stack([ndimage.gaussian_filter(patch[..., c], sigma=param, mode="reflect")
                        for c in range(patch.shape[2])], axis=-1)
    elif kind == "upscale":
        up = _resize(patch, (max(h + 1, round(h * param)), max(w + 1, round(w * param))))
        out = _center_crop(up, h, w)
    elif kind == "upscale-downscale":
        up = _resize(patch, (max(h + 1, round(h * param)), max(w + 1, round(w * param))))
        out = _resize(up, (h, w))
    elif kind in ("rotate-cw", "rotate-ccw"):
        angle = -param if kind == "rotate-cw" else param
        out = ndimage.rotate(patch, angle, axes=(1, 0), reshape=False, order=1,
                             mode="reflect")
    else:
        raise ValueError(f"unknown transform kind {kind!r}")
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def draw_transform(specs: list[TransformSpec],
                   rng: np.random.Generator) -> tuple[str, float] | None:
    """The seeded BaRT decision: None for the identity half, otherwise one
    uniform (kind, parameter) draw."""
    if rng.random() >= 0.5:
        return None
    if not specs:
        log.warning("augmentation drawn but transform list is empty; applying identity")
        return None
    spec = specs[int(rng.integers(len(specs)))]
    return spec.kind, float(rng.uniform(spec.low, spec.high))


def bart_augment(patch: np.ndarray, specs: list[TransformSpec],
                 seed: int | np.random.Generator) -> np.ndarray:
    """Randomly post-process one patch; deterministic given the seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    drawn = draw_transform(specs, rng)
    if drawn is None:
        return np.asarray(patch, dtype=np.float32).copy()
    kind, param = drawn
    return apply_transform(patch, kind, param, rng=rng)
