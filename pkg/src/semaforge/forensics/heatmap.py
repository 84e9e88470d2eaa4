"""Stride-controlled sliding-window localization heatmaps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatchError
from ..raster import ImageTile
from .detector import DetectorModel


@dataclass
class DetectionHeatmap:
    """Per-pixel manipulation scores plus how many windows touched a pixel."""

    scores: np.ndarray    # (H, W) float64, mean over covering windows
    coverage: np.ndarray  # (H, W) int32
    stride: int
    patch_size: int

    def to_png_array(self) -> np.ndarray:
        """Simple viridis-free colormap render: blue (0) to red (1)."""
        s = np.clip(self.scores, 0.0, 1.0)
        rgb = np.stack([s, 0.2 * np.ones_like(s), 1.0 - s], axis=-1)
        return np.round(rgb * 255.0).astype(np.uint8)


def heatmap(model: DetectorModel, image: ImageTile, stride: int = 1,
            batch_size: int = 256) -> DetectionHeatmap:
    """Slide the patch window and average per-pixel scores.

    Windows are scored in batches; the per-pixel sums come from a corner
    difference + prefix-sum accumulation, so the cost is
    O(windows * inference + pixels) rather than windows * patch area.
    """
    h, w = image.shape
    p = model.patch_size
    if h < p or w < p:
        raise ShapeMismatchError(f"image {h}x{w} smaller than patch size {p}")
    if stride < 1:
        raise ShapeMismatchError(f"stride must be >= 1, got {stride}")
    ys = np.arange(0, h - p + 1, stride)
    xs = np.arange(0, w - p + 1, stride)
    origins = [(int(y), int(x)) for y in ys for x in xs]

    acc = np.zeros((h + 1, w + 1), dtype=np.float64)
    cnt = np.zeros((h + 1, w + 1), dtype=np.int64)
    pixels = image.pixels
    for i in range(0, len(origins), batch_size):
        chunk = origins[i: i + batch_size]
        windows = np.stack([pixels[y: y + p, x: x + p] for y, x in chunk])
        scores = model.predict(windows)
        for (y, x), s in zip(chunk, scores):
            acc[y, x] += s
            acc[y, x + p] -= s
            acc[y + p, x] -= s
            acc[y + p, x + p] += s
            cnt[y, x] += 1
            cnt[y, x + p] -= 1
            cnt[y + p, x] -= 1
            cnt[y + p, x + p] += 1

    sums = acc.cumsum(axis=0).cumsum(axis=1)[:h, :w]
    counts = cnt.cumsum(axis=0).cumsum(axis=1)[:h, :w]
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return DetectionHeatmap(scores=means, coverage=counts.astype(np.int32),
                            stride=stride, patch_size=p)
