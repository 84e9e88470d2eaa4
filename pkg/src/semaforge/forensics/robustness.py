"""Detector robustness benchmarking against post-processed forgeries."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import roc_auc_score

from ..data import tile_raster
from ..errors import EmptyDatasetError
from ..raster import ImageTile
from .bart import apply_transform
from .detector import DetectorModel

log = logging.getLogger(__name__)


@dataclass
class RobustnessCurve:
    kind: str
    params: list[float]
    values: list[float]
    training_mode: str
    metric: str = "auc"

    def __post_init__(self):
        if list(self.params) != sorted(self.params):
            raise ValueError("parameter grid must be sorted ascending")

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params, "values": self.values,
                "training_mode": self.training_mode, "metric": self.metric}

    @property
    def mean_value(self) -> float:
        return float(np.mean(self.values))


def _to_patches(tiles: list[ImageTile], patch: int) -> np.ndarray:
    crops = [tile_raster(t.pixels, patch, patch) for t in tiles]
    return np.concatenate(crops)


def robustness_sweep(model: DetectorModel, generated: list[ImageTile],
                     pristine: list[ImageTile],
                     grid: dict[str, list[float]],
                     noise_seed: int = 0) -> list[RobustnessCurve]:
    """AUC of the detector as the fakes are post-processed along each grid.

    The post-processing models the forger's counter-forensics, so it
    touches the generated set only; the pristine patch scores stay fixed.
    The identity parameter of a transform reproduces the clean AUC exactly.
    """
    if not generated or not pristine:
        raise EmptyDatasetError("robustness sweep needs both evaluation sets")
    p = model.patch_size
    pristine_scores = model.predict(_to_patches(pristine, p))
    curves = []
    for kind, params in grid.items():
        params = sorted(float(v) for v in params)
        values = []
        for j, param in enumerate(params):
            rng = np.random.default_rng((noise_seed, hash(kind) & 0xFFFF, j))
            processed = [ImageTile(apply_transform(t.pixels, kind, param, rng=rng))
                         for t in generated]
            fake_scores = model.predict(_to_patches(processed, p))
            labels = np.concatenate([np.zeros(len(pristine_scores)), np.ones(len(fake_scores))])
            scores = np.concatenate([pristine_scores, fake_scores])
            values.append(float(roc_auc_score(labels, scores)))
        curves.append(RobustnessCurve(kind=kind, params=params, values=values,
                                      training_mode=model.training_mode))
        log.info("robustness %s: %s", kind, ["%.3f" % v for v in values])
    return curves
