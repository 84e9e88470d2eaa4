"""Detector training: plain, BaRT-augmented and adversarial (PGD) modes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.metrics import roc_auc_score

from ..data import PatchDataset
from ..errors import ConfigError, EmptyDatasetError
from .bart import TransformSpec, bart_augment, default_bart_specs
from .detector import DetectorModel, build_detector

log = logging.getLogger(__name__)

MODES = ("plain", "bart", "adversarial")


@dataclass
class DetectorTrainConfig:
    epochs: int = 3
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    profile: str = "toy"
    # adversarial mode: the bound is stated in 8-bit pixel levels and
    # converted to unit scale internally; PGD uses step size epsilon/3.
    epsilon: float = 1.0
    attack_steps: int = 5
    bart_specs: list[TransformSpec] = field(default_factory=default_bart_specs)


@dataclass
class DetectorReport:
    val_auc: float = 0.5
    max_accuracy: float = 0.5
    history: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"val_auc": self.val_auc, "max_accuracy": self.max_accuracy,
                "history": self.history}


def max_accuracy(labels: np.ndarray, scores: np.ndarray) -> float:
    """Best accuracy over all score thresholds (either label orientation)."""
    labels = np.asarray(labels).astype(int)
    order = np.argsort(scores, kind="stable")
    sorted_labels = labels[order]
    n = len(labels)
    # Predicting positive above a cut between positions k-1 and k.
    pos_total = sorted_labels.sum()
    neg_below = np.concatenate([[0], np.cumsum(1 - sorted_labels)])
    pos_below = np.concatenate([[0], np.cumsum(sorted_labels)])
    correct = neg_below + (pos_total - pos_below)
    best = max(correct.max(), (n - correct).max())
    return float(best) / n


def pgd_attack(net: torch.nn.Module, x: torch.Tensor, y: torch.Tensor,
               epsilon: float, steps: int, step_size: float | None = None,
               generator: torch.Generator | None = None) -> torch.Tensor:
    """Projected gradient ascent on the detector loss under an L-inf bound.

    Returns the perturbation delta with max |delta| <= epsilon exactly and
    x + delta clamped to the unit pixel range. Zero steps (or zero epsilon)
    yield the zero perturbation.
    """
    if epsilon == 0.0 or steps == 0:
        return torch.zeros_like(x)
    # Clamp at a float32-representable value that never exceeds the
    # requested bound (float32 rounding of eps can land above it).
    eps32 = float(np.float32(epsilon))
    if eps32 > epsilon:
        eps32 = float(np.nextafter(np.float32(eps32), np.float32(0.0)))
    epsilon = eps32
    step_size = step_size if step_size is not None else epsilon / 3.0
    delta = torch.empty_like(x).uniform_(-epsilon, epsilon, generator=generator)
    delta = (x + delta).clamp(0.0, 1.0) - x
    for _ in range(steps):
        delta.requires_grad_(True)
        loss = F.binary_cross_entropy_with_logits(net(x + delta), y)
        grad = torch.autograd.grad(loss, delta)[0]
        with torch.no_grad():
            delta = delta + step_size * grad.sign()
            delta = delta.clamp(-epsilon, epsilon)
            delta = (x + delta).clamp(0.0, 1.0) - x
            delta = delta.clamp(-epsilon, epsilon)  # exact bound after range clip
    return delta.detach()


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i: i + batch_size]


def train_detector(data: PatchDataset, mode: str = "plain",
                   cfg: DetectorTrainConfig | None = None) -> tuple[DetectorModel, DetectorReport]:
    """Cross-entropy training of the patch classifier.

    ``mode`` selects plain training, BaRT on-the-fly augmentation, or
    adversarial training where each mini-batch is attacked by PGD before
    the update.
    """
    cfg = cfg or DetectorTrainConfig()
    if mode not in MODES:
        raise ConfigError(f"unknown training mode {mode!r}")
    if len(data) == 0:
        raise EmptyDatasetError("empty patch dataset")
    if len(np.unique(data.labels)) < 2:
        raise ConfigError("detector training needs both classes present")

    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    attack_gen = torch.Generator().manual_seed(cfg.seed ^ 0x5F5F5F)
    model = build_detector(cfg.profile, training_mode=mode)
    model.patch_size = data.patch_size
    opt = torch.optim.Adam(model.net.parameters(), lr=cfg.learning_rate)
    eps_unit = cfg.epsilon / 255.0

    train_idx = np.flatnonzero(~data.is_val)
    val_idx = np.flatnonzero(data.is_val)
    report = DetectorReport()

    for epoch in range(cfg.epochs):
        model.net.train()
        losses = []
        for batch in _epoch_batches(len(train_idx), cfg.batch_size, rng):
            idx = train_idx[batch]
            patches = data.patches[idx]
            if mode == "bart":
                patches = np.stack([
                    bart_augment(p, cfg.bart_specs,
                                 np.random.default_rng((cfg.seed, epoch, int(i))))
                    for i, p in zip(idx, patches)])
            x = torch.from_numpy(np.ascontiguousarray(patches, dtype=np.float32)) \
                .permute(0, 3, 1, 2)
            y = torch.from_numpy(data.labels[idx].astype(np.float32))
            if mode == "adversarial":
                model.net.eval()
                delta = pgd_attack(model.net, x, y, eps_unit, cfg.attack_steps,
                                   generator=attack_gen)
                model.net.train()
                x = x + delta
            opt.zero_grad()
            loss = F.binary_cross_entropy_with_logits(model.net(x), y)
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        entry = {"epoch": epoch, "loss": float(np.mean(losses))}
        if len(val_idx):
            scores = model.predict(data.patches[val_idx])
            entry["val_auc"] = float(roc_auc_score(data.labels[val_idx], scores))
            entry["val_max_acc"] = max_accuracy(data.labels[val_idx], scores)
        report.history.append(entry)

    if len(val_idx):
        scores = model.predict(data.patches[val_idx])
        report.val_auc = float(roc_auc_score(data.labels[val_idx], scores))
        report.max_accuracy = max_accuracy(data.labels[val_idx], scores)
    model.net.eval()
    return model, report


def adversarial_train(data: PatchDataset,
                      cfg: DetectorTrainConfig | None = None) -> tuple[DetectorModel, DetectorReport]:
    """PGD-hardened training under the configured L-inf bound."""
    cfg = cfg or DetectorTrainConfig()
    if cfg.epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    return train_detector(data, mode="adversarial", cfg=cfg)
