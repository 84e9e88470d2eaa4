"""Patch classifiers scoring the probability that a patch is GAN-generated."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from ..errors import ShapeMismatchError


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, stride: int = 1, out_channels: int | None = None):
        super().__init__()
        out_channels = out_channels or channels
        self.conv1 = nn.Conv2d(channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or out_channels != channels:
            self.skip = nn.Sequential(
                nn.Conv2d(channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels))
        else:
            self.skip = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.skip(x))


class ToyPatchNet(nn.Module):
    """8-layer residual classifier: stem + 3 residual blocks + linear head."""

    def __init__(self, width: int = 16):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
        )
        self.blocks = nn.Sequential(
            ResidualBlock(width, stride=2, out_channels=width * 2),
            ResidualBlock(width * 2, stride=2, out_channels=width * 4),
            ResidualBlock(width * 4, stride=2, out_channels=width * 4),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(width * 4, 1)

    def forward(self, x):
        x = self.blocks(self.stem(x))
        return self.head(self.pool(x).flatten(1)).squeeze(1)


def _resnet50_for_patches() -> nn.Module:
    # 50-layer backbone with the stem adapted to 64 px inputs: 3x3 stride-1
    # first conv and no max-pool, binary logit head.
    from torchvision.models import resnet50

    net = resnet50(weights=None, num_classes=1)
    net.conv1 = nn.Conv2d(3, 64, kernel_size=3, stride=1, padding=1, bias=False)
    net.maxpool = nn.Identity()
    forward = net.forward
    net.forward = lambda x: forward(x).squeeze(1)  # type: ignore[method-assign]
    return net


@dataclass
class DetectorModel:
    """Patch classifier plus the metadata needed to reuse it."""

    net: nn.Module
    patch_size: int = 64
    training_mode: str = "plain"  # plain | bart | adversarial
    profile: str = "toy"

    def logits(self, batch: torch.Tensor) -> torch.Tensor:
        return self.net(batch)

    def predict(self, patches: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Probability(generated) for (N, p, p, 3) unit-range patches."""
        patches = np.asarray(patches, dtype=np.float32)
        if patches.ndim != 4 or patches.shape[1:3] != (self.patch_size, self.patch_size):
            raise ShapeMismatchError(
                f"expected (N, {self.patch_size}, {self.patch_size}, 3), got {patches.shape}")
        self.net.eval()
        out = np.empty(len(patches), dtype=np.float64)
        with torch.no_grad():
            for i in range(0, len(patches), batch_size):
                x = torch.from_numpy(patches[i: i + batch_size]).permute(0, 3, 1, 2)
                out[i: i + batch_size] = torch.sigmoid(self.net(x)).numpy()
        return out


def build_detector(profile: str = "toy", training_mode: str = "plain",
                   seed: int | None = None) -> DetectorModel:
    if seed is not None:
        torch.manual_seed(seed)
    if profile == "toy":
        net = ToyPatchNet()
    elif profile == "full":
        net = _resnet50_for_patches()
    else:
        raise ValueError(f"unknown detector profile {profile!r}")
    return DetectorModel(net=net, training_mode=training_mode, profile=profile)


def save_detector(model: DetectorModel, ckpt_dir: Path | str) -> Path:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    (ckpt_dir / "spec.json").write_text(json.dumps({
        "type": "detector",
        "patch_size": model.patch_size,
        "training_mode": model.training_mode,
        "profile": model.profile,
    }, indent=2, sort_keys=True))
    torch.save(model.net.state_dict(), ckpt_dir / "weights.pt")
    return ckpt_dir


def load_detector(ckpt_dir: Path | str) -> DetectorModel:
    ckpt_dir = Path(ckpt_dir)
    spec = json.loads((ckpt_dir / "spec.json").read_text())
    model = build_detector(spec["profile"], spec["training_mode"])
    model.patch_size = spec["patch_size"]
    model.net.load_state_dict(torch.load(ckpt_dir / "weights.pt", map_location="cpu",
                                         weights_only=True))
    model.net.eval()
    return model
