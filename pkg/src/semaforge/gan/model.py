"""Translator model assembly, encodings and checkpoint I/O.

A checkpoint is a directory holding ``spec.json`` (architecture, loss
weights, palette: the portable contract) plus ``weights.pt`` with the
parameter tensors in torch's native serialized form.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from ..errors import ConfigError
from ..raster import DEFAULT_PALETTE, ImageTile, Palette, SemanticMap
from .networks import LocalEnhancer, NLayerDiscriminator, Pix2PixHDGenerator, ResnetGenerator

log = logging.getLogger(__name__)

ARCHITECTURES = ("cyclegan", "pix2pixhd")
PROFILES = ("toy", "full")


@dataclass
class GeneratorSpec:
    kind: str  # cyclegan-resnet | pix2pixhd-global | pix2pixhd-local-enhancer
    in_channels: int
    out_channels: int
    base_width: int
    n_resnet_blocks: int
    downsample_levels: int


@dataclass
class DiscriminatorSpec:
    kind: str = "patchgan"
    n_layers: int = 3
    scales: int = 1  # 1 for CycleGAN D_x/D_y, 3 for the pix2pixHD pyramid
    conditional: bool = False
    base_width: int = 64

    def __post_init__(self):
        if self.scales < 1:
            raise ConfigError(f"discriminator needs scales >= 1, got {self.scales}")


@dataclass
class LossWeights:
    lambda_cycle: float = 10.0
    lambda_identity: float = 5.0
    lambda_fm: float = 10.0
    adversarial: str = "log"  # or "lsgan"

    def __post_init__(self):
        if min(self.lambda_cycle, self.lambda_identity, self.lambda_fm) < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.adversarial not in ("log", "lsgan"):
            raise ConfigError(f"unknown adversarial loss {self.adversarial!r}")


@dataclass
class TranslatorModel:
    """Trained or trainable generator/discriminator ensemble.

    CycleGAN models carry both directions (G: map->image, F: image->map)
    with unconditional discriminators D_y (image domain) and D_x (map
    domain). pix2pixHD models carry one composed generator and a conditional
    discriminator pyramid.
    """

    arch: str
    palette: Palette
    loss_weights: LossWeights
    generator_specs: list[GeneratorSpec]
    discriminator_spec: DiscriminatorSpec
    G: nn.Module = None
    F: nn.Module | None = None
    D_x: nn.Module | None = None
    D_y: nn.Module | None = None
    Ds: list[nn.Module] = field(default_factory=list)
    profile: str = "toy"

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.arch == "cyclegan" and self.F is None:
            raise ConfigError("cyclegan models carry both directions G and F")

    # -- encodings ---------------------------------------------------------

    def map_to_tensor(self, smap: SemanticMap) -> torch.Tensor:
        """Encode a semantic map for the generator input.

        CycleGAN translates RGB map renderings; pix2pixHD consumes one-hot
        class planes. Classes outside the model palette are clamped with a
        warning rather than rejected.
        """
        idx = smap.indices
        n_classes = len(self.palette)
        if idx.size and int(idx.max()) >= n_classes:
            log.warning("map holds class %d outside the model palette (size %d); clamping",
                        int(idx.max()), n_classes)
            idx = np.minimum(idx, n_classes - 1)
        if self.arch == "cyclegan":
            rgb = self.palette.colors[idx].astype(np.float32) / 255.0
            return torch.from_numpy(rgb).permute(2, 0, 1).unsqueeze(0)
        onehot = np.eye(n_classes, dtype=np.float32)[idx]
        return torch.from_numpy(onehot).permute(2, 0, 1).unsqueeze(0)

    @staticmethod
    def image_to_tensor(tile: ImageTile) -> torch.Tensor:
        return torch.from_numpy(tile.pixels).permute(2, 0, 1).unsqueeze(0)

    @staticmethod
    def tensor_to_image(t: torch.Tensor) -> ImageTile:
        arr = t.detach().squeeze(0).permute(1, 2, 0).clamp(0.0, 1.0).cpu().numpy()
        return ImageTile(arr.astype(np.float32))

    def tensor_to_map(self, t: torch.Tensor) -> SemanticMap:
        """Snap a generated map-side raster back to palette classes."""
        rgb = (t.detach().squeeze(0).permute(1, 2, 0).clamp(0, 1).cpu().numpy() * 255.0)
        return SemanticMap.from_rgb(np.round(rgb).astype(np.uint8), self.palette, strict=False)

    # -- parameter access ----------------------------------------------------

    def generator_parameters(self):
        params = list(self.G.parameters())
        if self.F is not None:
            params += list(self.F.parameters())
        return params

    def discriminator_parameters(self):
        params = []
        for d in filter(None, [self.D_x, self.D_y, *self.Ds]):
            params += list(d.parameters())
        return params

    def modules_dict(self) -> dict[str, nn.Module]:
        mods = {"G": self.G}
        if self.F is not None:
            mods["F"] = self.F
        if self.D_x is not None:
            mods["D_x"] = self.D_x
        if self.D_y is not None:
            mods["D_y"] = self.D_y
        for k, d in enumerate(self.Ds):
            mods[f"D{k}"] = d
        return mods

    def eval_mode(self) -> "TranslatorModel":
        for m in self.modules_dict().values():
            m.eval()
        return self


_PROFILE_DEFAULTS = {
    # d_layers=1 keeps the 4x-downsampled discriminator viable at the half
    # resolution used by the pix2pixhd global stage on 64 px toy tiles.
    "toy": dict(base_width=16, n_blocks=2, downsample_levels=2, d_width=16, d_layers=1),
    "full": dict(base_width=64, n_blocks=9, downsample_levels=2, d_width=64, d_layers=3),
}


def build_translator(arch: str, palette: Palette = DEFAULT_PALETTE, profile: str = "toy",
                     loss_weights: LossWeights | None = None,
                     seed: int | None = None) -> TranslatorModel:
    """Construct a fresh TranslatorModel in the given size profile."""
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch!r}")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    if seed is not None:
        torch.manual_seed(seed)
    p = _PROFILE_DEFAULTS[profile]
    weights = loss_weights or LossWeights()
    n_classes = len(palette)

    if arch == "cyclegan":
        g_spec = GeneratorSpec("cyclegan-resnet", 3, 3, p["base_width"],
                               p["n_blocks"], p["downsample_levels"])
        d_spec = DiscriminatorSpec(n_layers=p["d_layers"], scales=1,
                                   conditional=False, base_width=p["d_width"])
        G = _build_resnet(g_spec)
        F_ = _build_resnet(g_spec)
        D_y = NLayerDiscriminator(3, d_spec.base_width, d_spec.n_layers)
        D_x = NLayerDiscriminator(3, d_spec.base_width, d_spec.n_layers)
        return TranslatorModel(arch=arch, palette=palette, loss_weights=weights,
                               generator_specs=[g_spec], discriminator_spec=d_spec,
                               G=G, F=F_, D_x=D_x, D_y=D_y, profile=profile)

    global_spec = GeneratorSpec("pix2pixhd-global", n_classes, 3, p["base_width"],
                                p["n_blocks"], p["downsample_levels"])
    local_spec = GeneratorSpec("pix2pixhd-local-enhancer", n_classes, 3,
                               p["base_width"] // 2, max(1, p["n_blocks"] // 2), 1)
    d_spec = DiscriminatorSpec(n_layers=p["d_layers"], scales=3, conditional=True,
                               base_width=p["d_width"])
    global_net = _build_resnet(global_spec)
    enhancer = LocalEnhancer(local_spec.in_channels, local_spec.out_channels,
                             local_spec.base_width, global_net.feature_channels,
                             local_spec.n_resnet_blocks)
    G = Pix2PixHDGenerator(global_net, enhancer)
    Ds = [NLayerDiscriminator(n_classes + 3, d_spec.base_width, d_spec.n_layers)
          for _ in range(d_spec.scales)]
    return TranslatorModel(arch=arch, palette=palette, loss_weights=weights,
                           generator_specs=[global_spec, local_spec],
                           discriminator_spec=d_spec, G=G, Ds=Ds, profile=profile)


def _build_resnet(spec: GeneratorSpec) -> ResnetGenerator:
    return ResnetGenerator(spec.in_channels, spec.out_channels, spec.base_width,
                           spec.n_resnet_blocks, spec.downsample_levels)


def save_checkpoint(model: TranslatorModel, ckpt_dir: Path | str) -> Path:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    spec = {
        "type": "translator",
        "arch": model.arch,
        "profile": model.profile,
        "palette": model.palette.to_json(),
        "loss_weights": asdict(model.loss_weights),
        "generators": [asdict(g) for g in model.generator_specs],
        "discriminator": asdict(model.discriminator_spec),
    }
    (ckpt_dir / "spec.json").write_text(json.dumps(spec, indent=2, sort_keys=True))
    torch.save({name: m.state_dict() for name, m in model.modules_dict().items()},
               ckpt_dir / "weights.pt")
    return ckpt_dir


def load_checkpoint(ckpt_dir: Path | str) -> TranslatorModel:
    ckpt_dir = Path(ckpt_dir)
    spec = json.loads((ckpt_dir / "spec.json").read_text())
    palette = Palette.from_json(spec["palette"])
    weights = LossWeights(**spec["loss_weights"])
    model = build_translator(spec["arch"], palette, spec["profile"], weights)
    state = torch.load(ckpt_dir / "weights.pt", map_location="cpu", weights_only=True)
    for name, module in model.modules_dict().items():
        module.load_state_dict(state[name])
    return model
