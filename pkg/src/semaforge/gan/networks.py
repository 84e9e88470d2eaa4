"""Generator and discriminator architectures.

Both translator families share the same building blocks: reflection-padded
7x7 head/tail convolutions, strided downsampling, residual blocks and
transposed-convolution upsampling, with instance normalization throughout.
Generators emit unit-range images via a rescaled tanh; discriminators are
PatchGANs emitting per-patch probabilities via a sigmoid.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class ResnetBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(channels, channels, kernel_size=3),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


def _down(in_ch: int, out_ch: int) -> list[nn.Module]:
    return [nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1),
            nn.InstanceNorm2d(out_ch), nn.ReLU(inplace=True)]


def _up(in_ch: int, out_ch: int) -> list[nn.Module]:
    return [nn.ConvTranspose2d(in_ch, out_ch, kernel_size=3, stride=2,
                               padding=1, output_padding=1),
            nn.InstanceNorm2d(out_ch), nn.ReLU(inplace=True)]


class ResnetGenerator(nn.Module):
    """Encoder / residual blocks / decoder generator (CycleGAN style).

    ``forward_features`` exposes the activation before the output head, so
    the same class serves as the pix2pixHD global stage whose features feed
    the local enhancer.
    """

    def __init__(self, in_channels: int, out_channels: int, base_width: int = 64,
                 n_blocks: int = 6, downsample_levels: int = 2):
        super().__init__()
        layers: list[nn.Module] = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(in_channels, base_width, kernel_size=7),
            nn.InstanceNorm2d(base_width),
            nn.ReLU(inplace=True),
        ]
        ch = base_width
        for _ in range(downsample_levels):
            layers += _down(ch, ch * 2)
            ch *= 2
        layers += [ResnetBlock(ch) for _ in range(n_blocks)]
        for _ in range(downsample_levels):
            layers += _up(ch, ch // 2)
            ch //= 2
        self.body = nn.Sequential(*layers)
        self.head = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(ch, out_channels, kernel_size=7),
        )
        self.feature_channels = ch

    def forward_features(self, x):
        return self.body(x)

    def forward(self, x):
        return (torch.tanh(self.head(self.body(x))) + 1.0) / 2.0


class LocalEnhancer(nn.Module):
    """Full-resolution refinement stage fused with global-stage features."""

    def __init__(self, in_channels: int, out_channels: int, base_width: int,
                 fused_channels: int, n_blocks: int = 3):
        super().__init__()
        self.downsampled_channels = base_width * 2
        if self.downsampled_channels != fused_channels:
            raise ValueError(
                f"enhancer width {base_width} incompatible with global feature "
                f"channels {fused_channels} (need base_width*2 == fused_channels)")
        self.front = nn.Sequential(
            nn.ReflectionPad2d(3),
            nn.Conv2d(in_channels, base_width, kernel_size=7),
            nn.InstanceNorm2d(base_width),
            nn.ReLU(inplace=True),
            *_down(base_width, self.downsampled_channels),
        )
        self.blocks = nn.Sequential(*[ResnetBlock(self.downsampled_channels)
                                      for _ in range(n_blocks)])
        self.back = nn.Sequential(
            *_up(self.downsampled_channels, base_width),
            nn.ReflectionPad2d(3),
            nn.Conv2d(base_width, out_channels, kernel_size=7),
        )

    def forward(self, x_full, global_features):
        fused = self.front(x_full) + global_features
        return (torch.tanh(self.back(self.blocks(fused))) + 1.0) / 2.0


class Pix2PixHDGenerator(nn.Module):
    """Coarse-to-fine generator: global stage at half resolution plus a
    local enhancer restoring full resolution from the global features."""

    def __init__(self, global_net: ResnetGenerator, enhancer: LocalEnhancer):
        super().__init__()
        self.global_net = global_net
        self.enhancer = enhancer

    def forward_global(self, x_half):
        """Half-resolution output of the global stage alone."""
        return self.global_net(x_half)

    def forward(self, x_full):
        x_half = F.avg_pool2d(x_full, kernel_size=2, stride=2)
        feats = self.global_net.forward_features(x_half)
        # Global features live at half resolution; bring them up to the
        # enhancer's post-downsample grid (also half resolution).
        return self.enhancer(x_full, feats)


class NLayerDiscriminator(nn.Module):
    """PatchGAN over (conditioned) rasters, with per-layer feature taps."""

    def __init__(self, in_channels: int, base_width: int = 64, n_layers: int = 3):
        super().__init__()
        stages: list[nn.Module] = [nn.Sequential(
            nn.Conv2d(in_channels, base_width, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        )]
        ch = base_width
        for _ in range(1, n_layers):
            stages.append(nn.Sequential(
                nn.Conv2d(ch, ch * 2, kernel_size=4, stride=2, padding=1),
                nn.InstanceNorm2d(ch * 2),
                nn.LeakyReLU(0.2, inplace=True),
            ))
            ch *= 2
        stages.append(nn.Sequential(
            nn.Conv2d(ch, ch * 2, kernel_size=4, stride=1, padding=1),
            nn.InstanceNorm2d(ch * 2),
            nn.LeakyReLU(0.2, inplace=True),
        ))
        ch *= 2
        stages.append(nn.Sequential(
            nn.Conv2d(ch, 1, kernel_size=4, stride=1, padding=1),
            nn.Sigmoid(),
        ))
        self.stages = nn.ModuleList(stages)

    def features(self, x) -> list[torch.Tensor]:
        taps = []
        for stage in self.stages:
            x = stage(x)
            taps.append(x)
        return taps

    def forward(self, x):
        for stage in self.stages:
            x = stage(x)
        return x
