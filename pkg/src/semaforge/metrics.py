"""Quantitative evaluation protocol: SSIM, FID and KID over patch sets.

The patch-wise protocol extracts co-located overlapping windows from a
pristine/generated image pair, drops every window touching the manipulated
region (configurable via ``min_clean_fraction``), averages SSIM over the
surviving pairs and computes FID/KID between the two embedded patch sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import fftconvolve

from .errors import InsufficientSamplesError, ShapeMismatchError
from .manipulation import ManipulationMask
from .raster import ImageTile

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def _window_means(channel: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Valid-mode windowed means via a sliding-window dot product; images in
    # this protocol are patch-sized so the direct product is cheap and exact.
    view = np.lib.stride_tricks.sliding_window_view(channel, kernel.shape)
    return np.einsum("ijkl,kl->ij", view, kernel)


def ssim(a: np.ndarray, b: np.ndarray, L: float = 1.0,
         window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Structural similarity with Gaussian windowing, averaged over window
    positions (and over channels for multi-channel rasters)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"ssim operands disagree: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], L, window, sigma)
                              for c in range(a.shape[2])]))
    if a.ndim != 2:
        raise ShapeMismatchError(f"ssim expects 2-D or 3-D rasters, got {a.shape}")
    if min(a.shape) < window:
        raise ShapeMismatchError(f"raster {a.shape} smaller than the {window}px window")

    kernel = _gaussian_window(window, sigma)
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2
    mu_a = _window_means(a, kernel)
    mu_b = _window_means(b, kernel)
    var_a = _window_means(a * a, kernel) - mu_a * mu_a
    var_b = _window_means(b * b, kernel) - mu_b * mu_b
    cov = _window_means(a * b, kernel) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def fid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    The trace term uses tr((Sa Sb)^1/2) computed from the eigendecomposition
    of the symmetrized product sqrt(Sa) Sb sqrt(Sa); negative eigenvalues
    (numerical noise) are clipped at zero, so the result is always >= 0 up
    to float error.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatchError(f"feature sets disagree: {a.shape} vs {b.shape}")
    if len(a) < 2 or len(b) < 2:
        raise InsufficientSamplesError("fid needs at least 2 samples per set")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False, ddof=1)
    cov_b = np.cov(b, rowvar=False, ddof=1)
    cov_a = np.atleast_2d(cov_a)
    cov_b = np.atleast_2d(cov_b)

    # sqrt(Sa) via eigendecomposition (Sa symmetric PSD up to noise).
    w, v = np.linalg.eigh(cov_a)
    sqrt_a = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    inner = sqrt_a @ cov_b @ sqrt_a
    w_inner = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = np.sqrt(np.clip(w_inner, 0.0, None)).sum()

    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)


def _poly_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x.shape[1]
    return (x @ y.T / d + 1.0) ** 3


def kid(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Unbiased MMD^2 with the cubic polynomial kernel; within-set sums
    exclude the diagonal."""
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatchError(f"feature sets disagree: {a.shape} vs {b.shape}")
    m, n = len(a), len(b)
    if m < 2 or n < 2:
        raise InsufficientSamplesError("kid needs at least 2 samples per set")
    k_aa = _poly_kernel(a, a)
    k_bb = _poly_kernel(b, b)
    k_ab = _poly_kernel(a, b)
    sum_aa = (k_aa.sum() - np.trace(k_aa)) / (m * (m - 1))
    sum_bb = (k_bb.sum() - np.trace(k_bb)) / (n * (n - 1))
    return float(sum_aa + sum_bb - 2.0 * k_ab.mean())


@dataclass
class PatchProtocol:
    patch: int = 64
    stride: int = 32  # overlapping windows
    min_clean_fraction: float = 1.0  # 1.0: any mask overlap excludes a patch

    def __post_init__(self):
        if not 0.0 <= self.min_clean_fraction <= 1.0:
            raise ValueError("min_clean_fraction must be in [0, 1]")

    def to_json(self) -> dict:
        return {"patch": self.patch, "stride": self.stride,
                "min_clean_fraction": self.min_clean_fraction}


@dataclass
class MetricReport:
    fid: float
    kid: float
    ssim: float
    n_patches: int
    protocol: dict = field(default_factory=dict)
    empty: bool = False

    def to_json(self) -> dict:
        return {"fid": self.fid, "kid": self.kid, "ssim": self.ssim,
                "n_patches": self.n_patches, "protocol": self.protocol,
                "empty": self.empty}


Embedder = Callable[[np.ndarray], np.ndarray]  # (N, p, p, 3) -> (N, d)


def qualifying_patch_origins(mask: np.ndarray, patch: int, stride: int,
                             min_clean_fraction: float) -> list[tuple[int, int]]:
    """Window origins whose mask-overlap fraction stays within the
    exclusion budget (overlap <= 1 - min_clean_fraction)."""
    h, w = mask.shape
    budget = 1.0 - min_clean_fraction
    origins = []
    mask_f = mask.astype(np.float64)
    for y in range(0, h - patch + 1, stride):
        for x in range(0, w - patch + 1, stride):
            overlap = mask_f[y: y + patch, x: x + patch].mean()
            if overlap <= budget + 1e-12:
                origins.append((y, x))
    return origins


def evaluate_pairs(pristine: ImageTile, generated: ImageTile, mask: ManipulationMask,
                   protocol: PatchProtocol, embedder: Embedder) -> MetricReport:
    """Patch-wise FID/KID/SSIM between one pristine/generated pair,
    excluding windows that touch the manipulated region."""
    if pristine.shape != generated.shape or pristine.shape != mask.mask.shape:
        raise ShapeMismatchError(
            f"pristine {pristine.shape}, generated {generated.shape}, "
            f"mask {mask.mask.shape} must agree")
    origins = qualifying_patch_origins(mask.mask, protocol.patch, protocol.stride,
                                       protocol.min_clean_fraction)
    if not origins:
        return MetricReport(fid=float("nan"), kid=float("nan"), ssim=float("nan"),
                            n_patches=0, protocol=protocol.to_json(), empty=True)
    p = protocol.patch
    patches_a = np.stack([pristine.pixels[y: y + p, x: x + p] for y, x in origins])
    patches_b = np.stack([generated.pixels[y: y + p, x: x + p] for y, x in origins])
    ssim_vals = [ssim(pa, pb) for pa, pb in zip(patches_a, patches_b)]
    if len(origins) < 2:
        # SSIM is defined per pair; the distribution distances need n >= 2.
        return MetricReport(fid=float("nan"), kid=float("nan"),
                            ssim=float(np.mean(ssim_vals)),
                            n_patches=len(origins), protocol=protocol.to_json())
    fa = embedder(patches_a)
    fb = embedder(patches_b)
    return MetricReport(fid=fid(fa, fb), kid=kid(fa, fb), ssim=float(np.mean(ssim_vals)),
                        n_patches=len(origins), protocol=protocol.to_json())


def evaluate_many(pairs: list[tuple[ImageTile, ImageTile, ManipulationMask]],
                  protocol: PatchProtocol, embedder: Embedder) -> MetricReport:
    """Pooled protocol over several pairs: SSIM averages over all surviving
    windows, FID/KID pool the embedded patch sets."""
    all_a, all_b, ssim_vals = [], [], []
    for pristine, generated, mask in pairs:
        origins = qualifying_patch_origins(mask.mask, protocol.patch, protocol.stride,
                                           protocol.min_clean_fraction)
        p = protocol.patch
        for y, x in origins:
            all_a.append(pristine.pixels[y: y + p, x: x + p])
            all_b.append(generated.pixels[y: y + p, x: x + p])
            ssim_vals.append(ssim(all_a[-1], all_b[-1]))
    if not all_a:
        return MetricReport(fid=float("nan"), kid=float("nan"), ssim=float("nan"),
                            n_patches=0, protocol=protocol.to_json(), empty=True)
    if len(all_a) < 2:
        return MetricReport(fid=float("nan"), kid=float("nan"),
                            ssim=float(np.mean(ssim_vals)),
                            n_patches=len(all_a), protocol=protocol.to_json())
    fa = embedder(np.stack(all_a))
    fb = embedder(np.stack(all_b))
    return MetricReport(fid=fid(fa, fb), kid=kid(fa, fb), ssim=float(np.mean(ssim_vals)),
                        n_patches=len(all_a), protocol=protocol.to_json())


class RandomConvEmbedder:
    """Fixed-seed random convolutional feature extractor.

    Stands in for the pretrained pooled-feature embedder in tests and toy
    runs so the metric pipeline needs no model download. Two convolution +
    ReLU + average-pool stages followed by a random projection.
    """

    def __init__(self, dim: int = 64, seed: int = 0, patch: int = 64):
        rng = np.random.default_rng(seed)
        self.dim = dim
        self.k1 = rng.standard_normal((8, 3, 3, 3)) / 9.0
        self.k2 = rng.standard_normal((16, 8, 3, 3)) / 9.0
        pooled = 16 * 4 * 4
        self.proj = rng.standard_normal((pooled, dim)) / np.sqrt(pooled)
        self.patch = patch

    def _conv(self, x: np.ndarray, k: np.ndarray) -> np.ndarray:
        # x: (N, C, H, W), k: (O, C, kh, kw); stride-1 valid correlation.
        out = np.empty((x.shape[0], k.shape[0], x.shape[2] - 2, x.shape[3] - 2))
        for o in range(k.shape[0]):
            acc = None
            for c in range(k.shape[1]):
                r = fftconvolve(x[:, c], k[o, c][::-1, ::-1][None], mode="valid", axes=(1, 2))
                acc = r if acc is None else acc + r
            out[:, o] = acc
        return np.maximum(out, 0.0)

    @staticmethod
    def _pool(x: np.ndarray, s: int) -> np.ndarray:
        n, c, h, w = x.shape
        h2, w2 = h // s, w // s
        return x[:, :, : h2 * s, : w2 * s].reshape(n, c, h2, s, w2, s).mean(axis=(3, 5))

    def __call__(self, patches: np.ndarray) -> np.ndarray:
        x = np.asarray(patches, dtype=np.float64).transpose(0, 3, 1, 2)
        x = self._pool(self._conv(x, self.k1), 4)
        x = self._pool(self._conv(x, self.k2), 3)
        # Final grid to 4x4 regardless of leftover size.
        n, c, h, w = x.shape
        ys = np.linspace(0, h, 5).astype(int)
        xs = np.linspace(0, w, 5).astype(int)
        cells = np.empty((n, c, 4, 4))
        for i in range(4):
            for j in range(4):
                cells[:, :, i, j] = x[:, :, ys[i]:max(ys[i + 1], ys[i] + 1),
                                      xs[j]:max(xs[j + 1], xs[j] + 1)].mean(axis=(2, 3))
        return cells.reshape(n, -1) @ self.proj


class InceptionEmbedder:
    """Standard 2048-d Inception-v3 pooled features (full profile).

    Requires torchvision's pretrained weights; constructed lazily so the
    test profile never triggers a download.
    """

    def __init__(self, device: str = "cpu"):
        import torch
        from torchvision.models import Inception_V3_Weights, inception_v3

        self.torch = torch
        self.model = inception_v3(weights=Inception_V3_Weights.DEFAULT)
        self.model.fc = torch.nn.Identity()
        self.model.eval().to(device)
        self.device = device

    def __call__(self, patches: np.ndarray) -> np.ndarray:
        torch = self.torch
        x = torch.from_numpy(np.asarray(patches, dtype=np.float32)).permute(0, 3, 1, 2)
        x = torch.nn.functional.interpolate(x, size=(299, 299), mode="bilinear",
                                            align_corners=False)
        mean = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
        std = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)
        x = (x - mean) / std
        with torch.no_grad():
            feats = self.model(x.to(self.device))
        return feats.cpu().numpy().astype(np.float64)


def get_embedder(name: str, seed: int = 0) -> Embedder:
    if name == "test":
        return RandomConvEmbedder(seed=seed)
    if name == "inception":
        return InceptionEmbedder()
    raise ValueError(f"unknown embedder {name!r}")
