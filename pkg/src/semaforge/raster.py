"""Core raster types: class-indexed semantic maps and unit-range image tiles.

Every image in the toolkit is one of two things: a ``SemanticMap`` whose
pixels are palette class indices, or an ``ImageTile`` whose pixels are RGB
floats in [0, 1]. PNG round-trips quantize exactly once (to 8 bits), so a
tile loaded from disk and saved again is byte-identical.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ShapeMismatchError


@dataclass(frozen=True)
class Palette:
    """Ordered class names and their exact 8-bit RGB colors."""

    names: tuple[str, ...]
    colors: np.ndarray  # (K, 3) uint8

    def __post_init__(self):
        colors = np.asarray(self.colors, dtype=np.uint8)
        if colors.shape != (len(self.names), 3):
            raise ShapeMismatchError(
                f"palette needs one RGB color per class, got {colors.shape} "
                f"for {len(self.names)} names"
            )
        object.__setattr__(self, "colors", colors)

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        return self.names.index(name)

    def to_json(self) -> dict:
        return {
            "names": list(self.names),
            "colors": self.colors.tolist(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Palette":
        return cls(tuple(payload["names"]), np.asarray(payload["colors"], dtype=np.uint8))


# Road-map style palette used by the synthetic data generators and the toy
# profiles. Colors are loosely modeled on web-map tiles but any palette works.
DEFAULT_PALETTE = Palette(
    names=("background", "road", "building", "water", "vegetation"),
    colors=np.array(
        [
            [232, 229, 223],
            [255, 255, 255],
            [201, 189, 178],
            [160, 204, 240],
            [188, 221, 184],
        ],
        dtype=np.uint8,
    ),
)


@dataclass
class SemanticMap:
    """Class-indexed raster plus the palette that gives indices meaning."""

    indices: np.ndarray  # (H, W) uint8 class indices
    palette: Palette = field(default_factory=lambda: DEFAULT_PALETTE)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.uint8)
        if self.indices.ndim != 2:
            raise ShapeMismatchError(f"semantic map must be 2-D, got {self.indices.shape}")
        if self.indices.size and int(self.indices.max()) >= len(self.palette):
            raise ShapeMismatchError(
                f"class index {int(self.indices.max())} outside palette of size {len(self.palette)}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.indices.shape  # type: ignore[return-value]

    def to_rgb(self) -> np.ndarray:
        """Render to an exact-palette (H, W, 3) uint8 image."""
        return self.palette.colors[self.indices]

    def to_unit_rgb(self) -> np.ndarray:
        """Palette rendering in unit float range, for feeding RGB models."""
        return self.to_rgb().astype(np.float32) / 255.0

    @classmethod
    def from_rgb(cls, rgb: np.ndarray, palette: Palette = DEFAULT_PALETTE,
                 strict: bool = True) -> "SemanticMap":
        """Recover class indices from a palette-colored RGB image.

        With ``strict`` every pixel must be an exact palette color; otherwise
        each pixel snaps to the nearest palette color (used when ingesting
        third-party map tiles that are not palette-exact).
        """
        rgb = np.asarray(rgb, dtype=np.uint8)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ShapeMismatchError(f"expected (H, W, 3) RGB, got {rgb.shape}")
        flat = rgb.reshape(-1, 3).astype(np.int32)
        colors = palette.colors.astype(np.int32)
        d2 = ((flat[:, None, :] - colors[None, :, :]) ** 2).sum(axis=2)
        idx = d2.argmin(axis=1)
        if strict and d2[np.arange(len(flat)), idx].max(initial=0) > 0:
            bad = int((d2[np.arange(len(flat)), idx] > 0).sum())
            raise ShapeMismatchError(f"{bad} pixels are not exact palette colors")
        return cls(idx.astype(np.uint8).reshape(rgb.shape[:2]), palette)

    def save_png(self, path) -> None:
        Image.fromarray(self.to_rgb()).save(path, format="PNG")

    @classmethod
    def load_png(cls, path, palette: Palette = DEFAULT_PALETTE,
                 strict: bool = True) -> "SemanticMap":
        rgb = np.asarray(Image.open(path).convert("RGB"))
        return cls.from_rgb(rgb, palette, strict=strict)


@dataclass
class ImageTile:
    """RGB raster in unit-normalized pixel space."""

    pixels: np.ndarray  # (H, W, 3) float32 in [0, 1]

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ShapeMismatchError(f"image tile must be (H, W, 3), got {self.pixels.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]  # type: ignore[return-value]

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.round(self.pixels * 255.0), 0, 255).astype(np.uint8)

    @classmethod
    def from_uint8(cls, arr: np.ndarray) -> "ImageTile":
        arr = np.asarray(arr, dtype=np.uint8)
        return cls(arr.astype(np.float32) / 255.0)

    def save_png(self, path) -> None:
        Image.fromarray(self.to_uint8()).save(path, format="PNG")

    @classmethod
    def load_png(cls, path) -> "ImageTile":
        return cls.from_uint8(np.asarray(Image.open(path).convert("RGB")))

    def png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.to_uint8()).save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "ImageTile":
        return cls.from_uint8(np.asarray(Image.open(io.BytesIO(data)).convert("RGB")))


def require_same_shape(*rasters: np.ndarray) -> None:
    """Raise ShapeMismatchError unless all rasters share height/width."""
    shapes = {tuple(np.asarray(r).shape[:2]) for r in rasters}
    if len(shapes) > 1:
        raise ShapeMismatchError(f"rasters disagree in shape: {sorted(shapes)}")
