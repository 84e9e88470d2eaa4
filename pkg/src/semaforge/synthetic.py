"""Deterministic synthetic map/image pairs for tests and toy training.

The image of a pair is a pure function of its semantic map (per-class base
color, smooth illumination, mild class-dependent texture), which makes the
map-to-image correspondence easy for a small generator to memorize.
"""

from __future__ import annotations

import numpy as np

from .raster import DEFAULT_PALETTE, ImageTile, Palette, SemanticMap

# Satellite-ish render color per default palette class, unit range.
_CLASS_SHADES = np.array(
    [
        [0.45, 0.42, 0.38],  # background: bare ground
        [0.55, 0.55, 0.55],  # road: asphalt
        [0.60, 0.45, 0.40],  # building: roofing
        [0.15, 0.25, 0.45],  # water
        [0.20, 0.40, 0.20],  # vegetation
    ],
    dtype=np.float32,
)


def render_map_indices(size: int, seed: int, palette: Palette = DEFAULT_PALETTE) -> np.ndarray:
    """Draw a random urban-looking layout of roads, blocks and water."""
    rng = np.random.default_rng(seed)
    idx = np.zeros((size, size), dtype=np.uint8)
    background = 0
    road = min(1, len(palette) - 1)
    building = min(2, len(palette) - 1)
    water = min(3, len(palette) - 1)
    vegetation = min(4, len(palette) - 1)
    idx[:] = background

    # Vegetation patches first so everything else draws over them.
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.integers(0, size, 2)
        r = int(rng.integers(size // 8, size // 3))
        yy, xx = np.ogrid[:size, :size]
        idx[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = vegetation

    # One water body in roughly half of the tiles.
    if rng.random() < 0.5:
        cy, cx = rng.integers(0, size, 2)
        ry, rx = rng.integers(size // 6, size // 3, 2)
        yy, xx = np.ogrid[:size, :size]
        idx[((yy - cy) / max(ry, 1)) ** 2 + ((xx - cx) / max(rx, 1)) ** 2 <= 1.0] = water

    # Road grid.
    road_w = max(1, size // 32)
    for _ in range(rng.integers(2, 5)):
        y = int(rng.integers(0, size))
        idx[max(0, y - road_w): y + road_w, :] = road
    for _ in range(rng.integers(2, 5)):
        x = int(rng.integers(0, size))
        idx[:, max(0, x - road_w): x + road_w] = road

    # Buildings between the roads.
    for _ in range(rng.integers(4, 10)):
        h = int(rng.integers(size // 16, size // 5))
        w = int(rng.integers(size // 16, size // 5))
        y = int(rng.integers(0, max(1, size - h)))
        x = int(rng.integers(0, max(1, size - w)))
        block = idx[y: y + h, x: x + w]
        block[block != road] = building

    return idx


def shade_image_from_map(indices: np.ndarray, palette: Palette = DEFAULT_PALETTE,
                         seed: int = 0) -> np.ndarray:
    """Render a unit-range RGB image deterministically from class indices."""
    h, w = indices.shape
    rng = np.random.default_rng(seed)
    base = _CLASS_SHADES[np.minimum(indices, len(_CLASS_SHADES) - 1)]

    # Smooth illumination gradient plus a fixed low-amplitude texture field.
    yy, xx = np.mgrid[0.0:1.0:complex(h), 0.0:1.0:complex(w)]
    illum = 0.85 + 0.3 * (0.5 * yy + 0.5 * xx)
    texture = 0.03 * np.sin(2 * np.pi * (xx * rng.integers(3, 7) + yy * rng.integers(3, 7)))
    img = base * illum[..., None] + texture[..., None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_synthetic_pair(size: int, seed: int, palette: Palette = DEFAULT_PALETTE):
    """One (SemanticMap, ImageTile) pair; the image is a function of the map."""
    indices = render_map_indices(size, seed, palette)
    image = shade_image_from_map(indices, palette, seed ^ 0x5EED)
    return SemanticMap(indices, palette), ImageTile(image)


def make_separable_detector_task(n_images: int, size: int, seed: int):
    """Toy pristine/generated image sets for detector experiments.

    Pristine images are smooth low-frequency gradients. Generated images
    carry checkerboard noise plus a mid-frequency plaid: the checkerboard
    makes the clean task near-trivially separable, heavy blurring erases
    it, and the plaid leaves a fainter cue that survives moderate blur
    (which is what a barrage-trained detector can exploit).
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0.0:1.0:complex(size), 0.0:1.0:complex(size)]
    pristine, generated = [], []
    for _ in range(n_images):
        a, b, c = rng.uniform(-0.4, 0.4, 3)
        base = 0.5 + a * yy + b * xx + c * np.sin(2 * np.pi * (yy + xx))
        rgbs = np.stack([base + rng.uniform(-0.05, 0.05) for _ in range(3)], axis=-1)
        pristine.append(ImageTile(np.clip(rgbs, 0.0, 1.0).astype(np.float32)))
    checker = ((np.indices((size, size)).sum(axis=0) % 2) * 2.0 - 1.0)
    plaid = np.sin(2 * np.pi * yy * size / 20.0) * np.sin(2 * np.pi * xx * size / 20.0)
    for _ in range(n_images):
        a, b = rng.uniform(-0.4, 0.4, 2)
        base = 0.5 + a * yy + b * xx
        tex = 0.1 * checker + 0.08 * plaid + 0.04 * rng.standard_normal((size, size))
        rgbs = np.stack([base + tex for _ in range(3)], axis=-1)
        generated.append(ImageTile(np.clip(rgbs, 0.0, 1.0).astype(np.float32)))
    return pristine, generated
