"""Paired map/image ingestion, curation, tiling and patch dataset assembly."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDatasetError, ShapeMismatchError
from .mapsclient import TileClient
from .raster import DEFAULT_PALETTE, ImageTile, Palette, SemanticMap, require_same_shape

log = logging.getLogger(__name__)

PRISTINE, GENERATED = 0, 1
LABEL_NAMES = {PRISTINE: "pristine", GENERATED: "generated"}

MILES_PER_DEG_LAT = 69.0


@dataclass
class PairedSample:
    """One aligned semantic map / image pair."""

    map: SemanticMap
    image: ImageTile
    source_id: str
    geo: tuple[float, float] | None = None  # (lat, lon) degrees

    def __post_init__(self):
        require_same_shape(self.map.indices, self.image.pixels)


@dataclass
class CurationReport:
    kept: int
    rejected: list[tuple[str, str]]  # (source_id, reason)

    REASONS = ("near-duplicate", "non-urban", "stitch-artifact")

    def to_json(self) -> dict:
        return {"kept": self.kept, "rejected": [list(r) for r in self.rejected]}


@dataclass
class CurationRules:
    """Near-duplicate detection is automatic; the other two rules accept
    externally supplied id lists because they were manual judgements."""

    near_duplicate_threshold: float = 0.02  # mean abs pixel difference, unit scale
    non_urban_ids: frozenset[str] = frozenset()
    stitch_artifact_ids: frozenset[str] = frozenset()


@dataclass
class PatchDataset:
    """Square patches with pristine/generated labels and a train/val split."""

    patches: np.ndarray        # (N, patch, patch, 3) float32
    labels: np.ndarray         # (N,) int, 0 pristine / 1 generated
    is_val: np.ndarray         # (N,) bool
    source_index: np.ndarray   # (N,) int, which source image a patch came from
    patch_size: int
    stride: int

    def __len__(self) -> int:
        return len(self.patches)

    @property
    def n_train(self) -> int:
        return int((~self.is_val).sum())

    @property
    def n_val(self) -> int:
        return int(self.is_val.sum())

    def subset(self, mask: np.ndarray) -> "PatchDataset":
        return PatchDataset(self.patches[mask], self.labels[mask], self.is_val[mask],
                            self.source_index[mask], self.patch_size, self.stride)


def tile_raster(arr: np.ndarray, tile: int, stride: int) -> np.ndarray:
    """Slide a square window over (H, W, ...) and stack the crops row-major.

    Returns an array of shape (n_tiles, tile, tile, ...). Each crop is an
    independent copy of its source region.
    """
    arr = np.asarray(arr)
    h, w = arr.shape[:2]
    if tile > min(h, w):
        raise ShapeMismatchError(f"tile {tile} larger than raster {h}x{w}")
    if stride < 1:
        raise ShapeMismatchError(f"stride must be >= 1, got {stride}")
    ys = range(0, h - tile + 1, stride)
    xs = range(0, w - tile + 1, stride)
    out = np.empty((len(ys) * len(xs), tile, tile) + arr.shape[2:], dtype=arr.dtype)
    k = 0
    for y in ys:
        for x in xs:
            out[k] = arr[y: y + tile, x: x + tile]
            k += 1
    return out


def tile_count(h: int, w: int, tile: int, stride: int) -> int:
    return ((h - tile) // stride + 1) * ((w - tile) // stride + 1)


def tile_image(raster: ImageTile, tile: int, stride: int) -> list[ImageTile]:
    """Cut an image into square tiles, row-major order."""
    return [ImageTile(t) for t in tile_raster(raster.pixels, tile, stride)]


def tile_map(raster: SemanticMap, tile: int, stride: int) -> list[SemanticMap]:
    return [SemanticMap(t, raster.palette) for t in tile_raster(raster.indices, tile, stride)]


def reassemble_tiles(tiles: list[np.ndarray], h: int, w: int) -> np.ndarray:
    """Inverse of non-overlapping tiling (stride == tile, exact cover)."""
    tile = tiles[0].shape[0]
    ny, nx = h // tile, w // tile
    if ny * nx != len(tiles):
        raise ShapeMismatchError(f"{len(tiles)} tiles cannot cover {h}x{w} at size {tile}")
    out = np.empty((h, w) + tiles[0].shape[2:], dtype=tiles[0].dtype)
    for k, t in enumerate(tiles):
        y, x = divmod(k, nx)
        out[y * tile: (y + 1) * tile, x * tile: (x + 1) * tile] = t
    return out


def build_patch_dataset(pristine: list[ImageTile], generated: list[ImageTile],
                        patch: int, val_fraction: float, seed: int,
                        stride: int | None = None) -> PatchDataset:
    """Cut labeled source images into patches with a leakage-free split.

    Split assignment is per source image: all patches of one image land in
    the same split. When the two lists have equal length, index i of each is
    treated as a pristine/generated pair coming from the same source and the
    pair moves between splits as a unit, which keeps the label balance of
    both splits at exactly 50/50.
    """
    if not pristine and not generated:
        raise EmptyDatasetError("no source images supplied")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    stride = patch if stride is None else stride

    sources: list[tuple[ImageTile, int]] = [(img, PRISTINE) for img in pristine]
    sources += [(img, GENERATED) for img in generated]
    shapes = {img.shape for img, _ in sources}
    if len(shapes) > 1:
        raise ShapeMismatchError(f"source images disagree in shape: {sorted(shapes)}")

    rng = np.random.default_rng(seed)
    paired = len(pristine) == len(generated) and len(pristine) > 0
    if paired:
        n_pairs = len(pristine)
        n_val = int(math.floor(val_fraction * n_pairs + 0.5))
        val_pairs = set(rng.permutation(n_pairs)[:n_val].tolist())
        img_is_val = [i in val_pairs for i in range(n_pairs)] * 2
    else:
        n_imgs = len(sources)
        n_val = int(math.floor(val_fraction * n_imgs + 0.5))
        val_imgs = set(rng.permutation(n_imgs)[:n_val].tolist())
        img_is_val = [i in val_imgs for i in range(n_imgs)]

    patches, labels, is_val, source_index = [], [], [], []
    for i, (img, label) in enumerate(sources):
        crops = tile_raster(img.pixels, patch, stride)
        patches.append(crops)
        labels.append(np.full(len(crops), label, dtype=np.int64))
        is_val.append(np.full(len(crops), img_is_val[i], dtype=bool))
        source_index.append(np.full(len(crops), i, dtype=np.int64))

    return PatchDataset(
        patches=np.concatenate(patches),
        labels=np.concatenate(labels),
        is_val=np.concatenate(is_val),
        source_index=np.concatenate(source_index),
        patch_size=patch,
        stride=stride,
    )


def _group_key(source_id: str) -> str:
    # Samples fetched per city carry ids like "<city>/<k>"; duplicates are
    # only searched within one city group. Ids without "/" share one group.
    return source_id.rsplit("/", 1)[0] if "/" in source_id else ""


def curate(samples: list[PairedSample],
           rules: CurationRules | None = None) -> tuple[list[PairedSample], CurationReport]:
    """Apply the three outlier rules and report every rejection."""
    rules = rules or CurationRules()
    rejected: list[tuple[str, str]] = []
    kept: list[PairedSample] = []

    groups: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(_group_key(s.source_id), []).append(i)

    dropped = set()
    for i, s in enumerate(samples):
        if s.source_id in rules.non_urban_ids:
            rejected.append((s.source_id, "non-urban"))
            dropped.add(i)
        elif s.source_id in rules.stitch_artifact_ids:
            rejected.append((s.source_id, "stitch-artifact"))
            dropped.add(i)

    # Pairwise mean-absolute-difference within a city; the later sample of a
    # too-similar pair is the rejected copy.
    for members in groups.values():
        alive = [i for i in members if i not in dropped]
        for a_pos, i in enumerate(alive):
            if i in dropped:
                continue
            for j in alive[a_pos + 1:]:
                if j in dropped:
                    continue
                mad = float(np.mean(np.abs(samples[i].image.pixels - samples[j].image.pixels)))
                if mad < rules.near_duplicate_threshold:
                    rejected.append((samples[j].source_id, "near-duplicate"))
                    dropped.add(j)

    for i, s in enumerate(samples):
        if i not in dropped:
            kept.append(s)
    report = CurationReport(kept=len(kept), rejected=rejected)
    assert report.kept + len(report.rejected) == len(samples)
    return kept, report


def jitter_coordinates(lat: float, lon: float, radius_miles: float,
                       count: int, rng: np.random.Generator) -> list[tuple[float, float]]:
    """Uniform samples in a disc around (lat, lon), equirectangular locally."""
    out = []
    for _ in range(count):
        r = radius_miles * math.sqrt(rng.random())
        theta = 2.0 * math.pi * rng.random()
        d_lat = (r * math.sin(theta)) / MILES_PER_DEG_LAT
        d_lon = (r * math.cos(theta)) / (MILES_PER_DEG_LAT * max(math.cos(math.radians(lat)), 1e-6))
        out.append((lat + d_lat, lon + d_lon))
    return out


def fetch_tiles(client: TileClient, cities: list[tuple[float, float]],
                perturbations: int, radius: float, seed: int,
                zoom: int = 17, palette: Palette = DEFAULT_PALETTE,
                retries: int = 3, backoff: float = 0.5,
                _sleep=time.sleep) -> list[PairedSample]:
    """Fetch roadmap/satellite pairs at jittered coordinates around each city.

    Failures are logged and skipped per coordinate after ``retries``
    attempts; they never abort the whole fetch.
    """
    rng = np.random.default_rng(seed)
    samples: list[PairedSample] = []
    for c, (lat, lon) in enumerate(cities):
        coords = jitter_coordinates(lat, lon, radius, perturbations, rng)
        for k, (jlat, jlon) in enumerate(coords):
            source_id = f"city{c}/{k}"
            try:
                road = _fetch_with_retry(client, jlat, jlon, zoom, "roadmap", retries, backoff, _sleep)
                sat = _fetch_with_retry(client, jlat, jlon, zoom, "satellite", retries, backoff, _sleep)
            except Exception as exc:  # client failures are per-coordinate, not fatal
                log.warning("skipping %s at (%.5f, %.5f): %s", source_id, jlat, jlon, exc)
                continue
            sem = SemanticMap.from_rgb(
                np.asarray(ImageTile.from_png_bytes(road).to_uint8()), palette, strict=False)
            samples.append(PairedSample(
                map=sem, image=ImageTile.from_png_bytes(sat),
                source_id=source_id, geo=(jlat, jlon)))
    return samples


def _fetch_with_retry(client, lat, lon, zoom, style, retries, backoff, _sleep):
    last = None
    for attempt in range(retries):
        try:
            return client.get_tile(lat, lon, zoom, style)
        except Exception as exc:
            last = exc
            if attempt + 1 < retries:
                _sleep(backoff * (2 ** attempt))
    raise last


# ---------------------------------------------------------------------------
# On-disk dataset layout: <root>/<split>/maps/<id>.png + images/<id>.png
# ---------------------------------------------------------------------------

def _safe_id(source_id: str) -> str:
    return source_id.replace("/", "_")


@dataclass
class DatasetManifest:
    palette: Palette
    samples: list[dict] = field(default_factory=list)
    curation: dict | None = None

    def to_json(self) -> dict:
        return {
            "palette": self.palette.to_json(),
            "samples": self.samples,
            "curation": self.curation,
        }


def save_dataset(root: Path | str, samples: list[PairedSample],
                 split_of: dict[str, str] | None = None,
                 curation: CurationReport | None = None) -> Path:
    """Write the PNG layout plus a manifest; returns the manifest path."""
    root = Path(root)
    manifest = DatasetManifest(palette=samples[0].map.palette if samples else DEFAULT_PALETTE)
    for s in samples:
        split = (split_of or {}).get(s.source_id, "train")
        sid = _safe_id(s.source_id)
        maps_dir = root / split / "maps"
        imgs_dir = root / split / "images"
        maps_dir.mkdir(parents=True, exist_ok=True)
        imgs_dir.mkdir(parents=True, exist_ok=True)
        s.map.save_png(maps_dir / f"{sid}.png")
        s.image.save_png(imgs_dir / f"{sid}.png")
        manifest.samples.append({
            "id": sid,
            "source_id": s.source_id,
            "split": split,
            "geo": list(s.geo) if s.geo else None,
        })
    if curation is not None:
        manifest.curation = curation.to_json()
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest.to_json(), indent=2, sort_keys=True))
    return path


def load_dataset(root: Path | str, split: str = "train") -> list[PairedSample]:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    palette = Palette.from_json(manifest["palette"])
    samples = []
    for entry in manifest["samples"]:
        if entry["split"] != split:
            continue
        sid = entry["id"]
        smap = SemanticMap.load_png(root / split / "maps" / f"{sid}.png", palette)
        image = ImageTile.load_png(root / split / "images" / f"{sid}.png")
        geo = tuple(entry["geo"]) if entry.get("geo") else None
        samples.append(PairedSample(map=smap, image=image, source_id=entry["source_id"], geo=geo))
    return samples
