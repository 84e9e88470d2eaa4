"""Map-tile clients: an HTTP implementation and a deterministic stub.

A client returns PNG bytes for ``get_tile(lat, lon, zoom, style)`` where
style is ``"roadmap"`` or ``"satellite"``. The HTTP client reads its API key
from the ``MAPS_API_KEY`` environment variable; the synthetic client derives
a plausible-looking tile deterministically from the request, so pipelines
can run (and be tested) without network access.
"""

from __future__ import annotations

import hashlib
import io
import logging
import os
from typing import Protocol

import numpy as np
import requests
from PIL import Image

from .errors import ConfigError
from .raster import DEFAULT_PALETTE, Palette, SemanticMap
from .synthetic import render_map_indices, shade_image_from_map

log = logging.getLogger(__name__)

STYLES = ("roadmap", "satellite")


class TileClient(Protocol):
    def get_tile(self, lat: float, lon: float, zoom: int, style: str) -> bytes:
        """Return PNG bytes for the requested tile."""
        ...


class HttpTileClient:
    """Static-map HTTP client; key comes from the MAPS_API_KEY env var."""

    def __init__(self, base_url: str = "https://maps.googleapis.com/maps/api/staticmap",
                 size: int = 512, api_key: str | None = None, timeout: float = 10.0):
        self.base_url = base_url
        self.size = size
        self.timeout = timeout
        self.api_key = api_key or os.environ.get("MAPS_API_KEY", "")
        if not self.api_key:
            raise ConfigError("HttpTileClient needs an API key (MAPS_API_KEY)")

    def get_tile(self, lat: float, lon: float, zoom: int, style: str) -> bytes:
        if style not in STYLES:
            raise ConfigError(f"unknown tile style {style!r}")
        params = {
            "center": f"{lat:.6f},{lon:.6f}",
            "zoom": str(zoom),
            "size": f"{self.size}x{self.size}",
            "maptype": style,
            "format": "png",
            "key": self.api_key,
        }
        resp = requests.get(self.base_url, params=params, timeout=self.timeout)
        resp.raise_for_status()
        return resp.content


class SyntheticTileClient:
    """Deterministic stand-in for the HTTP client.

    The same (lat, lon, zoom, style) always yields the same PNG, and the
    roadmap/satellite styles of one coordinate are a consistent pair: the
    satellite tile is rendered from the same underlying semantic layout as
    the roadmap tile.
    """

    def __init__(self, size: int = 128, palette: Palette = DEFAULT_PALETTE,
                 fail_coords: frozenset[tuple[float, float]] = frozenset()):
        self.size = size
        self.palette = palette
        self.fail_coords = fail_coords  # coordinates that simulate network errors

    def _seed(self, lat: float, lon: float, zoom: int) -> int:
        key = f"{lat:.6f}|{lon:.6f}|{zoom}".encode()
        return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")

    def get_tile(self, lat: float, lon: float, zoom: int, style: str) -> bytes:
        if style not in STYLES:
            raise ConfigError(f"unknown tile style {style!r}")
        if (round(lat, 6), round(lon, 6)) in self.fail_coords:
            raise requests.ConnectionError(f"synthetic outage at ({lat}, {lon})")
        indices = render_map_indices(self.size, self._seed(lat, lon, zoom), self.palette)
        if style == "roadmap":
            rgb = SemanticMap(indices, self.palette).to_rgb()
        else:
            unit = shade_image_from_map(indices, self.palette, self._seed(lat, lon, zoom) ^ 0xA5A5)
            rgb = np.clip(np.round(unit * 255.0), 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(rgb).save(buf, format="PNG")
        return buf.getvalue()
