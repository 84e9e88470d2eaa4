"""Local HTTP service exposing generate / forge / detect to the editor UI.

Transport is JSON with base64 PNG payloads capped at 16 MB. Responses are
pure functions of (request body, loaded checkpoints): models are loaded
once, kept in eval mode, and inference per checkpoint is serialized behind
a lock so concurrent requests queue.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .data import PairedSample
from .errors import SemaforgeError, ShapeMismatchError
from .forensics import heatmap as run_heatmap
from .forensics.detector import DetectorModel, load_detector
from .gan.model import TranslatorModel, load_checkpoint
from .manipulation import DEFAULT_DILATION, DEFAULT_FEATHER, forge
from .raster import ImageTile, Palette, SemanticMap

log = logging.getLogger(__name__)

MAX_PAYLOAD_BYTES = 16 * 1024 * 1024
DEFAULT_PORT = 8787


class GenerateRequest(BaseModel):
    map_png: str
    checkpoint: str


class ForgeRequest(BaseModel):
    map_png: str
    tampered_png: str
    image_png: str
    checkpoint: str
    dilation: int = DEFAULT_DILATION
    feather: int = DEFAULT_FEATHER


class DetectRequest(BaseModel):
    image_png: str
    checkpoint: str
    stride: int = 1


def _b64_to_png_bytes(field: str, payload: str) -> bytes:
    try:
        return base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ApiError(400, "bad-base64", f"{field}: {exc}") from exc


def _decode_tile(field: str, payload: str) -> ImageTile:
    try:
        return ImageTile.from_png_bytes(_b64_to_png_bytes(field, payload))
    except ApiError:
        raise
    except Exception as exc:
        raise ApiError(400, "bad-image", f"{field}: not a decodable PNG") from exc


def _decode_map(field: str, payload: str, palette: Palette) -> SemanticMap:
    tile = _decode_tile(field, payload)
    try:
        return SemanticMap.from_rgb(tile.to_uint8(), palette, strict=True)
    except ShapeMismatchError as exc:
        raise ApiError(400, "bad-palette", f"{field}: {exc}") from exc


def _png_b64(tile: ImageTile) -> str:
    return base64.b64encode(tile.png_bytes()).decode("ascii")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class CheckpointStore:
    """Loads checkpoints lazily; one inference lock per checkpoint."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self._models: dict[str, TranslatorModel | DetectorModel] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._load_lock = threading.Lock()

    def list(self) -> list[dict]:
        entries = []
        if not self.root.is_dir():
            return entries
        for spec_path in sorted(self.root.glob("*/spec.json")):
            try:
                spec = json.loads(spec_path.read_text())
            except (OSError, json.JSONDecodeError):
                continue
            entry = {"id": spec_path.parent.name,
                     "type": spec.get("type", "translator")}
            for key in ("arch", "profile", "palette", "training_mode", "patch_size"):
                if key in spec:
                    entry[key] = spec[key]
            entries.append(entry)
        return entries

    def _load(self, ckpt_id: str):
        ckpt_dir = self.root / ckpt_id
        if not (ckpt_dir / "spec.json").is_file():
            raise ApiError(404, "unknown-checkpoint", f"no checkpoint {ckpt_id!r}")
        spec = json.loads((ckpt_dir / "spec.json").read_text())
        if spec.get("type") == "detector":
            return load_detector(ckpt_dir)
        model = load_checkpoint(ckpt_dir)
        model.eval_mode()
        return model

    def get(self, ckpt_id: str):
        with self._load_lock:
            if ckpt_id not in self._models:
                self._models[ckpt_id] = self._load(ckpt_id)
                self._locks[ckpt_id] = threading.Lock()
            return self._models[ckpt_id], self._locks[ckpt_id]

    def translator(self, ckpt_id: str) -> tuple[TranslatorModel, threading.Lock]:
        model, lock = self.get(ckpt_id)
        if not isinstance(model, TranslatorModel):
            raise ApiError(400, "wrong-checkpoint-type",
                           f"{ckpt_id!r} is not a translator checkpoint")
        return model, lock

    def detector(self, ckpt_id: str) -> tuple[DetectorModel, threading.Lock]:
        model, lock = self.get(ckpt_id)
        if not isinstance(model, DetectorModel):
            raise ApiError(400, "wrong-checkpoint-type",
                           f"{ckpt_id!r} is not a detector checkpoint")
        return model, lock


class SampleStore:
    def __init__(self, root: Path | None):
        self.root = Path(root) if root else None

    def _manifest(self) -> dict | None:
        if self.root is None or not (self.root / "manifest.json").is_file():
            return None
        return json.loads((self.root / "manifest.json").read_text())

    def list(self) -> list[dict]:
        manifest = self._manifest()
        if manifest is None:
            return []
        palette = manifest["palette"]
        return sorted(
            ({"id": s["id"], "split": s["split"], "palette": palette}
             for s in manifest["samples"]),
            key=lambda s: s["id"])

    def get(self, sample_id: str) -> dict:
        manifest = self._manifest()
        if manifest is None:
            raise ApiError(404, "unknown-sample", "no dataset configured")
        for s in manifest["samples"]:
            if s["id"] == sample_id:
                split = s["split"]
                map_png = (self.root / split / "maps" / f"{sample_id}.png").read_bytes()
                img_png = (self.root / split / "images" / f"{sample_id}.png").read_bytes()
                return {
                    "id": sample_id,
                    "split": split,
                    "palette": manifest["palette"],
                    "map_png": base64.b64encode(map_png).decode("ascii"),
                    "image_png": base64.b64encode(img_png).decode("ascii"),
                }
        raise ApiError(404, "unknown-sample", f"no sample {sample_id!r}")


def create_app(checkpoint_root: Path | str, data_root: Path | str | None = None,
               ui_dir: Path | str | None = None) -> FastAPI:
    app = FastAPI(title="semaforge service", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    checkpoints = CheckpointStore(Path(checkpoint_root))
    samples = SampleStore(Path(data_root) if data_root else None)

    @app.exception_handler(ApiError)
    async def _api_error(_req, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"error": {"code": exc.code, "message": exc.message}})

    @app.exception_handler(SemaforgeError)
    async def _domain_error(_req, exc: SemaforgeError):
        return JSONResponse(status_code=400,
                            content={"error": {"code": type(exc).__name__,
                                               "message": str(exc)}})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"error": {"code": "bad-request",
                                               "message": str(exc.errors())}})

    @app.middleware("http")
    async def _payload_cap(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and int(length) > MAX_PAYLOAD_BYTES:
            return JSONResponse(status_code=413,
                                content={"error": {"code": "payload-too-large",
                                                   "message": f"payloads are capped at {MAX_PAYLOAD_BYTES} bytes"}})
        return await call_next(request)

    @app.post("/api/generate")
    def api_generate(req: GenerateRequest):
        from .training import generate

        model, lock = checkpoints.translator(req.checkpoint)
        smap = _decode_map("map_png", req.map_png, model.palette)
        with lock:
            tile = generate(model, smap)
        return {"image_png": _png_b64(tile)}

    @app.post("/api/forge")
    def api_forge(req: ForgeRequest):
        model, lock = checkpoints.translator(req.checkpoint)
        original = _decode_map("map_png", req.map_png, model.palette)
        tampered = _decode_map("tampered_png", req.tampered_png, model.palette)
        pristine = _decode_tile("image_png", req.image_png)
        sample = PairedSample(map=original, image=pristine, source_id="api")
        with lock:
            record = forge(model, sample, tampered, dilation=req.dilation,
                           feather=req.feather, deterministic=True,
                           checkpoint_id=req.checkpoint)
        return {
            "blended_png": _png_b64(record.blended),
            "mask_png": _png_b64(record.mask.to_image()),
            "generated_png": _png_b64(record.generated),
            "provenance": record.provenance,
        }

    @app.post("/api/detect")
    def api_detect(req: DetectRequest):
        model, lock = checkpoints.detector(req.checkpoint)
        image = _decode_tile("image_png", req.image_png)
        h, w = image.shape
        if req.stride < 1 or req.stride > max(h, w):
            raise ApiError(400, "bad-stride", f"stride {req.stride} outside image extent")
        if h < model.patch_size or w < model.patch_size:
            raise ApiError(400, "undersized-image",
                           f"image {h}x{w} smaller than patch size {model.patch_size}")
        with lock:
            hm = run_heatmap(model, image, stride=req.stride)
        scores32 = hm.scores.astype(np.float32)
        render = ImageTile(hm.to_png_array().astype(np.float32) / 255.0)
        return {
            "shape": list(scores32.shape),
            "scores_b64": base64.b64encode(scores32.tobytes()).decode("ascii"),
            "coverage_b64": base64.b64encode(hm.coverage.astype(np.int32).tobytes()).decode("ascii"),
            "heatmap_png": _png_b64(render),
        }

    @app.get("/api/samples")
    def api_samples():
        return samples.list()

    @app.get("/api/samples/{sample_id}")
    def api_sample(sample_id: str):
        return samples.get(sample_id)

    @app.get("/api/checkpoints")
    def api_checkpoints():
        return checkpoints.list()

    @app.get("/api/schema")
    def api_schema():
        return app.openapi()

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(checkpoint_root: Path | str, data_root: Path | str | None = None,
          ui_dir: Path | str | None = None, port: int = DEFAULT_PORT,
          host: str = "127.0.0.1") -> None:
    import uvicorn

    app = create_app(checkpoint_root, data_root, ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
