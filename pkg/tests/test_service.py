import base64
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from semaforge.data import PairedSample, save_dataset
from semaforge.forensics import DetectorTrainConfig, heatmap, train_detector
from semaforge.forensics.detector import save_detector
from semaforge.gan.model import build_translator, save_checkpoint
from semaforge.manipulation import forge
from semaforge.raster import DEFAULT_PALETTE, ImageTile, SemanticMap
from semaforge.service import create_app
from semaforge.synthetic import make_separable_detector_task, make_synthetic_pair


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


@pytest.fixture(scope="module")
def service_env(tmp_path_factory):
    root = tmp_path_factory.mktemp("service")
    ckpts = root / "checkpoints"
    data_root = root / "data"

    model = build_translator("cyclegan", profile="toy", seed=0)
    save_checkpoint(model, ckpts / "toy-cyclegan")

    pristine, generated = make_separable_detector_task(4, 128, seed=1)
    from semaforge.data import build_patch_dataset

    patches = build_patch_dataset(pristine, generated, patch=64, val_fraction=0.25, seed=0)
    detector, _ = train_detector(patches, "plain", DetectorTrainConfig(epochs=1, seed=0))
    save_detector(detector, ckpts / "toy-detector")

    samples = []
    for i in range(2):
        smap, image = make_synthetic_pair(64, seed=10 + i)
        samples.append(PairedSample(map=smap, image=image, source_id=f"s/{i}"))
    save_dataset(data_root, samples)

    app = create_app(ckpts, data_root)
    client = TestClient(app, raise_server_exceptions=False)
    return {
        "client": client,
        "model": model,
        "detector": detector,
        "samples": samples,
        "ckpts": ckpts,
    }


def _sample_payload(sample):
    return {
        "map_png": b64(ImageTile(sample.map.to_unit_rgb()).png_bytes()),
        "image_png": b64(sample.image.png_bytes()),
    }


class TestGenerate:
    def test_generate_matches_library(self, service_env):
        from semaforge.training import generate

        sample = service_env["samples"][0]
        resp = service_env["client"].post("/api/generate", json={
            "map_png": b64(ImageTile(sample.map.to_unit_rgb()).png_bytes()),
            "checkpoint": "toy-cyclegan",
        })
        assert resp.status_code == 200
        got = ImageTile.from_png_bytes(base64.b64decode(resp.json()["image_png"]))
        want = generate(service_env["model"], sample.map)
        assert np.array_equal(got.to_uint8(), want.to_uint8())

    def test_idempotent(self, service_env):
        sample = service_env["samples"][0]
        body = {"map_png": b64(ImageTile(sample.map.to_unit_rgb()).png_bytes()),
                "checkpoint": "toy-cyclegan"}
        r1 = service_env["client"].post("/api/generate", json=body)
        r2 = service_env["client"].post("/api/generate", json=body)
        assert r1.content == r2.content

    def test_malformed_png_400(self, service_env):
        resp = service_env["client"].post("/api/generate", json={
            "map_png": b64(b"not a png"), "checkpoint": "toy-cyclegan"})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad-image"

    def test_bad_palette_400(self, service_env):
        weird = ImageTile(np.full((32, 32, 3), 0.123, dtype=np.float32))
        resp = service_env["client"].post("/api/generate", json={
            "map_png": b64(weird.png_bytes()), "checkpoint": "toy-cyclegan"})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad-palette"

    def test_unknown_checkpoint_404(self, service_env):
        sample = service_env["samples"][0]
        resp = service_env["client"].post("/api/generate", json={
            "map_png": b64(ImageTile(sample.map.to_unit_rgb()).png_bytes()),
            "checkpoint": "ghost"})
        assert resp.status_code == 404


class TestForge:
    def test_noop_is_pristine_bit_exact(self, service_env):
        sample = service_env["samples"][0]
        map_b64 = b64(ImageTile(sample.map.to_unit_rgb()).png_bytes())
        resp = service_env["client"].post("/api/forge", json={
            "map_png": map_b64, "tampered_png": map_b64,
            "image_png": b64(sample.image.png_bytes()),
            "checkpoint": "toy-cyclegan"})
        assert resp.status_code == 200
        blended = ImageTile.from_png_bytes(base64.b64decode(resp.json()["blended_png"]))
        assert np.array_equal(blended.to_uint8(), sample.image.to_uint8())

    def test_missing_field_400(self, service_env):
        resp = service_env["client"].post("/api/forge", json={
            "map_png": "x", "checkpoint": "toy-cyclegan"})
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad-request"

    def test_parity_with_library_forge(self, service_env):
        sample = service_env["samples"][0]
        tampered_idx = sample.map.indices.copy()
        tampered_idx[8:20, 8:20] = 3
        tampered = SemanticMap(tampered_idx, DEFAULT_PALETTE)
        resp = service_env["client"].post("/api/forge", json={
            "map_png": b64(ImageTile(sample.map.to_unit_rgb()).png_bytes()),
            "tampered_png": b64(ImageTile(tampered.to_unit_rgb()).png_bytes()),
            "image_png": b64(sample.image.png_bytes()),
            "checkpoint": "toy-cyclegan", "dilation": 2, "feather": 2})
        assert resp.status_code == 200
        # The service sees the 8-bit PNG; feed the library the same bytes.
        png_sample = PairedSample(
            map=sample.map,
            image=ImageTile.from_png_bytes(sample.image.png_bytes()),
            source_id=sample.source_id)
        record = forge(service_env["model"], png_sample, tampered, dilation=2, feather=2,
                       deterministic=True, checkpoint_id="toy-cyclegan")
        got_mask = ImageTile.from_png_bytes(base64.b64decode(resp.json()["mask_png"]))
        assert np.array_equal(got_mask.to_uint8(), record.mask.to_image().to_uint8())
        got_blend = ImageTile.from_png_bytes(base64.b64decode(resp.json()["blended_png"]))
        assert np.array_equal(got_blend.to_uint8(), record.blended.to_uint8())


class TestDetect:
    def test_parity_with_library_heatmap(self, service_env):
        sample = service_env["samples"][0]
        resp = service_env["client"].post("/api/detect", json={
            "image_png": b64(sample.image.png_bytes()),
            "checkpoint": "toy-detector", "stride": 16})
        assert resp.status_code == 200
        body = resp.json()
        scores = np.frombuffer(base64.b64decode(body["scores_b64"]),
                               dtype=np.float32).reshape(body["shape"])
        # The decoded PNG loses nothing: recompute through the library.
        tile = ImageTile.from_png_bytes(sample.image.png_bytes())
        hm = heatmap(service_env["detector"], tile, stride=16)
        assert np.array_equal(scores, hm.scores.astype(np.float32))

    def test_undersized_image_400(self, service_env):
        small = ImageTile(np.zeros((16, 16, 3), dtype=np.float32))
        resp = service_env["client"].post("/api/detect", json={
            "image_png": b64(small.png_bytes()), "checkpoint": "toy-detector"})
        assert resp.status_code == 400

    def test_stride_outside_extent_400(self, service_env):
        sample = service_env["samples"][0]
        resp = service_env["client"].post("/api/detect", json={
            "image_png": b64(sample.image.png_bytes()),
            "checkpoint": "toy-detector", "stride": 4096})
        assert resp.status_code == 400


class TestListings:
    def test_samples_sorted_with_palette(self, service_env):
        resp = service_env["client"].get("/api/samples")
        assert resp.status_code == 200
        listing = resp.json()
        assert [s["id"] for s in listing] == sorted(s["id"] for s in listing)
        assert all("palette" in s for s in listing)

    def test_sample_detail(self, service_env):
        resp = service_env["client"].get("/api/samples/s_0")
        assert resp.status_code == 200
        body = resp.json()
        assert {"map_png", "image_png", "palette"} <= set(body)

    def test_checkpoints_listing(self, service_env):
        resp = service_env["client"].get("/api/checkpoints")
        listing = resp.json()
        ids = [c["id"] for c in listing]
        assert ids == sorted(ids)
        by_id = {c["id"]: c for c in listing}
        assert by_id["toy-cyclegan"]["type"] == "translator"
        assert by_id["toy-cyclegan"]["arch"] == "cyclegan"
        assert "palette" in by_id["toy-cyclegan"]
        assert by_id["toy-detector"]["type"] == "detector"

    def test_empty_roots_give_empty_lists(self, tmp_path):
        client = TestClient(create_app(tmp_path / "none", tmp_path / "nodata"))
        assert client.get("/api/samples").json() == []
        assert client.get("/api/checkpoints").json() == []

    def test_schema_served(self, service_env):
        resp = service_env["client"].get("/api/schema")
        assert resp.status_code == 200
        assert "/api/forge" in resp.json()["paths"]


class TestLimits:
    def test_payload_cap(self, service_env):
        resp = service_env["client"].post(
            "/api/generate", content=b"{}",
            headers={"content-type": "application/json",
                     "content-length": str(20 * 1024 * 1024)})
        assert resp.status_code == 413


class TestCliServiceParity:
    def test_forge_outputs_byte_identical(self, service_env, tmp_path):
        """Identical forge inputs through the CLI and /api/forge yield
        identical mask and blended PNGs."""
        from semaforge.cli import main as cli_main

        sample = service_env["samples"][0]
        tampered_idx = sample.map.indices.copy()
        tampered_idx[4:16, 4:16] = 2
        tampered = SemanticMap(tampered_idx, DEFAULT_PALETTE)

        map_path = tmp_path / "map.png"
        tampered_path = tmp_path / "tampered.png"
        image_path = tmp_path / "image.png"
        sample.map.save_png(map_path)
        tampered.save_png(tampered_path)
        sample.image.save_png(image_path)

        out = tmp_path / "out"
        code = cli_main(["forge", "--ckpt", str(service_env["ckpts"] / "toy-cyclegan"),
                         "--map", str(map_path), "--tampered", str(tampered_path),
                         "--image", str(image_path), "--out", str(out),
                         "--deterministic"])
        assert code == 0

        resp = service_env["client"].post("/api/forge", json={
            "map_png": b64(map_path.read_bytes()),
            "tampered_png": b64(tampered_path.read_bytes()),
            "image_png": b64(image_path.read_bytes()),
            "checkpoint": "toy-cyclegan"})
        assert resp.status_code == 200
        body = resp.json()
        assert base64.b64decode(body["blended_png"]) == (out / "blended.png").read_bytes()
        assert base64.b64decode(body["mask_png"]) == (out / "mask.png").read_bytes()


class TestStaticUi:
    def test_ui_mounted_when_built(self, tmp_path):
        ui = tmp_path / "dist"
        ui.mkdir()
        (ui / "index.html").write_text("<html><body>editor</body></html>")
        client = TestClient(create_app(tmp_path / "ck", None, ui_dir=ui))
        resp = client.get("/ui/")
        assert resp.status_code == 200
        assert "editor" in resp.text
