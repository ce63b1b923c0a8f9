"""HTTP service contract: upload, count, health, error codes."""

import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from famcount.service import MAX_UPLOAD_BYTES, create_app
from .conftest import make_image


def _png_bytes(width=64, height=48, seed=0):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 255, (height, width, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture(scope="module")
def client(tiny_model):
    app = create_app(model=tiny_model, request_timeout=60.0)
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def image_id(client):
    r = client.post("/api/images", files={"file": ("a.png", _png_bytes(), "image/png")})
    assert r.status_code == 200
    return r.json()["image_id"]


class TestUpload:
    def test_ok_reports_dimensions(self, client):
        r = client.post(
            "/api/images", files={"file": ("b.png", _png_bytes(80, 60, 1), "image/png")}
        )
        assert r.status_code == 200
        body = r.json()
        assert body["width"] == 80 and body["height"] == 60
        assert len(body["image_id"]) == 32

    def test_undecodable_415(self, client):
        r = client.post(
            "/api/images", files={"file": ("x.png", b"not an image", "image/png")}
        )
        assert r.status_code == 415

    def test_oversized_413(self, client):
        blob = b"\x89PNG" + b"\0" * (MAX_UPLOAD_BYTES + 1)
        r = client.post("/api/images", files={"file": ("big.png", blob, "image/png")})
        assert r.status_code == 413

    def test_unique_ids(self, client):
        ids = {
            client.post(
                "/api/images", files={"file": ("c.png", _png_bytes(seed=i), "image/png")}
            ).json()["image_id"]
            for i in range(3)
        }
        assert len(ids) == 3


class TestCount:
    def test_basic_count(self, client, image_id):
        r = client.post("/api/count", json={
            "image_id": image_id,
            "boxes": [{"x1": 10, "y1": 10, "x2": 24, "y2": 24}],
        })
        assert r.status_code == 200
        body = r.json()
        assert body["count"] == body["density_sum"]
        assert body["count"] >= 0
        assert body["trace"] is None
        assert body["heatmap"] is None
        assert body["timing_ms"] > 0

    def test_unknown_image_404_names_id(self, client):
        r = client.post("/api/count", json={
            "image_id": "deadbeef",
            "boxes": [{"x1": 0, "y1": 0, "x2": 5, "y2": 5}],
        })
        assert r.status_code == 404
        assert "deadbeef" in r.json()["detail"]

    def test_bad_box_422_names_index(self, client, image_id):
        r = client.post("/api/count", json={
            "image_id": image_id,
            "boxes": [
                {"x1": 1, "y1": 1, "x2": 9, "y2": 9},
                {"x1": 9, "y1": 9, "x2": 1, "y2": 1},
            ],
        })
        assert r.status_code == 422
        assert "boxes[1]" in r.json()["detail"]

    def test_out_of_bounds_422(self, client, image_id):
        r = client.post("/api/count", json={
            "image_id": image_id,
            "boxes": [{"x1": 0, "y1": 0, "x2": 10_000, "y2": 10}],
        })
        assert r.status_code == 422
        assert "boxes[0]" in r.json()["detail"]

    def test_zero_boxes_rejected(self, client, image_id):
        r = client.post("/api/count", json={"image_id": image_id, "boxes": []})
        assert r.status_code == 422

    def test_four_boxes_rejected(self, client, image_id):
        box = {"x1": 0, "y1": 0, "x2": 5, "y2": 5}
        r = client.post("/api/count", json={"image_id": image_id, "boxes": [box] * 4})
        assert r.status_code == 422

    def test_steps_out_of_range_rejected(self, client, image_id):
        box = {"x1": 0, "y1": 0, "x2": 5, "y2": 5}
        for steps in (-1, 1001):
            r = client.post("/api/count", json={
                "image_id": image_id, "boxes": [box], "adapt": True, "steps": steps,
            })
            assert r.status_code == 422

    def test_adapt_returns_trace(self, client, image_id):
        r = client.post("/api/count", json={
            "image_id": image_id,
            "boxes": [{"x1": 10, "y1": 10, "x2": 24, "y2": 24}],
            "adapt": True, "steps": 2,
        })
        assert r.status_code == 200
        trace = r.json()["trace"]
        assert trace["steps"] == 2
        assert trace["diverged"] is False
        assert trace["final_loss"] <= trace["initial_loss"]

    def test_adapt_zero_steps_matches_plain(self, client, image_id):
        payload = {
            "image_id": image_id,
            "boxes": [{"x1": 10, "y1": 10, "x2": 24, "y2": 24}],
        }
        plain = client.post("/api/count", json=payload).json()
        zero = client.post(
            "/api/count", json={**payload, "adapt": True, "steps": 0}
        ).json()
        assert zero["count"] == plain["count"]

    def test_heatmap_is_png(self, client, image_id):
        r = client.post("/api/count", json={
            "image_id": image_id,
            "boxes": [{"x1": 10, "y1": 10, "x2": 24, "y2": 24}],
            "return_heatmap": True,
        })
        blob = base64.b64decode(r.json()["heatmap"])
        with Image.open(io.BytesIO(blob)) as im:
            assert im.format == "PNG"


class TestHealth:
    def test_healthy(self, client):
        r = client.get("/api/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["fingerprint"]["backbone"] == "tiny"

    def test_no_model_503(self):
        app = create_app()
        with TestClient(app) as c:
            r = c.get("/api/health")
            assert r.status_code == 503
            r = c.post("/api/count", json={
                "image_id": "x", "boxes": [{"x1": 0, "y1": 0, "x2": 1, "y2": 1}],
            })
            assert r.status_code == 503

    def test_cors_headers(self, client):
        r = client.get("/api/health", headers={"Origin": "http://localhost:5173"})
        assert r.headers.get("access-control-allow-origin") == "*"


class TestSpill:
    def test_upload_spills_png(self, tiny_model, tmp_path):
        app = create_app(model=tiny_model, spill_dir=tmp_path / "spill")
        with TestClient(app) as c:
            iid = c.post(
                "/api/images", files={"file": ("a.png", _png_bytes(), "image/png")}
            ).json()["image_id"]
        assert (tmp_path / "spill" / f"{iid}.png").exists()
