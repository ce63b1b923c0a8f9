"""HTTP counting service.

Endpoints: multipart image upload, density-map counting with optional
per-image refinement, and a health probe reporting the loaded checkpoint.
The image store is in-memory (optionally spilled to a directory); model
executions are funneled through a fixed-size worker pool so concurrent
requests never exceed the configured parallelism and are served in
arrival order.
"""

from __future__ import annotations

import base64
import logging
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from io import BytesIO
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .adapt import adapt_and_count, predict_no_adapt
from .data import AnnotatedImage, Box
from .errors import FamcountError
from .figures import heatmap_png_bytes
from .losses import AdaptationConfig
from .model import CountingModel, load_checkpoint

logger = logging.getLogger(__name__)

MAX_UPLOAD_BYTES = 20 * 1024 * 1024
MAX_STEPS = 1000


class BoxIn(BaseModel):
    x1: float
    y1: float
    x2: float
    y2: float


class CountRequest(BaseModel):
    image_id: str
    boxes: list[BoxIn] = Field(min_length=1, max_length=3)
    adapt: bool = False
    steps: int = Field(default=100, ge=0, le=MAX_STEPS)
    return_heatmap: bool = False


class StoredImage:
    def __init__(self, image_id: str, pixels: np.ndarray):
        self.image_id = image_id
        self.pixels = pixels
        self.height, self.width = pixels.shape[:2]


def _validate_boxes(req: CountRequest, img: StoredImage) -> list[Box]:
    boxes = []
    for i, b in enumerate(req.boxes):
        if not (b.x1 < b.x2 and b.y1 < b.y2):
            raise HTTPException(422, detail=f"boxes[{i}]: corners not ordered (x1<x2, y1<y2)")
        if b.x1 < 0 or b.y1 < 0 or b.x2 > img.width or b.y2 > img.height:
            raise HTTPException(
                422, detail=f"boxes[{i}]: outside image bounds {img.width}x{img.height}"
            )
        boxes.append(Box(b.x1, b.y1, b.x2, b.y2))
    return boxes


def create_app(
    checkpoint: str | Path | None = None,
    backbone_weights: str | None = None,
    max_concurrency: int = 1,
    request_timeout: float = 120.0,
    spill_dir: str | Path | None = None,
    ui_dir: str | Path | None = None,
    model: CountingModel | None = None,
) -> FastAPI:
    """Build the app. With neither ``checkpoint`` nor ``model`` the server
    still starts; counting and health then answer 503 until one is loaded.
    """
    app = FastAPI(title="famcount")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    if model is None and checkpoint is not None:
        model = load_checkpoint(checkpoint, backbone_weights=backbone_weights)
        model.checkpoint_path = Path(checkpoint)
    app.state.model = model
    app.state.images = {}
    app.state.pool = ThreadPoolExecutor(max_workers=max(1, max_concurrency))
    app.state.request_timeout = request_timeout
    app.state.spill_dir = Path(spill_dir) if spill_dir else None
    if app.state.spill_dir:
        app.state.spill_dir.mkdir(parents=True, exist_ok=True)

    @app.post("/api/images")
    def upload_image(file: UploadFile):
        raw = file.file.read(MAX_UPLOAD_BYTES + 1)
        if len(raw) > MAX_UPLOAD_BYTES:
            raise HTTPException(413, detail=f"upload exceeds {MAX_UPLOAD_BYTES} bytes")
        try:
            with Image.open(BytesIO(raw)) as im:
                pixels = np.asarray(im.convert("RGB"))
        except Exception:
            raise HTTPException(415, detail="file is not a decodable JPEG or PNG image")
        image_id = uuid.uuid4().hex
        stored = StoredImage(image_id, pixels)
        app.state.images[image_id] = stored
        if app.state.spill_dir:
            Image.fromarray(pixels).save(app.state.spill_dir / f"{image_id}.png")
        return {"image_id": image_id, "width": stored.width, "height": stored.height}

    def _run_count(req: CountRequest, img: StoredImage, boxes: list[Box]) -> dict:
        mdl: CountingModel = app.state.model
        annotated = AnnotatedImage(
            img.image_id, img.width, img.height, dots=[], exemplars=boxes,
            category="uploaded", pixels=img.pixels,
        )
        prepared = mdl.prepare(annotated)
        out_hw = (prepared.resized.height, prepared.resized.width)
        scale = mdl.config.density_scale
        trace_out = None
        if req.adapt:
            cfg = AdaptationConfig(steps=req.steps)
            dens, trace = adapt_and_count(mdl.head, prepared.stack, prepared.boxes, out_hw,
                                          cfg, output_scale=scale)
            trace_out = {
                "initial_loss": trace.losses[0] if trace.losses else None,
                "final_loss": trace.losses[-1] if trace.losses else None,
                "steps": trace.steps_run,
                "diverged": trace.diverged,
            }
        else:
            dens = predict_no_adapt(mdl.head, prepared.stack, out_hw, output_scale=scale)
        total = dens.total()
        out = {
            "count": total,
            "density_sum": total,
            "trace": trace_out,
            "heatmap": None,
        }
        if req.return_heatmap:
            out["heatmap"] = base64.b64encode(heatmap_png_bytes(dens)).decode("ascii")
        return out

    @app.post("/api/count")
    def count_endpoint(req: CountRequest):
        if app.state.model is None:
            raise HTTPException(503, detail="model not loaded")
        img = app.state.images.get(req.image_id)
        if img is None:
            raise HTTPException(404, detail=f"unknown image_id '{req.image_id}'")
        boxes = _validate_boxes(req, img)
        started = time.perf_counter()
        future = app.state.pool.submit(_run_count, req, img, boxes)
        try:
            out = future.result(timeout=app.state.request_timeout)
        except FutureTimeout:
            raise HTTPException(504, detail=f"count timed out after {app.state.request_timeout}s")
        except (FamcountError, ValueError) as exc:
            raise HTTPException(422, detail=str(exc))
        out["timing_ms"] = (time.perf_counter() - started) * 1000.0
        return out

    @app.get("/api/health")
    def health():
        mdl: CountingModel = app.state.model
        if mdl is None:
            return JSONResponse(
                status_code=503,
                content={"status": "no checkpoint loaded", "model_checkpoint": None,
                         "fingerprint": None},
            )
        ckpt = str(mdl.checkpoint_path) if mdl.checkpoint_path else None
        return {"status": "ok", "model_checkpoint": ckpt,
                "fingerprint": mdl.config.fingerprint()}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
