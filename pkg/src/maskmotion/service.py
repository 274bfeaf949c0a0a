"""HTTP service exposing generation, composition, training, and evaluation jobs.

Jobs run on background threads and advance strictly forward through
queued -> running -> (done | failed). Generation serves read-only snapshots
of the current model; at most one training job runs at a time and swaps the
served model on completion.
"""

from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import png
from .ablation import build_eval_cases, evaluate_variant
from .dataset import CLASS_NAMES, generate_dataset
from .inference import CompositionLayer, CompositionRequest, GenerationRequest, compose, generate
from .model import DenoiserModel
from .rng import Rng
from .training import TrainConfig, config_from_dict, load_checkpoint, save_checkpoint, train

JOB_KINDS = ("generate", "compose", "train", "eval")
JOB_STATES = ("queued", "running", "done", "failed")
_STATE_RANK = {s: i for i, s in enumerate(JOB_STATES)}


@dataclass
class Job:
    id: str
    kind: str
    state: str = "queued"
    progress: float = 0.0
    error: str | None = None
    result: object = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "state": self.state,
            "progress": self.progress,
            "error": self.error,
        }


class JobRegistry:
    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def create(self, kind: str) -> Job:
        job = Job(id=uuid.uuid4().hex, kind=kind)
        with self._lock:
            self._jobs[job.id] = job
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def advance(self, job: Job, state: str, progress: float | None = None, error=None, result=None):
        with self._lock:
            if _STATE_RANK[state] < _STATE_RANK[job.state]:
                raise RuntimeError(f"job state cannot move backward: {job.state} -> {state}")
            job.state = state
            if progress is not None:
                job.progress = max(job.progress, min(1.0, progress))
            if error is not None:
                job.error = error
            if result is not None:
                job.result = result

    def set_progress(self, job: Job, progress: float):
        with self._lock:
            job.progress = max(job.progress, min(1.0, progress))


def _bad_request(message: str, loc: str = "body"):
    raise HTTPException(status_code=400, detail=[{"field": loc, "message": message}])


def _decode_image_field(body: dict, key: str) -> np.ndarray:
    if key not in body or not isinstance(body[key], str):
        _bad_request(f"missing base64 PNG field '{key}'", key)
    try:
        return png.decode_gray(png.from_base64(body[key]))
    except ValueError as exc:
        _bad_request(str(exc), key)


def _decode_mask_field(body: dict, key: str) -> np.ndarray:
    try:
        return png.decode_mask(png.from_base64(body[key]))
    except ValueError as exc:
        _bad_request(str(exc), key)


def _video_payload(video: np.ndarray) -> dict:
    frames = [png.to_base64(png.encode_gray(frame[0])) for frame in video]
    return {"frames": frames, "width": video.shape[3], "height": video.shape[2]}


def _parse_generation(body: dict) -> GenerationRequest:
    image = _decode_image_field(body, "image")
    mask = _decode_mask_field(body, "mask") if body.get("mask") else None
    req = GenerationRequest(
        image=image,
        mask=mask,
        class_id=int(body.get("class_id", 0)),
        strength_value=float(body.get("strength", 0.0)),
        frames=int(body.get("frames", 8)),
        steps=int(body.get("steps", 50)),
        seed=int(body.get("seed", 0)),
    )
    try:
        req.validate()
    except ValueError as exc:
        _bad_request(str(exc))
    return req


class ModelSlot:
    """Served model with single-writer swap semantics."""

    def __init__(self, model: DenoiserModel | None, meta: dict | None = None):
        self._model = model
        self.meta = meta or {}
        self._lock = threading.Lock()
        self.train_lock = threading.Lock()

    def snapshot(self) -> DenoiserModel:
        with self._lock:
            if self._model is None:
                raise HTTPException(status_code=409, detail="no model loaded")
            return self._model

    def swap(self, model: DenoiserModel, meta: dict):
        with self._lock:
            self._model = model
            self.meta = meta


def create_app(
    checkpoint_path: str | None = None,
    model: DenoiserModel | None = None,
    meta: dict | None = None,
    static_dir: str | None = None,
    max_workers: int = 4,
) -> FastAPI:
    if model is None and checkpoint_path:
        model, header = load_checkpoint(checkpoint_path)
        meta = header.get("meta", {})
    slot = ModelSlot(model, meta)
    jobs = JobRegistry()
    pool = ThreadPoolExecutor(max_workers=max_workers)
    app = FastAPI(title="maskmotion")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        detail = [
            {"field": ".".join(str(p) for p in err.get("loc", [])), "message": err.get("msg", "")}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    def run_job(job: Job, fn):
        def runner():
            jobs.advance(job, "running")
            try:
                result = fn(lambda p: jobs.set_progress(job, p))
                jobs.advance(job, "done", progress=1.0, result=result)
            except Exception as exc:  # job errors surface through the API
                jobs.advance(job, "failed", error=f"{type(exc).__name__}: {exc}")

        pool.submit(runner)

    @app.post("/api/generate")
    async def api_generate(request: Request):
        body = await request.json()
        req = _parse_generation(body)
        snap = slot.snapshot()
        job = jobs.create("generate")
        run_job(job, lambda progress: generate(req, snap, progress=progress))
        return {"job_id": job.id}

    @app.post("/api/compose")
    async def api_compose(request: Request):
        body = await request.json()
        image = _decode_image_field(body, "image")
        layers_body = body.get("layers")
        if not isinstance(layers_body, list) or not layers_body:
            _bad_request("layers must be a non-empty list", "layers")
        layers = []
        for i, lb in enumerate(layers_body):
            if "mask" not in lb:
                _bad_request("layer mask is required", f"layers.{i}.mask")
            mask = _decode_mask_field(lb, "mask")
            if mask.shape != image.shape:
                _bad_request(
                    f"layer mask shape {mask.shape} != image shape {image.shape}",
                    f"layers.{i}.mask",
                )
            layers.append(
                CompositionLayer(
                    mask=mask,
                    class_id=int(lb.get("class_id", 0)),
                    strength_value=float(lb.get("strength", 0.0)),
                )
            )
        req = CompositionRequest(
            image=image,
            layers=layers,
            frames=int(body.get("frames", 8)),
            steps=int(body.get("steps", 50)),
            seed=int(body.get("seed", 0)),
        )
        snap = slot.snapshot()
        job = jobs.create("compose")
        run_job(job, lambda progress: compose(req, snap, progress=progress))
        return {"job_id": job.id}

    @app.post("/api/train")
    async def api_train(request: Request):
        body = await request.json()
        try:
            cfg = config_from_dict(body.get("config", {}))
            cfg.validate()
        except (TypeError, ValueError) as exc:
            _bad_request(str(exc), "config")
        ds = body.get("dataset", {})
        count = int(ds.get("count", 64))
        image_size = int(ds.get("image_size", 2 * cfg.model.latent_hw))
        source_frames = int(ds.get("source_frames", 24))
        ds_seed = int(ds.get("seed", cfg.seed))
        if not slot.train_lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a training job is already running")
        job = jobs.create("train")

        def do_train(progress):
            try:
                items = generate_dataset(count, image_size, source_frames, Rng(ds_seed))
                new_model, metrics, meta_out = train(cfg, items, progress=progress)
                slot.swap(new_model, meta_out)
                return {"final_loss": metrics[-1].l if metrics else None, "meta": meta_out}
            finally:
                slot.train_lock.release()

        run_job(job, do_train)
        return {"job_id": job.id}

    @app.post("/api/eval")
    async def api_eval(request: Request):
        body = await request.json()
        ds = body.get("dataset", {})
        count = int(ds.get("count", 16))
        image_size = int(ds.get("image_size", 32))
        seed = int(ds.get("seed", 0))
        steps = int(body.get("steps", 50))
        snap = slot.snapshot()

        def do_eval(progress):
            items = generate_dataset(count, image_size, int(ds.get("source_frames", 24)), Rng(seed))
            cases = build_eval_cases(items, Rng(seed + 1))
            result = evaluate_variant("full", snap, cases, steps=steps)
            return {
                "mask_precision": result.mask_precision,
                "strength_error": result.strength_error,
                "no_motion_count": result.no_motion_count,
                "cases": len(cases),
            }

        job = jobs.create("eval")
        run_job(job, do_eval)
        return {"job_id": job.id}

    @app.get("/api/jobs/{job_id}")
    async def api_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        return job.to_dict()

    @app.get("/api/jobs/{job_id}/result")
    async def api_job_result(job_id: str, format: str = "json"):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job id")
        if job.state != "done":
            raise HTTPException(status_code=409, detail=f"job is {job.state}")
        if isinstance(job.result, np.ndarray):
            if format == "aav1":
                from . import aav1

                return Response(
                    content=aav1.tensor_to_bytes(job.result),
                    media_type="application/octet-stream",
                )
            return _video_payload(job.result)
        return {"result": job.result}

    @app.get("/api/model")
    async def api_model():
        snap = slot.snapshot()
        return {
            "config": snap.config.__dict__,
            "param_count": snap.param_count,
            "strength_min": slot.meta.get("strength_min", 0.0),
            "strength_max": slot.meta.get("strength_max", 0.0),
        }

    @app.get("/api/classes")
    async def api_classes():
        return [{"id": i, "name": name} for i, name in enumerate(CLASS_NAMES)]

    @app.post("/api/masks/echo")
    async def api_mask_echo(request: Request):
        body = await request.json()
        if "mask" not in body:
            _bad_request("mask field required", "mask")
        mask = _decode_mask_field(body, "mask")
        return {
            "mask": png.to_base64(png.encode_mask(mask)),
            "width": mask.shape[1],
            "height": mask.shape[0],
            "movable_pixels": int(mask.sum()),
        }

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
