"""Local job service: accepts image+mask uploads, trains bundles on a worker
queue, streams progress via polling, and serves samples.

Jobs live under ``<store>/jobs/<id>/`` with a ``job.json`` state file that is
always written through a temp-file rename, so a crash never leaves a torn
state file. Training itself is serialized through a single worker thread;
sample generation and all reads are safe to run concurrently.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import queue
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from PIL import Image

from .bundle import ModelBundle
from .config import EngineConfig
from .images import save_image
from .sampler import SampleRequest, generate, mode_by_name, reconstruct
from .trainer import PyramidTrainer, TrainingCancelled

TERMINAL_STATES = {"done", "failed", "cancelled"}
DEFAULT_PROGRESS_TAIL = 50


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


@dataclass
class Job:
    id: str
    state: str = "queued"
    created_at: float = field(default_factory=time.time)
    stage: str | None = None
    scale: int | None = None
    iteration: int | None = None
    total_iterations: int | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "state": self.state,
            "created_at": self.created_at,
            "stage": self.stage,
            "scale": self.scale,
            "iteration": self.iteration,
            "total_iterations": self.total_iterations,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Job":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


class JobStore:
    """Disk layout and crash-safe job state."""

    def __init__(self, root):
        self.root = Path(root)
        (self.root / "jobs").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def job_dir(self, job_id: str) -> Path:
        return self.root / "jobs" / job_id

    def bundle_dir(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "bundle"

    def samples_dir(self, job_id: str) -> Path:
        return self.job_dir(job_id) / "samples"

    def save_job(self, job: Job):
        with self._lock:
            _atomic_write(self.job_dir(job.id) / "job.json", json.dumps(job.to_dict()))

    def load_job(self, job_id: str) -> Job | None:
        path = self.job_dir(job_id) / "job.json"
        if not path.exists():
            return None
        return Job.from_dict(json.loads(path.read_text()))

    def list_jobs(self) -> list[Job]:
        jobs = []
        for d in sorted((self.root / "jobs").iterdir()):
            job = self.load_job(d.name)
            if job is not None:
                jobs.append(job)
        return jobs

    def create_job(self, image_png: bytes, mask_png: bytes, config: EngineConfig) -> Job:
        job = Job(id=uuid.uuid4().hex)
        d = self.job_dir(job.id)
        d.mkdir(parents=True)
        (d / "input.png").write_bytes(image_png)
        (d / "mask.png").write_bytes(mask_png)
        (d / "config.json").write_text(json.dumps(config.to_dict(), sort_keys=True))
        self.samples_dir(job.id).mkdir()
        self.save_job(job)
        return job

    def load_config(self, job_id: str) -> EngineConfig:
        return EngineConfig.from_dict(
            json.loads((self.job_dir(job_id) / "config.json").read_text())
        )

    def progress_tail(self, job_id: str, k: int) -> list[dict]:
        path = self.bundle_dir(job_id) / "progress.jsonl"
        if not path.exists():
            return []
        lines = path.read_text().strip().splitlines()
        return [json.loads(line) for line in lines[-k:]]

    def sample_path(self, sample_id: str) -> Path | None:
        job_id = sample_id.split("-", 1)[0]
        path = self.samples_dir(job_id) / f"{sample_id}.png"
        return path if path.exists() else None


class TrainingWorker:
    """Background thread(s) running queued jobs; one worker by default, since
    a training job saturates the machine on its own."""

    def __init__(self, store: JobStore, workers: int = 1, queue_depth: int | None = None):
        self.store = store
        self.queue: queue.Queue[str] = queue.Queue(maxsize=queue_depth or 0)
        self.cancel_events: dict[str, threading.Event] = {}
        self.live: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._threads = [
            threading.Thread(target=self._run, daemon=True) for _ in range(max(1, workers))
        ]

    def start(self):
        for t in self._threads:
            t.start()

    def stop(self):
        self._stop.set()
        with self._lock:
            for event in self.cancel_events.values():
                event.set()
        for _ in self._threads:
            self.queue.put("")  # wake every worker
        for t in self._threads:
            t.join(timeout=10)

    def enqueue(self, job: Job):
        with self._lock:
            self.cancel_events[job.id] = threading.Event()
            self.live[job.id] = job
        try:
            self.queue.put_nowait(job.id)
        except queue.Full:
            with self._lock:
                self.cancel_events.pop(job.id, None)
                self.live.pop(job.id, None)
            raise

    def cancel(self, job_id: str) -> bool:
        with self._lock:
            event = self.cancel_events.get(job_id)
        if event is None:
            return False
        event.set()
        return True

    def status(self, job_id: str) -> Job | None:
        with self._lock:
            return self.live.get(job_id)

    def _run(self):
        while True:
            job_id = self.queue.get()
            if self._stop.is_set():
                break
            if not job_id:
                continue
            job = self.store.load_job(job_id)
            if job is None or job.state != "queued":
                continue
            self._train(job)

    def _train(self, job: Job):
        store = self.store
        cancel_event = self.cancel_events[job.id]
        if cancel_event.is_set():
            job.state = "cancelled"
            store.save_job(job)
            return

        def on_progress(event):
            job.stage = event.stage
            job.state = "naive" if event.stage == "naive" else "training"
            job.scale = event.scale
            job.iteration = event.iteration
            job.total_iterations = event.total_iterations
            with self._lock:
                self.live[job.id] = job

        try:
            from .images import load_image, load_mask

            config = store.load_config(job.id)
            image = load_image(store.job_dir(job.id) / "input.png")
            mask = load_mask(store.job_dir(job.id) / "mask.png")
            job.state = "training"
            store.save_job(job)
            trainer = PyramidTrainer(
                config, on_progress=on_progress, should_cancel=cancel_event.is_set
            )
            trainer.train(image, mask, store.bundle_dir(job.id))
            job.state = "done"
        except TrainingCancelled:
            job.state = "cancelled"
        except Exception as exc:  # noqa: BLE001 - job errors become job state
            job.state = "failed"
            job.error = f"{type(exc).__name__}: {exc}"
        finally:
            store.save_job(job)
            with self._lock:
                self.live.pop(job.id, None)
                self.cancel_events.pop(job.id, None)


def _reindex(store: JobStore, worker: TrainingWorker):
    """On restart: keep terminal jobs, requeue queued ones, fail interrupted ones."""
    for job in store.list_jobs():
        if job.state in TERMINAL_STATES:
            continue
        if job.state == "queued":
            worker.enqueue(job)
        else:
            job.state = "failed"
            job.error = "interrupted by service restart"
            store.save_job(job)


def _decode_dims(png: bytes) -> tuple[int, int]:
    with Image.open(io.BytesIO(png)) as im:
        return im.size[1], im.size[0]


def create_app(
    store_root,
    default_config: EngineConfig | None = None,
    ui_dir=None,
    workers: int = 1,
    queue_depth: int | None = None,
) -> FastAPI:
    store = JobStore(store_root)
    worker = TrainingWorker(store, workers=workers, queue_depth=queue_depth)
    base_config = default_config or EngineConfig()
    sample_lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(app):
        _reindex(store, worker)
        worker.start()
        yield
        worker.stop()

    app = FastAPI(title="maskfill", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.store = store
    app.state.worker = worker

    def get_job_or_404(job_id: str) -> Job:
        live = worker.status(job_id)
        if live is not None:
            return live
        job = store.load_job(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {job_id}")
        return job

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.post("/api/jobs")
    async def create_job(image: UploadFile, mask: UploadFile, config: str = Form(None)):
        image_png = await image.read()
        mask_png = await mask.read()
        try:
            image_dims = _decode_dims(image_png)
            mask_dims = _decode_dims(mask_png)
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"undecodable upload: {exc}")
        if image_dims != mask_dims:
            raise HTTPException(
                status_code=400,
                detail=f"image dims {image_dims} != mask dims {mask_dims}",
            )
        cfg = base_config
        if config:
            try:
                merged = dict(base_config.to_dict())
                merged.update(json.loads(config))
                cfg = EngineConfig.from_dict(merged)
            except (ValueError, TypeError) as exc:
                raise HTTPException(status_code=400, detail=f"bad config: {exc}")
        try:
            job = store.create_job(image_png, mask_png, cfg)
        except OSError as exc:
            raise HTTPException(status_code=507, detail=f"store full: {exc}")
        try:
            worker.enqueue(job)
        except queue.Full:
            job.state = "failed"
            job.error = "queue full"
            store.save_job(job)
            raise HTTPException(status_code=503, detail="training queue is full")
        return {"job": job.to_dict()}

    @app.get("/api/jobs")
    def list_jobs():
        return {"jobs": [j.to_dict() for j in store.list_jobs()]}

    @app.get("/api/jobs/{job_id}")
    def get_status(job_id: str, k: int = DEFAULT_PROGRESS_TAIL):
        job = get_job_or_404(job_id)
        return {"job": job.to_dict(), "progress": store.progress_tail(job_id, k)}

    @app.post("/api/jobs/{job_id}/cancel")
    def cancel_job(job_id: str):
        job = get_job_or_404(job_id)
        if job.state in TERMINAL_STATES:
            raise HTTPException(status_code=409, detail=f"job already {job.state}")
        worker.cancel(job_id)
        if job.state == "queued":
            job.state = "cancelled"
            store.save_job(job)
        return {"job": get_job_or_404(job_id).to_dict()}

    @app.post("/api/jobs/{job_id}/samples")
    def request_samples(job_id: str, body: dict):
        job = get_job_or_404(job_id)
        if job.state != "done":
            raise HTTPException(status_code=409, detail=f"job is {job.state}, not done")
        seed = int(body.get("seed", 0))
        mode_name = body.get("mode", "normal")
        count = int(body.get("count", 1))
        multiplier = float(body.get("noise_multiplier", 1.0))
        try:
            mode = mode_by_name(mode_name, multiplier)
            request = SampleRequest(seed=seed, mode=mode, count=count)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        tag = hashlib.sha1(
            f"{seed}:{mode_name}:{multiplier}:{count}".encode()
        ).hexdigest()[:10]
        sample_ids = [f"{job_id}-{tag}-{i:03d}" for i in range(count)]
        std_id = f"{job_id}-{tag}-std"
        sdir = store.samples_dir(job_id)
        expected = [sdir / f"{sid}.png" for sid in sample_ids + [std_id]]
        with sample_lock:
            if not all(p.exists() for p in expected):
                try:
                    bundle = ModelBundle.load(store.bundle_dir(job_id))
                except Exception as exc:
                    raise HTTPException(status_code=500, detail=f"corrupt bundle: {exc}")
                try:
                    result = generate(bundle, request)
                except ValueError as exc:
                    raise HTTPException(status_code=400, detail=str(exc))
                for sid, img in zip(sample_ids, result.images):
                    save_image(img, sdir / f"{sid}.png")
                scale = result.std_map.max() or 1.0
                Image.fromarray(
                    np.round(result.std_map / scale * 255).astype(np.uint8), mode="L"
                ).save(sdir / f"{std_id}.png")
        return {"samples": sample_ids, "std": std_id, "seed": seed, "mode": mode_name}

    @app.get("/api/samples/{sample_id}")
    def get_sample(sample_id: str):
        path = store.sample_path(sample_id)
        if path is None:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id}")
        return FileResponse(path, media_type="image/png")

    def _serve_job_file(job_id: str, path: Path, missing: str):
        get_job_or_404(job_id)
        if not path.exists():
            raise HTTPException(status_code=404, detail=missing)
        return FileResponse(path, media_type="image/png")

    @app.get("/api/jobs/{job_id}/naive")
    def get_naive(job_id: str):
        return _serve_job_file(
            job_id, store.bundle_dir(job_id) / "naive.png", "naive preview not available"
        )

    @app.get("/api/jobs/{job_id}/input")
    def get_input(job_id: str):
        return _serve_job_file(job_id, store.job_dir(job_id) / "input.png", "no input")

    @app.get("/api/jobs/{job_id}/mask")
    def get_mask(job_id: str):
        return _serve_job_file(job_id, store.job_dir(job_id) / "mask.png", "no mask")

    @app.get("/api/jobs/{job_id}/reconstruction")
    def get_reconstruction(job_id: str):
        job = get_job_or_404(job_id)
        if job.state != "done":
            raise HTTPException(status_code=409, detail=f"job is {job.state}, not done")
        path = store.job_dir(job_id) / "reconstruction.png"
        if not path.exists():
            with sample_lock:
                if not path.exists():
                    bundle = ModelBundle.load(store.bundle_dir(job_id))
                    save_image(reconstruct(bundle), path)
        return FileResponse(path, media_type="image/png")

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
