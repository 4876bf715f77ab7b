"""HTTP/JSON API over the engine's stores.

The server is a thin veneer: every mutation goes through the same
JobStore state machine the CLI uses, and reads reflect committed state
only. Errors map one-to-one onto HTTP statuses: not_found 404,
invalid_input 422, conflict 409, backend_failure 502. Job progress is
pushed as server-sent events. No authentication; bind to loopback.
"""

from __future__ import annotations

import io
import json
import time
from pathlib import Path
from typing import Any, Iterator
from urllib.parse import quote, unquote

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse
from PIL import Image

from ami.errors import (
    ConfigurationError,
    DataIntegrityError,
    EngineError,
    IllegalTransitionError,
    InputError,
    NotFoundError,
    ParseError,
    StageError,
)
from ami.inference.types import Backend, ModelSpec, Stage
from ami.pipeline.jobs import JobState, JobStore
from ami.synthgen import ReviewState
from ami.taxonomy import Backbone

__all__ = ["create_app", "serve"]

MAX_PAGE_LIMIT = 500

_STATUS_BY_CODE = {
    "not_found": 404,
    "invalid_input": 422,
    "conflict": 409,
    "backend_failure": 502,
}


def _error_response(code: str, message: str, detail: Any = None) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_BY_CODE[code],
        content={"code": code, "message": message, "detail": detail},
    )


def _error_code(exc: EngineError) -> str:
    if isinstance(exc, NotFoundError):
        return "not_found"
    if isinstance(exc, IllegalTransitionError):
        return "conflict"
    if isinstance(exc, StageError):
        return "backend_failure"
    if isinstance(exc, (InputError, ConfigurationError, ParseError, DataIntegrityError)):
        return "invalid_input"
    return "backend_failure"


def _paginate(items: list, cursor: str | None, limit: int) -> tuple[list, str | None]:
    limit = max(1, min(limit, MAX_PAGE_LIMIT))
    try:
        offset = int(cursor) if cursor else 0
    except ValueError as exc:
        raise InputError(f"bad cursor {cursor!r}") from exc
    page = items[offset : offset + limit]
    next_cursor = str(offset + limit) if offset + limit < len(items) else None
    return page, next_cursor


def frame_id(session_id: str, frame_index: int) -> str:
    return f"{quote(session_id, safe='')}~{frame_index}"


def detection_id(session_id: str, frame_index: int, det_index: int) -> str:
    return f"{frame_id(session_id, frame_index)}~{det_index}"


class CropReviewStore:
    """Review states for crop assets under ``home/crops``."""

    def __init__(self, home: Path):
        self.directory = home / "crops"
        self.directory.mkdir(parents=True, exist_ok=True)
        self.state_path = self.directory / "review.json"

    def _states(self) -> dict[str, str]:
        if self.state_path.exists():
            return json.loads(self.state_path.read_text())
        return {}

    def list_crops(self) -> list[dict]:
        states = self._states()
        crops = []
        for path in sorted(self.directory.glob("*.png")):
            crops.append(
                {
                    "crop_id": path.stem,
                    "review_state": states.get(path.stem, ReviewState.UNREVIEWED.value),
                }
            )
        return crops

    def get(self, crop_id: str) -> dict:
        path = self.directory / f"{crop_id}.png"
        if not path.exists():
            raise NotFoundError(f"crop {crop_id} does not exist")
        states = self._states()
        return {
            "crop_id": crop_id,
            "review_state": states.get(crop_id, ReviewState.UNREVIEWED.value),
        }

    def set_state(self, crop_id: str, review_state: str) -> dict:
        if not (self.directory / f"{crop_id}.png").exists():
            raise NotFoundError(f"crop {crop_id} does not exist")
        try:
            state = ReviewState(review_state)
        except ValueError as exc:
            raise InputError(f"unknown review_state {review_state!r}") from exc
        states = self._states()
        states[crop_id] = state.value
        tmp = self.state_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(states, sort_keys=True))
        tmp.replace(self.state_path)
        return {"crop_id": crop_id, "review_state": state.value}

    def image_path(self, crop_id: str) -> Path:
        path = self.directory / f"{crop_id}.png"
        if not path.exists():
            raise NotFoundError(f"crop {crop_id} does not exist")
        return path


def _load_results_file(store: JobStore, session_id: str, name: str) -> Path:
    store.load_session(session_id)  # 404 on unknown session
    path = store.results_dir(session_id) / name
    if not path.exists():
        raise NotFoundError(f"no {name} results for session {session_id}")
    return path


def _negotiated_image(image: Image.Image, accept: str) -> Response:
    if "image/png" in accept and "image/jpeg" not in accept.split(";")[0]:
        fmt, media = "PNG", "image/png"
    elif "image/jpeg" in accept:
        fmt, media = "JPEG", "image/jpeg"
    else:
        fmt, media = "PNG", "image/png"
    buffer = io.BytesIO()
    image.convert("RGB").save(buffer, format=fmt)
    return Response(content=buffer.getvalue(), media_type=media)


def create_app(home: str | Path) -> FastAPI:
    home = Path(home)
    store = JobStore(home)
    crops = CropReviewStore(home)
    app = FastAPI(title="ami-engine", docs_url=None, redoc_url=None)

    def backbone() -> Backbone:
        path = home / "backbone.csv"
        if not path.exists():
            raise NotFoundError("no backbone.csv configured in the engine home")
        return Backbone.from_csv(path)

    @app.exception_handler(EngineError)
    async def engine_error_handler(_request: Request, exc: EngineError):
        return _error_response(_error_code(exc), str(exc))

    # -- read: deployments, sessions, frames ------------------------------

    @app.get("/api/deployments")
    def deployments():
        return {"deployments": store.list_deployments()}

    @app.get("/api/sessions")
    def sessions(
        deployment: str | None = None,
        cursor: str | None = None,
        limit: int = Query(default=100, le=MAX_PAGE_LIMIT),
    ):
        items = [s.to_dict() for s in store.list_sessions(deployment)]
        page, next_cursor = _paginate(items, cursor, limit)
        return {"sessions": page, "next_cursor": next_cursor}

    @app.get("/api/sessions/{session_id}/frames")
    def session_frames(
        session_id: str,
        cursor: str | None = None,
        limit: int = Query(default=100, le=MAX_PAGE_LIMIT),
    ):
        session = store.load_session(session_id)
        items = [
            {
                "frame_id": frame_id(session_id, i),
                "index": i,
                "path": path,
                "capture_time": ts,
            }
            for i, (path, ts) in enumerate(session.frames)
        ]
        page, next_cursor = _paginate(items, cursor, limit)
        return {"frames": page, "next_cursor": next_cursor}

    # -- jobs ----------------------------------------------------------

    @app.get("/api/jobs")
    def list_jobs(
        cursor: str | None = None,
        limit: int = Query(default=100, le=MAX_PAGE_LIMIT),
    ):
        items = [j.to_dict() for j in store.list_jobs()]
        page, next_cursor = _paginate(items, cursor, limit)
        return {"jobs": page, "next_cursor": next_cursor}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str):
        return store.get_job(job_id).to_dict()

    @app.post("/api/jobs")
    def create_job(body: dict):
        session_id = body.get("session_id")
        raw_specs = body.get("stage_specs")
        if not session_id or not isinstance(raw_specs, dict):
            raise InputError("body must provide session_id and stage_specs")
        try:
            specs = {
                Stage(stage): ModelSpec.from_dict(spec) for stage, spec in raw_specs.items()
            }
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"bad stage_specs: {exc}") from exc
        try:
            job, existing = store.enqueue(session_id, specs)
        except NotFoundError as exc:
            # a bad reference in the body is invalid input, not a missing URL
            raise InputError(str(exc)) from exc
        payload = job.to_dict()
        payload["existing"] = existing
        return payload

    @app.post("/api/jobs/{job_id}/cancel")
    def cancel_job(job_id: str):
        return store.cancel(job_id).to_dict()

    @app.post("/api/jobs/{job_id}/retry")
    def retry_job(job_id: str):
        return store.retry(job_id).to_dict()

    @app.get("/api/jobs/{job_id}/events")
    def job_events(job_id: str, poll_interval: float = 0.05, max_seconds: float = 30.0):
        store.get_job(job_id)  # 404 before the stream starts

        def stream() -> Iterator[str]:
            deadline = time.monotonic() + max_seconds
            last: dict | None = None
            while time.monotonic() < deadline:
                job = store.get_job(job_id)
                snapshot = {
                    "job_id": job.job_id,
                    "state": job.state.value,
                    "frames_done": job.frames_done,
                    "frames_total": job.frames_total,
                    "error": job.error,
                }
                if snapshot != last:
                    yield f"event: progress\ndata: {json.dumps(snapshot, sort_keys=True)}\n\n"
                    last = snapshot
                if job.state in (JobState.COMPLETED, JobState.FAILED, JobState.CANCELLED):
                    yield f"event: end\ndata: {json.dumps({'state': job.state.value})}\n\n"
                    return
                time.sleep(poll_interval)
            yield "event: timeout\ndata: {}\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- results ----------------------------------------------------------

    @app.get("/api/sessions/{session_id}/detections")
    def session_detections(session_id: str):
        path = _load_results_file(store, session_id, "detections.jsonl")
        frames = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                record = json.loads(line)
                for i, det in enumerate(record.get("detections", [])):
                    det["detection_id"] = detection_id(session_id, record["frame"], i)
                frames.append(record)
        return {"session_id": session_id, "frames": frames}

    @app.get("/api/sessions/{session_id}/tracks")
    def session_tracks(session_id: str):
        path = _load_results_file(store, session_id, "tracks.jsonl")
        tracks = [json.loads(line) for line in path.read_text().splitlines() if line]
        return {"session_id": session_id, "tracks": tracks}

    @app.get("/api/sessions/{session_id}/counts")
    def session_counts(session_id: str, level: str = "species"):
        if level not in ("species", "genus", "family"):
            raise InputError(f"unknown rollup level {level!r}")
        path = _load_results_file(store, session_id, "counts.json")
        payload = json.loads(path.read_text())
        return {
            "session_id": session_id,
            "level": level,
            "counts": payload[level],
            "tracks": payload["tracks"],
        }

    # -- crop review ----------------------------------------------------------

    @app.get("/api/crops")
    def list_crops(
        cursor: str | None = None,
        limit: int = Query(default=100, le=MAX_PAGE_LIMIT),
        review_state: str | None = None,
    ):
        items = crops.list_crops()
        if review_state is not None:
            items = [c for c in items if c["review_state"] == review_state]
        page, next_cursor = _paginate(items, cursor, limit)
        return {"crops": page, "next_cursor": next_cursor}

    @app.get("/api/crops/{crop_id}")
    def get_crop(crop_id: str):
        return crops.get(crop_id)

    @app.patch("/api/crops/{crop_id}")
    def patch_crop(crop_id: str, body: dict):
        if "review_state" not in body:
            raise InputError("body must provide review_state")
        return crops.set_state(crop_id, body["review_state"])

    @app.get("/api/crops/{crop_id}/image")
    def crop_image(crop_id: str, request: Request):
        path = crops.image_path(crop_id)
        return _negotiated_image(Image.open(path), request.headers.get("accept", ""))

    # -- taxa and models ----------------------------------------------------------

    @app.get("/api/taxa/{taxon_key}")
    def taxon(taxon_key: int):
        bb = backbone()
        record = bb.get(taxon_key)
        lin = bb.lineage(taxon_key)
        names = {
            "species": bb.get(lin.species_key).scientific_name if lin.species_key else None,
            "genus": bb.get(lin.genus_key).scientific_name if lin.genus_key else None,
            "family": bb.get(lin.family_key).scientific_name if lin.family_key else None,
        }
        return {
            "taxon_key": record.taxon_key,
            "scientific_name": record.scientific_name,
            "rank": record.rank.value,
            "status": record.status.value,
            "lineage": {
                "species_key": lin.species_key,
                "genus_key": lin.genus_key,
                "family_key": lin.family_key,
            },
            "names": names,
        }

    @app.get("/api/models")
    def models():
        available = [
            ModelSpec(stage=Stage.DETECTOR, backend=Backend.BLOB).to_dict(),
        ]
        config = home / "models.json"
        if config.exists():
            for entry in json.loads(config.read_text()):
                available.append(ModelSpec.from_dict(entry).to_dict())
        return {"models": available}

    # -- image bytes ----------------------------------------------------------

    def _resolve_frame(frame_ref: str) -> tuple[str, int, str]:
        try:
            quoted_session, index = frame_ref.rsplit("~", 1)
            session_id = unquote(quoted_session)
            frame_index = int(index)
        except ValueError as exc:
            raise InputError(f"bad frame id {frame_ref!r}") from exc
        session = store.load_session(session_id)
        if not (0 <= frame_index < len(session.frames)):
            raise NotFoundError(f"frame {frame_index} not in session {session_id}")
        return session_id, frame_index, session.frames[frame_index][0]

    @app.get("/api/frames/{frame_ref}/image")
    def frame_image(frame_ref: str, request: Request):
        _, _, path = _resolve_frame(frame_ref)
        if not Path(path).exists():
            raise NotFoundError(f"frame file {path} is gone")
        return _negotiated_image(Image.open(path), request.headers.get("accept", ""))

    @app.get("/api/detections/{det_ref}/crop")
    def detection_crop(det_ref: str, request: Request):
        try:
            frame_ref, det_part = det_ref.rsplit("~", 1)
            det_index = int(det_part)
        except ValueError as exc:
            raise InputError(f"bad detection id {det_ref!r}") from exc
        session_id, frame_index, path = _resolve_frame(frame_ref)
        results_path = _load_results_file(store, session_id, "detections.jsonl")
        box = None
        with open(results_path, encoding="utf-8") as handle:
            for line in handle:
                record = json.loads(line)
                if record["frame"] == frame_index:
                    detections = record.get("detections", [])
                    if det_index >= len(detections):
                        raise NotFoundError(f"detection {det_ref} does not exist")
                    box = detections[det_index]["box"]
                    break
        if box is None:
            raise NotFoundError(f"no committed results for frame {frame_index}")
        image = np.asarray(Image.open(path).convert("RGB"))
        x0, y0, x1, y1 = (int(v) for v in box)
        crop = image[max(0, y0) : max(0, y1), max(0, x0) : max(0, x1)]
        return _negotiated_image(Image.fromarray(crop), request.headers.get("accept", ""))

    return app


def serve(home: str | Path, host: str = "127.0.0.1", port: int = 8777) -> None:
    """Run the API server (blocking)."""
    import uvicorn

    uvicorn.run(create_app(home), host=host, port=port, log_level="warning")
