"""Workers: claim jobs, run the staged pipeline per frame, commit
results with frame-level granularity, then track and count.

Each frame's detections are committed to the job ledger before the next
frame starts, so a crash loses at most the in-flight frame and a resumed
worker re-runs only uncommitted frames. Final per-session outputs are
derived purely from committed ledger entries, which makes an interrupted
and resumed run byte-identical to an uninterrupted one.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import uuid

import numpy as np
from PIL import Image

from ami.errors import EngineError, InputError
from ami.inference.types import MOTH, Detection, Stage
from ami.pipeline.jobs import JobState, JobStore, PipelineJob, StaleLeaseError
from ami.taxonomy import Backbone
from ami.tracking import CostWeights, count_individuals, track_session, write_tracks_jsonl
from ami.inference.stages import run_stages

__all__ = ["Worker", "run_workers", "resume"]

logger = logging.getLogger(__name__)


def _load_image(path: str) -> np.ndarray:
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("RGB"))
    except Exception as exc:
        raise InputError(f"cannot decode image {path}: {exc}") from exc


class Worker:
    """Processes queue jobs one at a time under a lease."""

    def __init__(
        self,
        store: JobStore,
        owner: str | None = None,
        failure_threshold: float = 0.1,
        backbone: Backbone | None = None,
        tracking_weights: CostWeights | None = None,
        tracking_gate: float = 0.8,
        lease_ttl: float = 300.0,
        frame_hook=None,
    ):
        self.store = store
        self.owner = owner or f"worker-{os.getpid()}-{uuid.uuid4().hex[:8]}"
        self.failure_threshold = failure_threshold
        self.backbone = backbone
        self.tracking_weights = tracking_weights or CostWeights()
        self.tracking_gate = tracking_gate
        self.lease_ttl = lease_ttl
        # test seam: called after each committed frame (e.g. to simulate a crash)
        self.frame_hook = frame_hook

    def process_one(self) -> PipelineJob | None:
        """Claim and fully process the next claimable job, if any."""
        for job in self.store.claimable_jobs():
            if self.store.claim(job.job_id, self.owner, ttl=self.lease_ttl):
                return self._process_claimed(self.store.get_job(job.job_id))
        return None

    def _process_claimed(self, job: PipelineJob) -> PipelineJob:
        session = self.store.load_session(job.session_id)
        results, failures = self.store.committed_frames(job.job_id)
        logger.info(
            "worker %s processing job %s (%d/%d frames committed)",
            self.owner,
            job.job_id,
            len(results),
            len(session.frames),
        )
        try:
            for frame_index, (path, _capture_time) in enumerate(session.frames):
                if frame_index in results:
                    continue
                try:
                    detections = run_stages(_load_image(path), job.stage_specs)
                    payload = {
                        "path": path,
                        "detections": [d.to_dict() for d in detections],
                    }
                    self.store.commit_frame_result(
                        job.job_id, self.owner, frame_index, payload
                    )
                    results[frame_index] = payload
                    failures.pop(frame_index, None)
                except StaleLeaseError:
                    raise
                except EngineError as exc:
                    self.store.commit_frame_failure(
                        job.job_id, self.owner, frame_index, str(exc)
                    )
                    failures[frame_index] = str(exc)
                self.store.update_progress(job.job_id, len(results))
                if self.frame_hook is not None:
                    self.frame_hook(job.job_id, frame_index)
        except StaleLeaseError:
            logger.warning("worker %s lost the lease on job %s", self.owner, job.job_id)
            return self.store.get_job(job.job_id)

        total = len(session.frames)
        failed_fraction = len(failures) / total if total else 0.0
        if failed_fraction > self.failure_threshold:
            job = self.store.transition(
                job.job_id,
                JobState.FAILED,
                error=f"{len(failures)}/{total} frames failed "
                f"(threshold {self.failure_threshold})",
            )
        else:
            self._finalize(job, session.session_id, results, total)
            job = self.store.transition(job.job_id, JobState.COMPLETED)
        self.store.release(job.job_id, self.owner)
        return job

    def _finalize(
        self, job: PipelineJob, session_id: str, results: dict[int, dict], total: int
    ) -> None:
        """Derive per-session outputs purely from committed frame results."""
        out_dir = self.store.results_dir(session_id, create=True)

        detections_path = out_dir / "detections.jsonl"
        tmp = detections_path.with_suffix(".jsonl.tmp")
        with open(tmp, "w", encoding="utf-8") as handle:
            for frame_index in sorted(results):
                record = {"frame": frame_index, **results[frame_index]}
                handle.write(json.dumps(record, sort_keys=True) + "\n")
        os.replace(tmp, detections_path)

        frames: list[list[Detection]] = []
        for frame_index in range(total):
            payload = results.get(frame_index)
            if payload is None:
                frames.append([])
                continue
            moths = [
                Detection.from_dict(d)
                for d in payload["detections"]
                if d.get("binary") and d["binary"][0] == MOTH
            ]
            frames.append(moths)

        image_diag = None
        tracks = track_session(
            frames,
            w=self.tracking_weights,
            gate=self.tracking_gate,
            image_diag=image_diag,
        )
        counts = count_individuals(tracks, frames, backbone=self.backbone)

        tracks_path = out_dir / "tracks.jsonl"
        tmp = tracks_path.with_suffix(".jsonl.tmp")
        with open(tmp, "w", encoding="utf-8") as handle:
            write_tracks_jsonl(tracks, handle, session_id)
        os.replace(tmp, tracks_path)

        counts_path = out_dir / "counts.json"
        tmp = counts_path.with_suffix(".json.tmp")
        payload = {
            "session_id": session_id,
            "species": {str(k): v for k, v in counts.species.items()},
            "genus": {str(k): v for k, v in counts.genus.items()},
            "family": {str(k): v for k, v in counts.family.items()},
            "tracks": len(tracks),
        }
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, sort_keys=True)
        os.replace(tmp, counts_path)

    def run_until_empty(self) -> int:
        processed = 0
        while True:
            job = self.process_one()
            if job is None:
                return processed
            processed += 1


def run_workers(store: JobStore, n: int = 1, **worker_kwargs) -> int:
    """Run n workers until the queue drains; returns jobs processed."""
    if n < 1:
        raise InputError("worker count must be >= 1")
    if n == 1:
        return Worker(store, **worker_kwargs).run_until_empty()

    counts = [0] * n

    def run(slot: int) -> None:
        worker = Worker(store, **worker_kwargs)
        counts[slot] = worker.run_until_empty()

    threads = [threading.Thread(target=run, args=(i,)) for i in range(n)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    return sum(counts)


def resume(store: JobStore, **worker_kwargs) -> int:
    """Recover after a crash: pick up running jobs whose lease died and
    re-run only their uncommitted frames."""
    worker = Worker(store, **worker_kwargs)
    recovered = 0
    crashed = [job for job in store.claimable_jobs() if job.state is JobState.RUNNING]
    for job in crashed:
        if store.claim(job.job_id, worker.owner, ttl=worker.lease_ttl):
            worker._process_claimed(store.get_job(job.job_id))
            recovered += 1
    return recovered
