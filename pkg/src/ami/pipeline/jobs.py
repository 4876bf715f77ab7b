"""Persistent, crash-safe job store.

One directory per job holds an append-only JSON Lines ledger (the commit
log: every fsynced line is durable, a torn tail is ignored on recovery)
plus an atomically replaced snapshot of the job row for cheap reads.
Mutual exclusion between workers is a lease file with an expiry;
claiming a queued job is an O_EXCL create, and a crashed job (running
state, dead lease) can be taken over. No external database, no network
coordinator: multiple nodes sharing a filesystem cooperate through the
same files.

Legal state transitions::

    queued  -> running | cancelled
    running -> completed | failed | cancelled
    failed  -> queued          (retry)

A crash never moves the state machine: the job stays ``running`` and a
later claim resumes it from the committed frames.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any
from urllib.parse import quote, unquote

from ami.errors import EngineError, IllegalTransitionError, InputError, NotFoundError
from ami.inference.types import ModelSpec, Stage
from ami.pipeline.sessions import Session

__all__ = ["JobState", "PipelineJob", "JobStore", "StaleLeaseError", "LEGAL_TRANSITIONS"]


class JobState(str, enum.Enum):
    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELLED = "cancelled"


LEGAL_TRANSITIONS: dict[JobState, frozenset[JobState]] = {
    JobState.QUEUED: frozenset({JobState.RUNNING, JobState.CANCELLED}),
    JobState.RUNNING: frozenset(
        {JobState.COMPLETED, JobState.FAILED, JobState.CANCELLED}
    ),
    JobState.FAILED: frozenset({JobState.QUEUED}),
    JobState.COMPLETED: frozenset(),
    JobState.CANCELLED: frozenset(),
}


class StaleLeaseError(EngineError):
    """The worker lost its lease; another worker owns the job now."""


@dataclass
class PipelineJob:
    job_id: str
    session_id: str
    stage_specs: dict[Stage, ModelSpec]
    state: JobState = JobState.QUEUED
    frames_done: int = 0
    frames_total: int = 0
    error: str | None = None
    created_at: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id,
            "session_id": self.session_id,
            "stage_specs": {s.value: spec.to_dict() for s, spec in self.stage_specs.items()},
            "state": self.state.value,
            "frames_done": self.frames_done,
            "frames_total": self.frames_total,
            "error": self.error,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineJob":
        return cls(
            job_id=data["job_id"],
            session_id=data["session_id"],
            stage_specs={
                Stage(s): ModelSpec.from_dict(spec)
                for s, spec in data["stage_specs"].items()
            },
            state=JobState(data["state"]),
            frames_done=data.get("frames_done", 0),
            frames_total=data.get("frames_total", 0),
            error=data.get("error"),
            created_at=data.get("created_at", 0.0),
        )


def _atomic_write_json(path: Path, payload: dict) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, sort_keys=True)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def job_idempotency_key(session_id: str, stage_specs: dict[Stage, ModelSpec]) -> str:
    canonical = json.dumps(
        {
            "session_id": session_id,
            "stage_specs": {s.value: spec.to_dict() for s, spec in sorted(stage_specs.items())},
        },
        sort_keys=True,
    )
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


class JobStore:
    """Filesystem-backed job queue rooted at the engine home directory."""

    def __init__(self, home: str | Path):
        self.home = Path(home)
        for sub in ("jobs", "sessions", "results"):
            (self.home / sub).mkdir(parents=True, exist_ok=True)

    # -- sessions ----------------------------------------------------------

    def _session_path(self, session_id: str) -> Path:
        return self.home / "sessions" / (quote(session_id, safe="") + ".json")

    def register_session(self, session: Session) -> None:
        _atomic_write_json(self._session_path(session.session_id), session.to_dict())

    def load_session(self, session_id: str) -> Session:
        path = self._session_path(session_id)
        if not path.exists():
            raise NotFoundError(f"session {session_id} is not registered")
        return Session.from_dict(json.loads(path.read_text()))

    def list_sessions(self, deployment_id: str | None = None) -> list[Session]:
        sessions = []
        for path in sorted((self.home / "sessions").glob("*.json")):
            session = Session.from_dict(json.loads(path.read_text()))
            if deployment_id is None or session.deployment_id == deployment_id:
                sessions.append(session)
        return sessions

    def list_deployments(self) -> list[str]:
        return sorted({s.deployment_id for s in self.list_sessions()})

    # -- job persistence ----------------------------------------------------

    def _job_dir(self, job_id: str) -> Path:
        return self.home / "jobs" / job_id

    def _snapshot(self, job: PipelineJob) -> None:
        _atomic_write_json(self._job_dir(job.job_id) / "job.json", job.to_dict())

    def _append_ledger(self, job_id: str, event: dict) -> None:
        event = dict(event)
        event["ts"] = time.time()
        path = self._job_dir(job_id) / "ledger.jsonl"
        with open(path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(event, sort_keys=True) + "\n")
            handle.flush()
            os.fsync(handle.fileno())

    def read_ledger(self, job_id: str) -> list[dict]:
        """All durable ledger events; a torn final line is ignored."""
        path = self._job_dir(job_id) / "ledger.jsonl"
        events: list[dict] = []
        if not path.exists():
            return events
        with open(path, "rb") as handle:
            raw = handle.read()
        for line in raw.split(b"\n"):
            if not line.strip():
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError:
                break  # torn tail from a crash mid-append
        return events

    def get_job(self, job_id: str) -> PipelineJob:
        path = self._job_dir(job_id) / "job.json"
        if not path.exists():
            raise NotFoundError(f"job {job_id} does not exist")
        return PipelineJob.from_dict(json.loads(path.read_text()))

    def list_jobs(self) -> list[PipelineJob]:
        jobs = []
        for path in sorted((self.home / "jobs").iterdir()):
            if (path / "job.json").exists():
                jobs.append(PipelineJob.from_dict(json.loads((path / "job.json").read_text())))
        return sorted(jobs, key=lambda j: (j.created_at, j.job_id))

    # -- queue operations ----------------------------------------------------

    def enqueue(
        self, session_id: str, stage_specs: dict[Stage, ModelSpec]
    ) -> tuple[PipelineJob, bool]:
        """Create a job, or return the existing one for the same
        (session, specs) pair. Returns (job, existing)."""
        if Stage.DETECTOR not in stage_specs or Stage.BINARY not in stage_specs:
            raise InputError("stage_specs must include detector and binary stages")
        session = self.load_session(session_id)
        job_id = job_idempotency_key(session_id, stage_specs)
        job_dir = self._job_dir(job_id)
        if (job_dir / "job.json").exists():
            return self.get_job(job_id), True
        job_dir.mkdir(parents=True, exist_ok=True)
        job = PipelineJob(
            job_id=job_id,
            session_id=session_id,
            stage_specs=dict(stage_specs),
            state=JobState.QUEUED,
            frames_total=len(session.frames),
            created_at=time.time(),
        )
        self._append_ledger(job_id, {"type": "created", "session_id": session_id})
        self._snapshot(job)
        return job, False

    def transition(
        self, job_id: str, to_state: JobState, error: str | None = None
    ) -> PipelineJob:
        job = self.get_job(job_id)
        if to_state not in LEGAL_TRANSITIONS[job.state]:
            raise IllegalTransitionError(
                f"job {job_id}: illegal transition {job.state.value} -> {to_state.value}"
            )
        self._append_ledger(
            job_id, {"type": "transition", "from": job.state.value, "to": to_state.value}
        )
        job.state = to_state
        job.error = error
        if to_state is JobState.QUEUED:  # retry resets progress bookkeeping
            job.error = None
        self._snapshot(job)
        return job

    def cancel(self, job_id: str) -> PipelineJob:
        return self.transition(job_id, JobState.CANCELLED)

    def retry(self, job_id: str) -> PipelineJob:
        return self.transition(job_id, JobState.QUEUED)

    # -- leases ----------------------------------------------------------

    def _lease_path(self, job_id: str) -> Path:
        return self._job_dir(job_id) / "lease"

    def read_lease(self, job_id: str) -> dict | None:
        path = self._lease_path(job_id)
        try:
            return json.loads(path.read_text())
        except (OSError, json.JSONDecodeError):
            return None

    def _lease_valid(self, job_id: str, now: float) -> bool:
        lease = self.read_lease(job_id)
        return lease is not None and lease.get("expires_at", 0) > now

    def claim(self, job_id: str, owner: str, ttl: float = 300.0) -> bool:
        """Try to take exclusive ownership of a job.

        Queued jobs move to running; running jobs are claimable only when
        their lease is missing or expired (crash takeover). Exactly one
        contender wins: a stale lease is retired with an atomic rename
        (only one renamer succeeds) and the fresh lease is an O_EXCL
        create (only one creator succeeds).
        """
        now = time.time()
        job = self.get_job(job_id)
        if job.state not in (JobState.QUEUED, JobState.RUNNING):
            return False
        path = self._lease_path(job_id)

        if path.exists():
            if self._lease_valid(job_id, now):
                return False
            retired = path.parent / f".stale-{owner}-{os.getpid()}-{time.monotonic_ns()}"
            try:
                os.rename(path, retired)
            except FileNotFoundError:
                return False  # lost the takeover race
            retired.unlink(missing_ok=True)

        try:
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            return False
        with os.fdopen(fd, "w") as handle:
            handle.write(
                json.dumps({"owner": owner, "expires_at": now + ttl, "claimed_at": now})
            )
            handle.flush()
            os.fsync(handle.fileno())

        if job.state is JobState.QUEUED:
            try:
                self.transition(job_id, JobState.RUNNING)
            except IllegalTransitionError:
                path.unlink(missing_ok=True)
                return False
        return self.holds_lease(job_id, owner)

    def holds_lease(self, job_id: str, owner: str) -> bool:
        lease = self.read_lease(job_id)
        return (
            lease is not None
            and lease.get("owner") == owner
            and lease.get("expires_at", 0) > time.time()
        )

    def release(self, job_id: str, owner: str) -> None:
        if self.holds_lease(job_id, owner):
            self._lease_path(job_id).unlink(missing_ok=True)

    def claimable_jobs(self) -> list[PipelineJob]:
        """Jobs a worker may pick up: queued, or running with a dead lease."""
        now = time.time()
        out = []
        for job in self.list_jobs():
            if job.state is JobState.QUEUED and not self._lease_valid(job.job_id, now):
                out.append(job)
            elif job.state is JobState.RUNNING and not self._lease_valid(job.job_id, now):
                out.append(job)
        return out

    # -- frame results ----------------------------------------------------

    def commit_frame_result(
        self, job_id: str, owner: str, frame_index: int, payload: dict
    ) -> None:
        """Durably record one frame's results. The fsynced ledger line is
        the commit point; a crash mid-append leaves no partial record."""
        if not self.holds_lease(job_id, owner):
            raise StaleLeaseError(f"worker {owner} no longer holds job {job_id}")
        self._append_ledger(
            job_id, {"type": "frame_result", "frame": frame_index, "payload": payload}
        )

    def commit_frame_failure(
        self, job_id: str, owner: str, frame_index: int, error: str
    ) -> None:
        if not self.holds_lease(job_id, owner):
            raise StaleLeaseError(f"worker {owner} no longer holds job {job_id}")
        self._append_ledger(
            job_id, {"type": "frame_failed", "frame": frame_index, "error": error}
        )

    def committed_frames(self, job_id: str) -> tuple[dict[int, dict], dict[int, str]]:
        """(frame -> payload, frame -> error) recovered from the ledger."""
        results: dict[int, dict] = {}
        failures: dict[int, str] = {}
        for event in self.read_ledger(job_id):
            if event.get("type") == "frame_result":
                results[event["frame"]] = event["payload"]
                failures.pop(event["frame"], None)
            elif event.get("type") == "frame_failed":
                if event["frame"] not in results:
                    failures[event["frame"]] = event.get("error", "")
        return results, failures

    def update_progress(self, job_id: str, frames_done: int) -> None:
        job = self.get_job(job_id)
        job.frames_done = frames_done
        self._snapshot(job)

    # -- results ----------------------------------------------------------

    def results_dir(self, session_id: str, create: bool = False) -> Path:
        path = self.home / "results" / quote(session_id, safe="")
        if create:
            path.mkdir(parents=True, exist_ok=True)
        return path


def decode_session_dir(name: str) -> str:
    return unquote(name)
