"""Session discovery and the fault-tolerant job queue."""

from ami.pipeline.jobs import (
    LEGAL_TRANSITIONS,
    JobState,
    JobStore,
    PipelineJob,
    StaleLeaseError,
    job_idempotency_key,
)
from ami.pipeline.sessions import DiscoveryResult, Session, discover_sessions, night_of
from ami.pipeline.worker import Worker, resume, run_workers

__all__ = [
    "LEGAL_TRANSITIONS",
    "JobState",
    "JobStore",
    "PipelineJob",
    "StaleLeaseError",
    "job_idempotency_key",
    "DiscoveryResult",
    "Session",
    "discover_sessions",
    "night_of",
    "Worker",
    "resume",
    "run_workers",
]
