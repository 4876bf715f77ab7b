#!/usr/bin/env python3
"""The fault-tolerant queue end to end, including a simulated crash.

Builds a deployment directory of synthetic frames, discovers the
session, enqueues it, kills the first worker mid-job, resumes, and shows
that the final outputs match an uninterrupted run byte for byte.
"""

import json
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from ami.inference import Backend, ModelSpec, Stage, crop_for_classifier, image_content_hash
from ami.inference.backends import BlobDetectorBackend
from ami.pipeline import JobStore, Worker, discover_sessions, resume

base = Path(tempfile.mkdtemp())
deployment = base / "captures" / "quebec-trap-2"
deployment.mkdir(parents=True)

# Six frames, one moth drifting across the screen.
detector = BlobDetectorBackend()
binary_fixture = {}
species_fixture = {}
for i in range(6):
    frame = np.full((150, 200, 3), 219, dtype=np.uint8)
    x0, y0 = 20 + 12 * i, 40 + 5 * i
    frame[y0 : y0 + 22, x0 : x0 + 22] = (40, 30, 30)
    Image.fromarray(frame).save(deployment / f"20240706_22{i:02d}30.png")
    for box, _ in detector.detect(frame):
        crop, _ = crop_for_classifier(frame, box, 128)
        key = image_content_hash(crop)
        binary_fixture[key] = {"moth_probability": 0.93}
        species_fixture[key] = {"species": [[1, 0.9], [3, 0.1]], "feature": [1.0, 0.0]}

(base / "binary.json").write_text(json.dumps(binary_fixture))
(base / "species.json").write_text(json.dumps(species_fixture))

specs = {
    Stage.DETECTOR: ModelSpec(stage=Stage.DETECTOR, backend=Backend.BLOB),
    Stage.BINARY: ModelSpec(
        stage=Stage.BINARY, backend=Backend.STUB_FIXTURE, model_uri=str(base / "binary.json")
    ),
    Stage.SPECIES: ModelSpec(
        stage=Stage.SPECIES, backend=Backend.STUB_FIXTURE, model_uri=str(base / "species.json")
    ),
}

discovered = discover_sessions(base / "captures")
session = discovered.sessions[0]
print(f"discovered session {session.session_id} with {len(session.frames)} frames")


def outputs(store):
    d = store.results_dir(session.session_id)
    return {n: (d / n).read_bytes() for n in ("detections.jsonl", "tracks.jsonl", "counts.json")}


# Reference: one worker, no interruptions.
clean = JobStore(base / "home-clean")
clean.register_session(session)
clean.enqueue(session.session_id, specs)
Worker(clean).process_one()

# Crashy path: the worker dies after committing frame 2.
crashy = JobStore(base / "home-crashy")
crashy.register_session(session)
job, _ = crashy.enqueue(session.session_id, specs)


class WorkerDied(Exception):
    pass


def die(job_id, frame_index):
    if frame_index == 2:
        raise WorkerDied()


try:
    Worker(crashy, lease_ttl=0.5, frame_hook=die).process_one()
except WorkerDied:
    print("worker crashed after frame 2 (three frames committed)")

import time

time.sleep(0.6)  # the dead worker's lease expires
recovered = resume(crashy)
print(f"resume() recovered {recovered} job; state = {crashy.get_job(job.job_id).state.value}")

match = outputs(clean) == outputs(crashy)
print(f"outputs byte-identical to the uninterrupted run: {match}")
counts = json.loads(outputs(crashy)["counts.json"])
print("counts:", counts["species"], f"({counts['tracks']} track)")
