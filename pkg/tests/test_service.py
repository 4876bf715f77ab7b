"""HTTP API: error mapping, idempotency, pagination, SSE progress."""

from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from ami.pipeline import JobStore, Worker
from ami.service import create_app
from ami.taxonomy import Backbone, Rank, Status, TaxonRecord

from test_pipeline import make_session_fixture


@pytest.fixture
def engine_home(tmp_path):
    """Home with one registered session, one completed job, a backbone,
    and two reviewable crops."""
    session, specs = make_session_fixture(tmp_path, n_frames=3)
    home = tmp_path / "home"
    store = JobStore(home)
    store.register_session(session)
    job, _ = store.enqueue(session.session_id, specs)
    Worker(store).process_one()

    Backbone.from_records(
        [
            TaxonRecord(30, "Saturniidae", Rank.FAMILY, Status.ACCEPTED),
            TaxonRecord(20, "Actias", Rank.GENUS, Status.ACCEPTED, parent_key=30),
            TaxonRecord(101, "Actias luna", Rank.SPECIES, Status.ACCEPTED, parent_key=20),
            TaxonRecord(102, "Actias selene", Rank.SPECIES, Status.ACCEPTED, parent_key=20),
        ]
    ).to_csv(home / "backbone.csv")

    crops_dir = home / "crops"
    crops_dir.mkdir(exist_ok=True)
    for name in ("crop-001", "crop-002"):
        Image.fromarray(np.full((24, 24, 3), 90, dtype=np.uint8)).save(
            crops_dir / f"{name}.png"
        )
    return home, store, session, job, specs


@pytest.fixture
def client(engine_home):
    home, *_ = engine_home
    return TestClient(create_app(home))


class TestErrors:
    def test_unknown_job_404(self, client):
        response = client.get("/api/jobs/doesnotexist")
        assert response.status_code == 404
        assert response.json()["code"] == "not_found"

    def test_post_job_unknown_session_422(self, client, engine_home):
        *_, specs = engine_home
        body = {
            "session_id": "ghost:2024-01-01",
            "stage_specs": {s.value: spec.to_dict() for s, spec in specs.items()},
        }
        response = client.post("/api/jobs", json=body)
        assert response.status_code == 422
        assert response.json()["code"] == "invalid_input"

    def test_cancel_completed_conflict_409(self, client, engine_home):
        _, _, _, job, _ = engine_home
        response = client.post(f"/api/jobs/{job.job_id}/cancel")
        assert response.status_code == 409
        assert response.json()["code"] == "conflict"

    def test_bad_rollup_level_422(self, client, engine_home):
        _, _, session, _, _ = engine_home
        response = client.get(f"/api/sessions/{session.session_id}/counts?level=order")
        assert response.status_code == 422


class TestJobs:
    def test_post_twice_idempotent(self, client, engine_home):
        _, store, session, job, specs = engine_home
        body = {
            "session_id": session.session_id,
            "stage_specs": {s.value: spec.to_dict() for s, spec in specs.items()},
        }
        first = client.post("/api/jobs", json=body)
        assert first.status_code == 200
        assert first.json()["existing"] is True  # worker already ran this job
        assert first.json()["job_id"] == job.job_id
        second = client.post("/api/jobs", json=body)
        assert second.json()["job_id"] == first.json()["job_id"]

    def test_list_jobs(self, client, engine_home):
        response = client.get("/api/jobs")
        assert response.status_code == 200
        jobs = response.json()["jobs"]
        assert len(jobs) == 1
        assert jobs[0]["state"] == "completed"

    def test_job_events_stream_ends_on_terminal(self, client, engine_home):
        _, _, _, job, _ = engine_home
        events = []
        with client.stream("GET", f"/api/jobs/{job.job_id}/events") as response:
            assert response.headers["content-type"].startswith("text/event-stream")
            for line in response.iter_lines():
                if line.startswith("event:"):
                    events.append(line.split(": ", 1)[1])
                if "event: end" in line:
                    break
        assert "progress" in events
        assert "end" in events

    def test_injected_progress_event_visible(self, tmp_path):
        # the in-process TestClient buffers streaming bodies, so drive a
        # real server to observe live push semantics
        import socket
        import threading
        import time

        import requests
        import uvicorn

        session, specs = make_session_fixture(tmp_path, n_frames=10)
        home = tmp_path / "home2"
        store = JobStore(home)
        store.register_session(session)
        job, _ = store.enqueue(session.session_id, specs)

        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        config = uvicorn.Config(
            create_app(home), host="127.0.0.1", port=port, log_level="error"
        )
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        for _ in range(200):
            if server.started:
                break
            time.sleep(0.01)

        seen = []
        try:
            response = requests.get(
                f"http://127.0.0.1:{port}/api/jobs/{job.job_id}/events",
                stream=True,
                timeout=10,
            )
            lines = response.iter_lines(decode_unicode=True)
            for line in lines:
                if line.startswith("data:"):
                    seen.append(json.loads(line.split(": ", 1)[1]))
                    break
            store.update_progress(job.job_id, 5)
            deadline = time.monotonic() + 5
            for line in lines:
                if time.monotonic() > deadline:
                    break
                if line.startswith("data:"):
                    payload = json.loads(line.split(": ", 1)[1])
                    seen.append(payload)
                    if payload.get("frames_done") == 5:
                        break
            response.close()
        finally:
            server.should_exit = True
            thread.join(timeout=5)

        assert seen[0]["frames_done"] == 0
        assert seen[-1]["frames_done"] == 5


class TestReads:
    def test_deployments_and_sessions(self, client, engine_home):
        _, _, session, _, _ = engine_home
        assert client.get("/api/deployments").json() == {"deployments": ["dep1"]}
        sessions = client.get("/api/sessions?deployment=dep1").json()["sessions"]
        assert [s["session_id"] for s in sessions] == [session.session_id]

    def test_frames_pagination(self, client, engine_home):
        _, _, session, _, _ = engine_home
        first = client.get(
            f"/api/sessions/{session.session_id}/frames", params={"limit": 2}
        ).json()
        assert len(first["frames"]) == 2
        assert first["next_cursor"] is not None
        rest = client.get(
            f"/api/sessions/{session.session_id}/frames",
            params={"limit": 2, "cursor": first["next_cursor"]},
        ).json()
        assert len(rest["frames"]) == 1
        assert rest["next_cursor"] is None

    def test_detections_tracks_counts(self, client, engine_home):
        _, _, session, _, _ = engine_home
        detections = client.get(f"/api/sessions/{session.session_id}/detections").json()
        assert len(detections["frames"]) == 3
        assert all("detection_id" in d for f in detections["frames"] for d in f["detections"])

        tracks = client.get(f"/api/sessions/{session.session_id}/tracks").json()
        assert tracks["tracks"], "session should have tracks"

        species = client.get(f"/api/sessions/{session.session_id}/counts").json()
        genus = client.get(
            f"/api/sessions/{session.session_id}/counts", params={"level": "genus"}
        ).json()
        assert sum(species["counts"].values()) == sum(genus["counts"].values())

    def test_taxa_lineage(self, client):
        payload = client.get("/api/taxa/101").json()
        assert payload["lineage"] == {
            "species_key": 101,
            "genus_key": 20,
            "family_key": 30,
        }
        assert payload["names"]["family"] == "Saturniidae"
        assert client.get("/api/taxa/999").status_code == 404

    def test_models_listing(self, client, engine_home):
        home, *_ = engine_home
        (home / "models.json").write_text(
            json.dumps(
                [
                    {
                        "stage": "species",
                        "backend": "external_runtime",
                        "model_uri": "models/quebec.onnx",
                        "threshold": 0.0,
                        "input_resolution": 128,
                    }
                ]
            )
        )
        models = client.get("/api/models").json()["models"]
        backends = {m["backend"] for m in models}
        assert "blob" in backends
        assert "external_runtime" in backends


class TestCrops:
    def test_review_flow(self, client):
        crops = client.get("/api/crops").json()["crops"]
        assert [c["crop_id"] for c in crops] == ["crop-001", "crop-002"]
        assert crops[0]["review_state"] == "unreviewed"

        patched = client.patch(
            "/api/crops/crop-001", json={"review_state": "approved"}
        )
        assert patched.status_code == 200
        assert patched.json()["review_state"] == "approved"
        assert client.get("/api/crops/crop-001").json()["review_state"] == "approved"

        pending = client.get("/api/crops", params={"review_state": "unreviewed"}).json()
        assert [c["crop_id"] for c in pending["crops"]] == ["crop-002"]

    def test_invalid_state_422(self, client):
        response = client.patch("/api/crops/crop-001", json={"review_state": "meh"})
        assert response.status_code == 422

    def test_unknown_crop_404(self, client):
        response = client.patch("/api/crops/ghost", json={"review_state": "approved"})
        assert response.status_code == 404


class TestImages:
    def test_frame_image_negotiation(self, client, engine_home):
        _, _, session, _, _ = engine_home
        frames = client.get(f"/api/sessions/{session.session_id}/frames").json()["frames"]
        ref = frames[0]["frame_id"]
        png = client.get(f"/api/frames/{ref}/image", headers={"Accept": "image/png"})
        assert png.status_code == 200
        assert png.headers["content-type"] == "image/png"
        jpg = client.get(f"/api/frames/{ref}/image", headers={"Accept": "image/jpeg"})
        assert jpg.headers["content-type"] == "image/jpeg"

    def test_detection_crop(self, client, engine_home):
        _, _, session, _, _ = engine_home
        detections = client.get(f"/api/sessions/{session.session_id}/detections").json()
        det = detections["frames"][0]["detections"][0]
        response = client.get(
            f"/api/detections/{det['detection_id']}/crop",
            headers={"Accept": "image/png"},
        )
        assert response.status_code == 200
        image = Image.open(__import__("io").BytesIO(response.content))
        x0, y0, x1, y1 = det["box"]
        assert image.size == (int(x1) - int(x0), int(y1) - int(y0))

    def test_unknown_frame_404(self, client):
        response = client.get("/api/frames/ghost~0/image")
        assert response.status_code == 404
