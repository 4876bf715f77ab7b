#!/usr/bin/env python3
"""The staged pipeline on one frame: detect, moth/non-moth gate, species.

Uses the classical blob detector (no trained weights needed) plus stub
classifier fixtures keyed by crop content hash, which is exactly how the
test suite drives the pipeline deterministically.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from ami.inference import (
    Backend,
    BoundingBox,
    ModelSpec,
    Stage,
    crop_for_classifier,
    image_content_hash,
    run_stages,
)
from ami.inference.backends import BlobDetectorBackend

# A synthetic trap frame: pale screen, two insects (one will be "moth",
# one "non-moth" per the stub classifier below).
frame = np.full((200, 300, 3), 222, dtype=np.uint8)
frame[40:80, 50:100] = (45, 35, 30)     # larger, darker: our "moth"
frame[120:150, 200:230] = (60, 60, 90)  # smaller: the "caddisfly"

# Build classifier stubs keyed by the content hash of each crop the
# pipeline will cut. In production these stages are ONNX models.
detector = BlobDetectorBackend()
binary_fixture = {}
species_fixture = {}
for index, (box, score) in enumerate(detector.detect(frame)):
    crop, _ = crop_for_classifier(frame, box, 128)
    key = image_content_hash(crop)
    is_moth = 0.94 if index == 0 else 0.08
    binary_fixture[key] = {"moth_probability": is_moth}
    species_fixture[key] = {
        "species": [[101, 0.72], [102, 0.21], [103, 0.07]],
        "feature": [0.6, 0.8],
    }

tmp = Path(tempfile.mkdtemp())
(tmp / "binary.json").write_text(json.dumps(binary_fixture))
(tmp / "species.json").write_text(json.dumps(species_fixture))

specs = {
    Stage.DETECTOR: ModelSpec(stage=Stage.DETECTOR, backend=Backend.BLOB),
    Stage.BINARY: ModelSpec(
        stage=Stage.BINARY, backend=Backend.STUB_FIXTURE, model_uri=str(tmp / "binary.json")
    ),
    Stage.SPECIES: ModelSpec(
        stage=Stage.SPECIES, backend=Backend.STUB_FIXTURE, model_uri=str(tmp / "species.json")
    ),
}

for det in run_stages(frame, specs, k=3):
    label, confidence = det.binary
    line = f"box={tuple(round(v) for v in det.box.as_tuple())} {label} ({confidence:.2f})"
    if det.species:
        top = ", ".join(f"taxon {k}: {p:.2f}" for k, p in det.species)
        line += f" | species: {top}"
    print(line)

print("\nnon-moths are gated out of the species stage by construction.")
