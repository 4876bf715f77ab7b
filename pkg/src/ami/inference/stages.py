"""Stage operations wiring backends into the staged pipeline.

Flow per image: detect -> crop each box (clamped, padded to square,
resized) -> moth/non-moth gate -> species classifier for moths only.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from ami.errors import ConfigurationError, StageError
from ami.inference.backends import build_backend
from ami.inference.types import (
    MOTH,
    NON_MOTH,
    BoundingBox,
    CropTransform,
    Detection,
    ModelSpec,
    Stage,
)

__all__ = [
    "detect",
    "classify_binary",
    "classify_species",
    "classify_life_stage",
    "crop_for_classifier",
    "run_stages",
]


def detect(image: np.ndarray, spec: ModelSpec) -> list[tuple[BoundingBox, float]]:
    """Localize insects: boxes clamped to the image, scores >= threshold,
    sorted by descending score (position breaks ties)."""
    if spec.stage is not Stage.DETECTOR:
        raise ConfigurationError(f"detect requires a detector spec, got {spec.stage}")
    height, width = image.shape[:2]
    backend = build_backend(spec)
    results = []
    for box, score in backend.detect(image):
        if score < spec.threshold:
            continue
        x_min = max(0.0, min(box.x_min, float(width)))
        y_min = max(0.0, min(box.y_min, float(height)))
        x_max = max(0.0, min(box.x_max, float(width)))
        y_max = max(0.0, min(box.y_max, float(height)))
        if x_min >= x_max or y_min >= y_max:
            continue
        results.append((BoundingBox(x_min, y_min, x_max, y_max), float(score)))
    results.sort(key=lambda r: (-r[1], r[0].x_min, r[0].y_min, r[0].x_max, r[0].y_max))
    return results


def classify_binary(crop: np.ndarray, spec: ModelSpec) -> tuple[str, float]:
    """Moth iff moth-probability >= threshold (inclusive); the returned
    score is the probability of the returned label."""
    if spec.stage is not Stage.BINARY:
        raise ConfigurationError(f"classify_binary requires a binary spec, got {spec.stage}")
    backend = build_backend(spec)
    prob = backend.moth_probability(crop)
    if prob >= spec.threshold:
        return MOTH, prob
    return NON_MOTH, 1.0 - prob


def classify_species(
    crop: np.ndarray, spec: ModelSpec, k: int
) -> tuple[list[tuple[int, float]], np.ndarray | None]:
    """Top-k species distribution plus an L2-normalized feature vector.

    Probabilities are returned non-increasing (smaller taxon key wins
    ties); k beyond the class count clamps to the full distribution. The
    feature is normalized here regardless of what the backend emits.
    """
    if spec.stage is not Stage.SPECIES:
        raise ConfigurationError(f"classify_species requires a species spec, got {spec.stage}")
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    backend = build_backend(spec)
    dist, feature = backend.species_distribution(crop)
    dist = sorted(dist, key=lambda kp: (-kp[1], kp[0]))[:k]
    if feature is not None:
        feature = np.asarray(feature, dtype=float)
        norm = float(np.linalg.norm(feature))
        if norm == 0.0:
            raise StageError("species backend returned a zero feature vector", spec.model_uri)
        feature = feature / norm
    return dist, feature


def classify_life_stage(crop: np.ndarray, spec: ModelSpec) -> tuple[str, float]:
    """Life-stage label for occurrence images lacking stage metadata."""
    if spec.stage is not Stage.LIFE_STAGE:
        raise ConfigurationError(
            f"classify_life_stage requires a life_stage spec, got {spec.stage}"
        )
    backend = build_backend(spec)
    return backend.life_stage(crop)


def crop_for_classifier(
    image: np.ndarray, box: BoundingBox, target_size: int
) -> tuple[np.ndarray, CropTransform]:
    """Cut a square classifier input around a box.

    The box is clamped to the image, padded to a centered square, and
    resized to target_size; parts of the square falling outside the image
    are filled by edge replication. Returns the crop and the recorded
    transform back to image space.
    """
    height, width = image.shape[:2]
    x_min = max(0.0, min(box.x_min, float(width)))
    y_min = max(0.0, min(box.y_min, float(height)))
    x_max = max(x_min, min(box.x_max, float(width)))
    y_max = max(y_min, min(box.y_max, float(height)))

    side = max(x_max - x_min, y_max - y_min, 1.0)
    cx = (x_min + x_max) / 2.0
    cy = (y_min + y_max) / 2.0
    iside = int(np.ceil(side))
    ix0 = int(np.floor(cx - iside / 2.0))
    iy0 = int(np.floor(cy - iside / 2.0))

    sx0 = max(0, ix0)
    sy0 = max(0, iy0)
    sx1 = min(width, ix0 + iside)
    sy1 = min(height, iy0 + iside)
    region = image[sy0:sy1, sx0:sx1]
    pad = (
        (sy0 - iy0, (iy0 + iside) - sy1),
        (sx0 - ix0, (ix0 + iside) - sx1),
    )
    if image.ndim == 3:
        pad = pad + ((0, 0),)
    square = np.pad(region, pad, mode="edge")

    resized = np.asarray(
        Image.fromarray(square).resize((target_size, target_size), Image.BILINEAR)
    )
    return resized, CropTransform(ix0, iy0, iside, target_size)


def run_stages(
    image: np.ndarray,
    specs: dict[Stage, ModelSpec],
    k: int = 5,
) -> list[Detection]:
    """Run the full staged pipeline on one image.

    Requires detector and binary specs; the species stage runs only when
    configured and only on moth-labeled crops, so no detection ever
    carries species predictions with a non-moth label. Detections carry
    stable per-image indices in detector output order.
    """
    det_spec = specs.get(Stage.DETECTOR)
    bin_spec = specs.get(Stage.BINARY)
    if det_spec is None or bin_spec is None:
        raise ConfigurationError("run_stages requires detector and binary specs")
    species_spec = specs.get(Stage.SPECIES)

    detections: list[Detection] = []
    for index, (box, score) in enumerate(detect(image, det_spec)):
        crop, transform = crop_for_classifier(image, box, bin_spec.input_resolution)
        label, bin_score = classify_binary(crop, bin_spec)
        species = None
        feature = None
        if label == MOTH and species_spec is not None:
            if species_spec.input_resolution != bin_spec.input_resolution:
                crop, transform = crop_for_classifier(
                    image, box, species_spec.input_resolution
                )
            species, feature = classify_species(crop, species_spec, k)
        detections.append(
            Detection(
                box=box,
                det_score=score,
                index=index,
                binary=(label, bin_score),
                species=species,
                feature=feature,
                crop_transform=transform,
            )
        )
    return detections
