"""Staged prediction pipeline over pluggable model backends."""

from ami.inference.types import (
    MOTH,
    NON_MOTH,
    Backend,
    BoundingBox,
    CropTransform,
    Detection,
    ModelSpec,
    Stage,
)
from ami.inference.backends import (
    BlobDetectorBackend,
    StubFixtureBackend,
    build_backend,
    image_content_hash,
)
from ami.inference.stages import (
    classify_binary,
    classify_life_stage,
    classify_species,
    crop_for_classifier,
    detect,
    run_stages,
)

__all__ = [
    "MOTH",
    "NON_MOTH",
    "Backend",
    "BoundingBox",
    "CropTransform",
    "Detection",
    "ModelSpec",
    "Stage",
    "BlobDetectorBackend",
    "StubFixtureBackend",
    "build_backend",
    "image_content_hash",
    "classify_binary",
    "classify_life_stage",
    "classify_species",
    "crop_for_classifier",
    "detect",
    "run_stages",
]
