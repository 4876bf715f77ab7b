"""Shared prediction types: boxes, detections, model stage specs."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ami.errors import InputError

__all__ = [
    "BoundingBox",
    "CropTransform",
    "Detection",
    "ModelSpec",
    "Stage",
    "Backend",
    "MOTH",
    "NON_MOTH",
]

MOTH = "moth"
NON_MOTH = "non_moth"


class Stage(str, enum.Enum):
    DETECTOR = "detector"
    BINARY = "binary"
    SPECIES = "species"
    LIFE_STAGE = "life_stage"


class Backend(str, enum.Enum):
    STUB_FIXTURE = "stub_fixture"
    BLOB = "blob"
    EXTERNAL_RUNTIME = "external_runtime"


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InputError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    def width(self) -> float:
        return self.x_max - self.x_min

    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width() * self.height()

    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class CropTransform:
    """Square source region a classifier crop was taken from.

    Maps classifier-space pixels back to image space:
    image_xy = (src_x0, src_y0) + crop_xy * src_side / target_size.
    """

    src_x0: int
    src_y0: int
    src_side: int
    target_size: int


@dataclass
class Detection:
    """One localized insect with staged classification results."""

    box: BoundingBox
    det_score: float
    index: int = 0
    binary: tuple[str, float] | None = None
    species: list[tuple[int, float]] | None = None
    feature: np.ndarray | None = None
    crop_transform: CropTransform | None = None

    def __post_init__(self):
        if self.binary is not None and self.binary[0] not in (MOTH, NON_MOTH):
            raise InputError(f"unknown binary label {self.binary[0]!r}")
        if self.species is not None:
            if self.binary is None or self.binary[0] != MOTH:
                raise InputError("species predictions require a moth binary label")
            probs = [p for _, p in self.species]
            if any(b > a + 1e-12 for a, b in zip(probs, probs[1:])):
                raise InputError("species probabilities must be non-increasing")
            if sum(probs) > 1.0 + 1e-6:
                raise InputError("species probabilities sum above 1")
        if self.feature is not None:
            norm = float(np.linalg.norm(np.asarray(self.feature, dtype=float)))
            if not math.isclose(norm, 1.0, abs_tol=1e-6):
                raise InputError(f"feature must have unit L2 norm, got {norm}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "box": list(self.box.as_tuple()),
            "det_score": self.det_score,
            "index": self.index,
            "binary": list(self.binary) if self.binary else None,
            "species": [[k, p] for k, p in self.species] if self.species else None,
            "feature": [float(x) for x in self.feature] if self.feature is not None else None,
            "crop_transform": (
                [
                    self.crop_transform.src_x0,
                    self.crop_transform.src_y0,
                    self.crop_transform.src_side,
                    self.crop_transform.target_size,
                ]
                if self.crop_transform
                else None
            ),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Detection":
        transform = data.get("crop_transform")
        return cls(
            box=BoundingBox(*data["box"]),
            det_score=data["det_score"],
            index=data.get("index", 0),
            binary=tuple(data["binary"]) if data.get("binary") else None,
            species=[(int(k), float(p)) for k, p in data["species"]]
            if data.get("species")
            else None,
            feature=np.asarray(data["feature"], dtype=float)
            if data.get("feature") is not None
            else None,
            crop_transform=CropTransform(*transform) if transform else None,
        )


@dataclass(frozen=True)
class ModelSpec:
    """Configuration of one pipeline stage's model backend."""

    stage: Stage
    backend: Backend
    model_uri: str = ""
    threshold: float = 0.5
    input_resolution: int = 128
    options: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.input_resolution <= 0:
            raise InputError("input_resolution must be positive")
        if not (0.0 <= self.threshold <= 1.0):
            raise InputError("threshold must lie in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage.value,
            "backend": self.backend.value,
            "model_uri": self.model_uri,
            "threshold": self.threshold,
            "input_resolution": self.input_resolution,
            "options": dict(sorted(self.options.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelSpec":
        return cls(
            stage=Stage(data["stage"]),
            backend=Backend(data["backend"]),
            model_uri=data.get("model_uri", ""),
            threshold=data.get("threshold", 0.5),
            input_resolution=data.get("input_resolution", 128),
            options=data.get("options", {}),
        )
