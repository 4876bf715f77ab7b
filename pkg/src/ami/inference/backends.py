"""Model backends: canned fixtures, the classical blob baseline, and an
ONNX external runtime.

Backends are deliberately dumb functions of a raster; thresholds,
sorting, and gating between stages live in the stage operations.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Any

import numpy as np
from scipy import ndimage

from ami.errors import StageError
from ami.inference.types import Backend, BoundingBox, ModelSpec, Stage

__all__ = [
    "image_content_hash",
    "StubFixtureBackend",
    "BlobDetectorBackend",
    "ExternalRuntimeBackend",
    "build_backend",
]


def image_content_hash(image: np.ndarray) -> str:
    """Stable content hash of a raster: shape, dtype, and raw bytes."""
    arr = np.ascontiguousarray(image)
    digest = hashlib.sha256()
    digest.update(str(arr.shape).encode())
    digest.update(str(arr.dtype).encode())
    digest.update(arr.tobytes())
    return digest.hexdigest()


class StubFixtureBackend:
    """Canned outputs keyed by image/crop content hash (for tests and demos).

    The fixture file is a JSON object mapping hash -> payload, where the
    payload may hold any of: ``boxes`` ([x0, y0, x1, y1, score] rows),
    ``moth_probability``, ``species`` ([taxon_key, prob] pairs),
    ``feature``, ``life_stage``.
    """

    shareable = True

    def __init__(self, model_uri: str):
        self.model_uri = model_uri
        try:
            self._fixtures: dict[str, Any] = json.loads(Path(model_uri).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise StageError(f"cannot load stub fixture: {exc}", model_uri) from exc

    def _payload(self, image: np.ndarray) -> dict[str, Any]:
        key = image_content_hash(image)
        payload = self._fixtures.get(key)
        if payload is None:
            raise StageError(f"no canned output for content hash {key}", self.model_uri)
        return payload

    def detect(self, image: np.ndarray) -> list[tuple[BoundingBox, float]]:
        payload = self._payload(image)
        return [
            (BoundingBox(b[0], b[1], b[2], b[3]), float(b[4]))
            for b in payload.get("boxes", [])
        ]

    def moth_probability(self, crop: np.ndarray) -> float:
        payload = self._payload(crop)
        if "moth_probability" not in payload:
            raise StageError("fixture lacks moth_probability", self.model_uri)
        return float(payload["moth_probability"])

    def species_distribution(
        self, crop: np.ndarray
    ) -> tuple[list[tuple[int, float]], np.ndarray | None]:
        payload = self._payload(crop)
        if "species" not in payload:
            raise StageError("fixture lacks species distribution", self.model_uri)
        dist = [(int(k), float(p)) for k, p in payload["species"]]
        feature = payload.get("feature")
        return dist, (np.asarray(feature, dtype=float) if feature is not None else None)

    def life_stage(self, crop: np.ndarray) -> tuple[str, float]:
        payload = self._payload(crop)
        if "life_stage" not in payload:
            raise StageError("fixture lacks life_stage", self.model_uri)
        return str(payload["life_stage"]), float(payload.get("life_stage_score", 1.0))


class BlobDetectorBackend:
    """Classical baseline: background subtraction plus connected components.

    Grayscale -> per-image median as the background estimate -> absolute
    difference -> fixed threshold -> 8-connected components -> boxes of
    components at or above ``min_area``. Works on the uniform pale
    screens the traps photograph; degrades under crowding, which is
    exactly why it serves as the baseline.
    """

    shareable = True

    def __init__(self, pixel_threshold: float = 40.0 / 255.0, min_area: int = 100):
        self.pixel_threshold = pixel_threshold
        self.min_area = min_area

    def detect(self, image: np.ndarray) -> list[tuple[BoundingBox, float]]:
        arr = np.asarray(image, dtype=float)
        if arr.ndim == 3:
            gray = arr.mean(axis=2)
        else:
            gray = arr
        background = float(np.median(gray))
        diff = np.abs(gray - background) / 255.0
        mask = diff > self.pixel_threshold
        labels, _ = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
        boxes: list[tuple[BoundingBox, float]] = []
        for region in ndimage.find_objects(labels):
            if region is None:
                continue
            ys, xs = region
            component = labels[ys, xs] > 0
            area = int(component.sum())
            if area < self.min_area:
                continue
            score = float(min(1.0, diff[ys, xs][component].mean()))
            boxes.append(
                (
                    BoundingBox(float(xs.start), float(ys.start), float(xs.stop), float(ys.stop)),
                    score,
                )
            )
        return boxes


class ExternalRuntimeBackend:
    """Opaque raster -> tensors function loaded from an ONNX file.

    A JSON sidecar (``<model>.labels.json``) lists the labels in output
    order: taxon keys for species models, class names otherwise. The
    engine never inspects the graph; it only checks output shapes against
    the label map.
    """

    shareable = True

    def __init__(self, model_uri: str):
        self.model_uri = model_uri
        try:
            import onnxruntime  # noqa: PLC0415 - optional heavy dependency
        except ImportError as exc:
            raise StageError(
                "onnxruntime is not installed; the external_runtime backend is unavailable",
                model_uri,
            ) from exc
        try:
            self._session = onnxruntime.InferenceSession(
                model_uri, providers=["CPUExecutionProvider"]
            )
        except Exception as exc:
            raise StageError(f"cannot load ONNX model: {exc}", model_uri) from exc
        sidecar = Path(model_uri + ".labels.json")
        self.labels: list[Any] | None = None
        if sidecar.exists():
            self.labels = json.loads(sidecar.read_text())

    def _run(self, image: np.ndarray) -> list[np.ndarray]:
        arr = np.asarray(image, dtype=np.float32) / 255.0
        if arr.ndim == 2:
            arr = arr[:, :, None].repeat(3, axis=2)
        tensor = arr.transpose(2, 0, 1)[None, ...]
        name = self._session.get_inputs()[0].name
        try:
            return self._session.run(None, {name: tensor})
        except Exception as exc:
            raise StageError(f"ONNX inference failed: {exc}", self.model_uri) from exc

    def detect(self, image: np.ndarray) -> list[tuple[BoundingBox, float]]:
        outputs = self._run(image)
        if len(outputs) < 2:
            raise StageError("detector model must output boxes and scores", self.model_uri)
        boxes = np.asarray(outputs[0]).reshape(-1, 4)
        scores = np.asarray(outputs[1]).reshape(-1)
        if boxes.shape[0] != scores.shape[0]:
            raise StageError("box/score count mismatch", self.model_uri)
        return [
            (BoundingBox(*map(float, box)), float(score))
            for box, score in zip(boxes, scores)
        ]

    def _probabilities(self, crop: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        outputs = self._run(crop)
        probs = np.asarray(outputs[0], dtype=float).reshape(-1)
        probs = np.clip(probs, 0.0, None)
        total = probs.sum()
        if total > 0:
            probs = probs / total
        feature = (
            np.asarray(outputs[1], dtype=float).reshape(-1) if len(outputs) > 1 else None
        )
        return probs, feature

    def moth_probability(self, crop: np.ndarray) -> float:
        probs, _ = self._probabilities(crop)
        if self.labels is None or len(self.labels) != len(probs):
            raise StageError("binary model output does not match label map", self.model_uri)
        try:
            moth_index = self.labels.index("moth")
        except ValueError as exc:
            raise StageError("binary label map must contain 'moth'", self.model_uri) from exc
        return float(probs[moth_index])

    def species_distribution(
        self, crop: np.ndarray
    ) -> tuple[list[tuple[int, float]], np.ndarray | None]:
        probs, feature = self._probabilities(crop)
        if self.labels is None or len(self.labels) != len(probs):
            raise StageError(
                "species model output does not match label map", self.model_uri
            )
        dist = [(int(key), float(p)) for key, p in zip(self.labels, probs)]
        return dist, feature

    def life_stage(self, crop: np.ndarray) -> tuple[str, float]:
        probs, _ = self._probabilities(crop)
        if self.labels is None or len(self.labels) != len(probs):
            raise StageError(
                "life-stage model output does not match label map", self.model_uri
            )
        best = int(np.argmax(probs))
        return str(self.labels[best]), float(probs[best])


_cache: dict[tuple, Any] = {}
_cache_lock = threading.Lock()


def build_backend(spec: ModelSpec):
    """Build (or reuse) the backend instance for a model spec.

    Shareable backends are cached process-wide; all built-in backends are
    stateless after load and declare themselves shareable.
    """
    key = (
        spec.backend.value,
        spec.model_uri,
        tuple(sorted(spec.options.items())),
    )
    with _cache_lock:
        backend = _cache.get(key)
        if backend is not None:
            return backend
        if spec.backend is Backend.STUB_FIXTURE:
            backend = StubFixtureBackend(spec.model_uri)
        elif spec.backend is Backend.BLOB:
            if spec.stage is not Stage.DETECTOR:
                raise StageError("blob backend only implements detection", spec.model_uri)
            backend = BlobDetectorBackend(
                pixel_threshold=float(spec.options.get("pixel_threshold", 40.0 / 255.0)),
                min_area=int(spec.options.get("min_area", 100)),
            )
        elif spec.backend is Backend.EXTERNAL_RUNTIME:
            backend = ExternalRuntimeBackend(spec.model_uri)
        else:  # pragma: no cover - enum is exhaustive
            raise StageError(f"unknown backend {spec.backend}", spec.model_uri)
        if getattr(backend, "shareable", False):
            _cache[key] = backend
        return backend
