"""Synthetic detection scenes from reviewed insect crops.

Approved RGBA crops are pasted at random positions onto empty background
images with simple augmentations (horizontal flip, right-angle
rotations), and the exact pasted extent of each crop is recorded as its
bounding-box annotation. Compositing is hard (no blending): wherever the
crop's alpha is nonzero the scene pixel equals the crop pixel, which is
what makes the recorded boxes exact by construction.

Scene generation is reproducible and embarrassingly parallel: scene i of
a dataset draws every random choice from a generator seeded with
``seed + i``, so disjoint index ranges rendered anywhere merge into the
same dataset a single worker would produce.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from ami.errors import ConfigurationError, InputError

__all__ = [
    "ReviewState",
    "CropAsset",
    "PasteRecord",
    "SceneAnnotation",
    "SceneConfig",
    "compose_scene",
    "generate_dataset",
    "write_coco",
    "merge_scene_entries",
    "load_crops_dir",
    "load_backgrounds_dir",
]


class ReviewState(str, enum.Enum):
    UNREVIEWED = "unreviewed"
    APPROVED = "approved"
    REJECTED = "rejected"


@dataclass
class CropAsset:
    """One segmented insect crop; alpha channel is the paste mask."""

    image: np.ndarray
    source_id: str
    review_state: ReviewState = ReviewState.UNREVIEWED

    def __post_init__(self):
        arr = np.asarray(self.image)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise InputError(f"crop {self.source_id} must be RGBA, got shape {arr.shape}")
        if not (arr[:, :, 3] > 0).any():
            raise InputError(f"crop {self.source_id} has zero visible area")
        self.image = arr.astype(np.uint8)


@dataclass(frozen=True)
class PasteRecord:
    """Placement of one crop: enough to replay the augmentation."""

    crop_id: str
    rotation: int
    hflip: bool
    x0: int
    y0: int


@dataclass
class SceneAnnotation:
    boxes: list[tuple[int, int, int, int]] = field(default_factory=list)
    crop_ids: list[str] = field(default_factory=list)
    pastes: list[PasteRecord] = field(default_factory=list)
    skipped: int = 0


@dataclass(frozen=True)
class SceneConfig:
    n_range: tuple[int, int] = (2, 8)
    allow_overlap: bool = True
    max_overlap_iou: float = 0.0
    hflip: bool = True
    rotations: tuple[int, ...] = (0, 90, 180, 270)
    retry_budget: int = 100

    def __post_init__(self):
        if self.n_range[0] < 0 or self.n_range[0] > self.n_range[1]:
            raise ConfigurationError(f"bad n_range {self.n_range}")
        if not (0.0 <= self.max_overlap_iou <= 1.0):
            raise ConfigurationError("max_overlap_iou must lie in [0, 1]")
        if not self.rotations or any(r % 90 != 0 for r in self.rotations):
            raise ConfigurationError("rotations must be right angles")


def _augment(image: np.ndarray, rotation: int, hflip: bool) -> np.ndarray:
    out = image[:, ::-1] if hflip else image
    k = (rotation // 90) % 4
    return np.rot90(out, k) if k else out


def _tight_box(alpha_mask: np.ndarray, x0: int, y0: int) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(alpha_mask)
    return (
        x0 + int(xs.min()),
        y0 + int(ys.min()),
        x0 + int(xs.max()) + 1,
        y0 + int(ys.max()) + 1,
    )


def _box_iou(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def compose_scene(
    background: np.ndarray,
    crops: Sequence[CropAsset],
    config: SceneConfig = SceneConfig(),
    seed: int = 0,
) -> tuple[np.ndarray, SceneAnnotation]:
    """Paste randomly chosen approved crops onto a copy of the background.

    Draws the paste count uniformly from ``n_range``; each paste picks a
    uniform crop, a uniform augmentation from the configured set, and a
    uniform position fully inside the background. With overlap disallowed
    positions are rejection-sampled until every pairwise box IoU is at
    most ``max_overlap_iou``; after ``retry_budget`` failures the paste is
    skipped and counted in the annotation's ``skipped`` field.
    """
    return _compose_with_rng(background, crops, config, np.random.default_rng(seed))


def _compose_with_rng(
    background: np.ndarray,
    crops: Sequence[CropAsset],
    config: SceneConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, SceneAnnotation]:
    bg = np.asarray(background)
    if bg.ndim != 3 or bg.shape[2] != 3:
        raise InputError(f"background must be RGB, got shape {bg.shape}")
    height, width = bg.shape[:2]

    n = int(rng.integers(config.n_range[0], config.n_range[1] + 1))
    annotation = SceneAnnotation()
    scene = bg.astype(np.uint8).copy()
    if n == 0:
        return scene, annotation

    approved = [c for c in crops if c.review_state is ReviewState.APPROVED]
    if not approved:
        raise ConfigurationError("no approved crops available")
    for crop in approved:
        ch, cw = crop.image.shape[:2]
        for rotation in config.rotations:
            rh, rw = (cw, ch) if (rotation // 90) % 2 else (ch, cw)
            if rh > height or rw > width:
                raise ConfigurationError(
                    f"crop {crop.source_id} ({ch}x{cw}) does not fit the "
                    f"{height}x{width} background under rotation {rotation}"
                )

    flip_choices = (False, True) if config.hflip else (False,)
    for _ in range(n):
        crop = approved[int(rng.integers(len(approved)))]
        rotation = int(config.rotations[int(rng.integers(len(config.rotations)))])
        hflip = bool(flip_choices[int(rng.integers(len(flip_choices)))])
        augmented = _augment(crop.image, rotation, hflip)
        ah, aw = augmented.shape[:2]
        mask = augmented[:, :, 3] > 0

        placed = False
        for _attempt in range(config.retry_budget):
            x0 = int(rng.integers(0, width - aw + 1))
            y0 = int(rng.integers(0, height - ah + 1))
            box = _tight_box(mask, x0, y0)
            if not config.allow_overlap and any(
                _box_iou(box, other) > config.max_overlap_iou
                for other in annotation.boxes
            ):
                continue
            placed = True
            break
        if not placed:
            annotation.skipped += 1
            continue

        region = scene[y0 : y0 + ah, x0 : x0 + aw]
        region[mask] = augmented[:, :, :3][mask]
        annotation.boxes.append(box)
        annotation.crop_ids.append(crop.source_id)
        annotation.pastes.append(PasteRecord(crop.source_id, rotation, hflip, x0, y0))

    return scene, annotation


def generate_dataset(
    backgrounds: Sequence[np.ndarray],
    crops: Sequence[CropAsset],
    n_scenes: int = 5000,
    config: SceneConfig = SceneConfig(),
    seed: int = 0,
    out_dir: str | Path | None = None,
    scene_range: tuple[int, int] | None = None,
) -> list[dict]:
    """Render scenes ``scene_range`` (default all of 0..n_scenes) and
    return their manifest entries.

    Scene i is fully determined by ``seed + i``, so disjoint ranges can be
    rendered by different workers and merged. When ``out_dir`` is given,
    scene PNGs are written under ``out_dir/images``.
    """
    if not backgrounds:
        raise ConfigurationError("at least one background is required")
    start, stop = scene_range if scene_range is not None else (0, n_scenes)
    if not (0 <= start <= stop <= n_scenes):
        raise ConfigurationError(f"bad scene range ({start}, {stop})")

    images_dir = None
    if out_dir is not None:
        images_dir = Path(out_dir) / "images"
        images_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for index in range(start, stop):
        rng = np.random.default_rng(seed + index)
        background = backgrounds[int(rng.integers(len(backgrounds)))]
        scene, annotation = _compose_with_rng(background, crops, config, rng)
        file_name = f"scene_{index:05d}.png"
        if images_dir is not None:
            Image.fromarray(scene).save(images_dir / file_name)
        entries.append(
            {
                "index": index,
                "file_name": file_name,
                "width": int(scene.shape[1]),
                "height": int(scene.shape[0]),
                "boxes": [list(box) for box in annotation.boxes],
                "crop_ids": list(annotation.crop_ids),
                "skipped": annotation.skipped,
            }
        )
    return entries


def merge_scene_entries(parts: Iterable[Sequence[dict]]) -> list[dict]:
    """Merge per-worker entry lists into one dataset, ordered by index."""
    merged: dict[int, dict] = {}
    for part in parts:
        for entry in part:
            merged[entry["index"]] = entry
    return [merged[i] for i in sorted(merged)]


def write_coco(entries: Sequence[dict], path: str | Path) -> None:
    """COCO-style JSON: images, [x, y, width, height] annotations, one
    ``insect`` category. Output bytes depend only on the entries."""
    images = []
    annotations = []
    for entry in entries:
        image_id = entry["index"] + 1
        images.append(
            {
                "id": image_id,
                "file_name": entry["file_name"],
                "width": entry["width"],
                "height": entry["height"],
            }
        )
        for k, (box, crop_id) in enumerate(zip(entry["boxes"], entry["crop_ids"])):
            x0, y0, x1, y1 = box
            annotations.append(
                {
                    "id": entry["index"] * 10000 + k + 1,
                    "image_id": image_id,
                    "category_id": 1,
                    "bbox": [x0, y0, x1 - x0, y1 - y0],
                    "area": (x1 - x0) * (y1 - y0),
                    "iscrowd": 0,
                    "source_id": crop_id,
                }
            )
    payload = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "insect"}],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def load_crops_dir(
    path: str | Path,
    review_states: dict[str, str] | None = None,
    default_state: ReviewState = ReviewState.APPROVED,
) -> list[CropAsset]:
    """Load PNG crops; RGB files get an all-opaque alpha. Review states
    come from the optional map (crop id = file stem)."""
    crops = []
    for file in sorted(Path(path).glob("*.png")):
        arr = np.asarray(Image.open(file).convert("RGBA"))
        state = default_state
        if review_states and file.stem in review_states:
            state = ReviewState(review_states[file.stem])
        crops.append(CropAsset(image=arr, source_id=file.stem, review_state=state))
    return crops


def load_backgrounds_dir(path: str | Path) -> list[np.ndarray]:
    return [
        np.asarray(Image.open(file).convert("RGB"))
        for file in sorted(Path(path).glob("*.png"))
    ]
