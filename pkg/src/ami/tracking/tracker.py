"""Frame-to-frame moth tracking and per-session individual counts.

Interval-captured frames mean motion between frames is large and jerky,
so no motion model is used: consecutive frames are linked by a gated
optimal assignment over a four-factor cost (box overlap, size ratio,
center distance, classifier-feature similarity). Unmatched detections
start tracks; unmatched tracks terminate — there is no re-identification
across a gap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from ami.errors import InputError
from ami.inference.types import BoundingBox, Detection
from ami.tracking.assignment import assign

__all__ = [
    "CostWeights",
    "Track",
    "TrackItem",
    "iou",
    "pairwise_cost",
    "track_session",
    "count_individuals",
    "SessionCounts",
    "UNCLASSIFIED",
    "write_tracks_jsonl",
]

UNCLASSIFIED = "unclassified"


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union


@dataclass(frozen=True)
class CostWeights:
    """Non-negative weights for the four cost factors, normalized to sum 1."""

    w_iou: float = 0.25
    w_size: float = 0.25
    w_dist: float = 0.25
    w_feat: float = 0.25

    def __post_init__(self):
        raw = (self.w_iou, self.w_size, self.w_dist, self.w_feat)
        if any(w < 0 or math.isnan(w) for w in raw):
            raise InputError(f"weights must be non-negative, got {raw}")
        total = sum(raw)
        if total <= 0:
            raise InputError("at least one weight must be positive")
        if total != 1.0:
            object.__setattr__(self, "w_iou", self.w_iou / total)
            object.__setattr__(self, "w_size", self.w_size / total)
            object.__setattr__(self, "w_dist", self.w_dist / total)
            object.__setattr__(self, "w_feat", self.w_feat / total)


def pairwise_cost(
    a: Detection,
    b: Detection,
    w: CostWeights,
    image_diag: float,
) -> float:
    """Assignment cost in [0, 1] between two detections.

    cost = w_iou * (1 - iou)
         + w_size * (1 - min(area_a, area_b) / max(area_a, area_b))
         + w_dist * min(center_distance / image_diag, 1)
         + w_feat * (1 - cos(feat_a, feat_b)) / 2

    With either feature missing the feature term is the uninformative
    0.5. Symmetric by construction.
    """
    area_a = a.box.area()
    area_b = b.box.area()
    if area_a <= 0 or area_b <= 0:
        raise InputError("pairwise_cost requires boxes with positive area")
    if image_diag <= 0:
        raise InputError("image_diag must be positive")

    overlap_term = 1.0 - iou(a.box, b.box)
    size_term = 1.0 - min(area_a, area_b) / max(area_a, area_b)

    ca = a.box.center()
    cb = b.box.center()
    dist = math.hypot(ca[0] - cb[0], ca[1] - cb[1])
    dist_term = min(dist / image_diag, 1.0)

    if a.feature is None or b.feature is None:
        feat_term = 0.5
    else:
        fa = np.asarray(a.feature, dtype=float)
        fb = np.asarray(b.feature, dtype=float)
        na = float(np.linalg.norm(fa))
        nb = float(np.linalg.norm(fb))
        if na == 0 or nb == 0:
            feat_term = 0.5
        else:
            cos = float(np.dot(fa, fb)) / (na * nb)
            cos = max(-1.0, min(1.0, cos))
            feat_term = (1.0 - cos) / 2.0

    cost = (
        w.w_iou * overlap_term
        + w.w_size * size_term
        + w.w_dist * dist_term
        + w.w_feat * feat_term
    )
    return min(max(cost, 0.0), 1.0)


@dataclass(frozen=True)
class TrackItem:
    frame_index: int
    detection_index: int
    link_cost: float | None  # absent on the first item (track birth)


@dataclass
class Track:
    """One individual across frames: ordered items plus consensus species."""

    track_id: int
    items: list[TrackItem] = field(default_factory=list)
    consensus: tuple[int, float] | None = None

    def detections(self, frames: Sequence[Sequence[Detection]]) -> list[Detection]:
        return [frames[it.frame_index][it.detection_index] for it in self.items]


def track_session(
    frames: Sequence[Sequence[Detection]],
    w: CostWeights | None = None,
    gate: float = 0.8,
    image_diag: float | None = None,
) -> list[Track]:
    """Chain per-frame detections (moths only) into tracks.

    For each consecutive frame pair a cost matrix over active tracks'
    last detections x new detections is solved by gated optimal
    assignment; matched detections extend tracks, unmatched detections
    start tracks, unmatched tracks terminate. An empty frame therefore
    terminates everything. ``image_diag`` defaults to the diagonal
    implied by the largest box coordinate seen, but callers should pass
    the true image diagonal.
    """
    weights = w if w is not None else CostWeights()
    if image_diag is None:
        extent = 1.0
        for dets in frames:
            for d in dets:
                extent = max(extent, d.box.x_max, d.box.y_max)
        image_diag = math.hypot(extent, extent)

    tracks: list[Track] = []
    # (track, last detection) for tracks alive into the next frame
    active: list[tuple[Track, Detection]] = []
    next_id = 0

    for frame_index, detections in enumerate(frames):
        if not active or not detections:
            matched: dict[int, tuple[int, float]] = {}
        else:
            costs = np.array(
                [
                    [pairwise_cost(last, det, weights, image_diag) for det in detections]
                    for _, last in active
                ]
            )
            result = assign(costs, gate=gate)
            matched = {
                col: (row, float(costs[row, col])) for row, col in result.matches
            }

        new_active: list[tuple[Track, Detection]] = []
        for det_index, det in enumerate(detections):
            if det_index in matched:
                row, cost = matched[det_index]
                track = active[row][0]
                track.items.append(TrackItem(frame_index, det_index, cost))
            else:
                track = Track(track_id=next_id)
                next_id += 1
                track.items.append(TrackItem(frame_index, det_index, None))
                tracks.append(track)
            new_active.append((track, det))
        active = new_active

    return tracks


@dataclass(frozen=True)
class SessionCounts:
    """Individual counts per consensus species, with higher-taxon rollups."""

    species: dict[int | str, int]
    genus: dict[int | str, int]
    family: dict[int | str, int]


def _consensus(track: Track, frames: Sequence[Sequence[Detection]]) -> tuple[int, float] | None:
    """Mean-probability argmax across the track's species distributions.

    Ties go to the smaller taxon key. None when no detection carries
    species data.
    """
    sums: dict[int, float] = {}
    n = 0
    for det in track.detections(frames):
        if det.species is None:
            continue
        n += 1
        for key, prob in det.species:
            sums[key] = sums.get(key, 0.0) + prob
    if n == 0:
        return None
    best_key = min(sums, key=lambda k: (-sums[k], k))
    return best_key, sums[best_key] / n


def count_individuals(
    tracks: Sequence[Track],
    frames: Sequence[Sequence[Detection]],
    backbone=None,
) -> SessionCounts:
    """Count tracks per consensus species, rolling counts up the lineage.

    Tracks without any species data are counted under the reserved
    ``unclassified`` key at every level. Rollups require a backbone;
    without one the genus/family maps contain only pass-through
    unclassified counts.
    """
    species: dict[int | str, int] = {}
    for track in tracks:
        consensus = _consensus(track, frames)
        if consensus is None:
            track.consensus = None
            key: int | str = UNCLASSIFIED
        else:
            track.consensus = consensus
            key = consensus[0]
        species[key] = species.get(key, 0) + 1

    genus: dict[int | str, int] = {}
    family: dict[int | str, int] = {}
    for key in sorted(species, key=lambda k: (isinstance(k, str), k)):
        count = species[key]
        if isinstance(key, str) or backbone is None:
            genus[key] = genus.get(key, 0) + count
            family[key] = family.get(key, 0) + count
            continue
        lin = backbone.lineage(key)
        gk = lin.genus_key if lin.genus_key is not None else UNCLASSIFIED
        fk = lin.family_key if lin.family_key is not None else UNCLASSIFIED
        genus[gk] = genus.get(gk, 0) + count
        family[fk] = family.get(fk, 0) + count

    return SessionCounts(species=species, genus=genus, family=family)


def write_tracks_jsonl(
    tracks: Sequence[Track],
    stream: IO[str],
    session_id: str,
) -> None:
    """One track per line: track_id, items, consensus, session_id."""
    for track in tracks:
        record = {
            "track_id": track.track_id,
            "items": [
                {
                    "frame_index": it.frame_index,
                    "detection_index": it.detection_index,
                    "link_cost": it.link_cost,
                }
                for it in track.items
            ],
            "consensus": (
                {"taxon_key": track.consensus[0], "mean_probability": track.consensus[1]}
                if track.consensus
                else None
            ),
            "session_id": session_id,
        }
        stream.write(json.dumps(record, sort_keys=True) + "\n")
