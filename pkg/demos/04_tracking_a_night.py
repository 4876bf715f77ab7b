#!/usr/bin/env python3
"""Tracking individuals across interval-captured frames and counting them.

Two moths cross paths during the night. Position alone would swap their
identities at the crossing; the classifier-feature term keeps the tracks
attached to the right individuals. Counts roll up to genus and family.
"""

import numpy as np

from ami.inference.types import MOTH, BoundingBox, Detection
from ami.taxonomy import Backbone, Rank, Status, TaxonRecord
from ami.tracking import CostWeights, count_individuals, track_session

backbone = Backbone.from_records(
    [
        TaxonRecord(300, "Saturniidae", Rank.FAMILY, Status.ACCEPTED),
        TaxonRecord(200, "Actias", Rank.GENUS, Status.ACCEPTED, parent_key=300),
        TaxonRecord(1, "Actias luna", Rank.SPECIES, Status.ACCEPTED, parent_key=200),
        TaxonRecord(3, "Actias selene", Rank.SPECIES, Status.ACCEPTED, parent_key=200),
    ]
)

LUNA = np.array([1.0, 0.0, 0.0])
SELENE = np.array([0.0, 1.0, 0.0])


def det(x, y, feature, species):
    return Detection(
        box=BoundingBox(x, y, x + 30, y + 30),
        det_score=0.9,
        binary=(MOTH, 0.95),
        species=species,
        feature=feature,
    )


# Frames 10 minutes apart; the two individuals swap sides between
# frame 1 and frame 2.
frames = [
    [det(40, 100, LUNA, [(1, 0.8), (3, 0.2)]), det(260, 100, SELENE, [(3, 0.7), (1, 0.3)])],
    [det(140, 105, LUNA, [(1, 0.75), (3, 0.25)]), det(170, 95, SELENE, [(3, 0.8), (1, 0.2)])],
    [det(265, 95, LUNA, [(1, 0.85), (3, 0.15)]), det(45, 110, SELENE, [(3, 0.75), (1, 0.25)])],
]

weights = CostWeights(w_iou=0.15, w_size=0.15, w_dist=0.2, w_feat=0.5)
tracks = track_session(frames, w=weights, gate=0.9, image_diag=float(np.hypot(340, 240)))

print(f"{len(tracks)} tracks from {sum(len(f) for f in frames)} detections")
counts = count_individuals(tracks, frames, backbone=backbone)
for track in tracks:
    path = " -> ".join(f"f{i.frame_index}:d{i.detection_index}" for i in track.items)
    taxon, mean_p = track.consensus
    name = backbone.get(taxon).scientific_name
    print(f"  track {track.track_id}: {path}   consensus {name} ({mean_p:.2f})")

print("\nindividuals per species:", counts.species)
print("rolled up to genus:     ", counts.genus)
print("rolled up to family:    ", counts.family)
