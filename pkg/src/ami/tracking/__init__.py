"""Assignment-based multi-object tracking across interval-captured frames."""

from ami.tracking.assignment import Assignment, assign
from ami.tracking.tracker import (
    UNCLASSIFIED,
    CostWeights,
    SessionCounts,
    Track,
    TrackItem,
    count_individuals,
    iou,
    pairwise_cost,
    track_session,
    write_tracks_jsonl,
)

__all__ = [
    "Assignment",
    "assign",
    "CostWeights",
    "SessionCounts",
    "Track",
    "TrackItem",
    "UNCLASSIFIED",
    "count_individuals",
    "iou",
    "pairwise_cost",
    "track_session",
    "write_tracks_jsonl",
]
