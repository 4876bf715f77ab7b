"""Per-species-capped training manifest export.

Species with more kept images than the cap are uniformly subsampled with
a seeded generator; the manifest is sorted by (taxon_key, content_hash)
so the same seed always produces byte-identical output.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ami.dwca.archive import MediaRecord, MediaVerdict, OccurrenceRecord
from ami.dwca.fetch import cache_object_path
from ami.taxonomy import ChecklistEntry

__all__ = ["ManifestRow", "RejectedRecord", "export_training_set", "write_manifest"]

DEFAULT_CAP = 1000


@dataclass(frozen=True)
class ManifestRow:
    path: str
    taxon_key: int
    content_hash: str


@dataclass(frozen=True)
class RejectedRecord:
    occurrence_id: str
    taxon_key: int
    reason: str


def export_training_set(
    occurrences: Sequence[OccurrenceRecord],
    media: Sequence[MediaRecord],
    checklist: Iterable[ChecklistEntry] | Iterable[int],
    cache_dir: str | Path,
    cap_per_species: int | None = DEFAULT_CAP,
    seed: int = 0,
) -> tuple[list[ManifestRow], list[RejectedRecord]]:
    """Build the (path, taxon_key, content_hash) manifest from kept media.

    ``checklist`` is either processed checklist entries or a plain set of
    accepted taxon keys. Media whose species is not on the checklist land
    in the rejects report instead of the manifest. ``cap_per_species``
    of None disables capping entirely.
    """
    resolved: set[int] = set()
    for item in checklist:
        if isinstance(item, ChecklistEntry):
            if item.resolved_key is not None:
                resolved.add(item.resolved_key)
        else:
            resolved.add(int(item))

    occurrence_by_id = {o.occurrence_id: o for o in occurrences}
    by_species: dict[int, list[MediaRecord]] = {}
    rejects: list[RejectedRecord] = []
    seen_hashes: set[str] = set()

    for record in sorted(media, key=lambda r: (r.occurrence_id, r.url)):
        if record.verdict is not MediaVerdict.KEPT or record.content_hash is None:
            continue
        occurrence = occurrence_by_id.get(record.occurrence_id)
        if occurrence is None:
            rejects.append(
                RejectedRecord(record.occurrence_id, 0, "occurrence record missing")
            )
            continue
        if occurrence.taxon_key not in resolved:
            rejects.append(
                RejectedRecord(
                    record.occurrence_id, occurrence.taxon_key, "taxon not on checklist"
                )
            )
            continue
        if record.content_hash in seen_hashes:
            continue
        seen_hashes.add(record.content_hash)
        by_species.setdefault(occurrence.taxon_key, []).append(record)

    rng = random.Random(seed)
    rows: list[ManifestRow] = []
    for taxon_key in sorted(by_species):
        candidates = sorted(by_species[taxon_key], key=lambda r: r.content_hash)
        if cap_per_species is not None and len(candidates) > cap_per_species:
            candidates = rng.sample(candidates, cap_per_species)
            candidates.sort(key=lambda r: r.content_hash)
        for record in candidates:
            rows.append(
                ManifestRow(
                    path=str(_cached_file(cache_dir, record.content_hash)),
                    taxon_key=taxon_key,
                    content_hash=record.content_hash,
                )
            )
    return rows, rejects


def _cached_file(cache_dir: str | Path, content_hash: str) -> Path:
    """Actual cached object path; the extension was decided at fetch time."""
    matches = sorted((Path(cache_dir) / "objects").glob(f"{content_hash}.*"))
    if matches:
        return matches[0]
    return cache_object_path(cache_dir, content_hash, ".jpg")


def write_manifest(rows: Sequence[ManifestRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["path", "taxon_key", "content_hash"])
        for row in rows:
            writer.writerow([row.path, row.taxon_key, row.content_hash])
