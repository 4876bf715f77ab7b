"""Occurrence-media cleaning rules.

Verdicts are assigned in a fixed priority order per record:
blacklisted dataset, non-adult life stage, exact duplicate of an
already-kept image, thumbnail. The first matching rule wins; everything
else is kept. Records whose fetch failed keep that verdict. The result
is a partition: every record ends with exactly one verdict, and the
summary counts add up to the input size.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from ami.dwca.archive import MediaRecord, MediaVerdict, OccurrenceRecord

__all__ = ["CleaningRules", "clean_media"]

# classifier slot: MediaRecord -> predicted life-stage label
LifeStageClassifier = Callable[[MediaRecord], str]


@dataclass(frozen=True)
class CleaningRules:
    thumbnail_min_px: int = 128
    dataset_blacklist: frozenset[str] = frozenset()
    adult_stages: frozenset[str] = frozenset({"adult", "imago"})

    def is_adult(self, stage: str) -> bool:
        return stage.strip().casefold() in {s.casefold() for s in self.adult_stages}


def clean_media(
    occurrences: Sequence[OccurrenceRecord],
    media: Sequence[MediaRecord],
    rules: CleaningRules,
    life_stage_classifier: LifeStageClassifier | None = None,
) -> tuple[list[MediaRecord], dict[str, int]]:
    """Assign a cleaning verdict to every media record.

    Duplicate detection scans in (occurrence_id, url) order so the kept
    representative of each content-hash class is the one with the
    smallest occurrence id. Records without life-stage metadata go to the
    classifier when one is plugged in; otherwise they are kept and marked
    for review.
    """
    occurrence_by_id = {o.occurrence_id: o for o in occurrences}
    order = sorted(range(len(media)), key=lambda i: (media[i].occurrence_id, media[i].url))

    kept_hashes: set[str] = set()
    verdicts: dict[int, MediaRecord] = {}
    for position in order:
        record = media[position]
        if record.verdict is MediaVerdict.FETCH_FAILED:
            verdicts[position] = record
            continue

        occurrence = occurrence_by_id.get(record.occurrence_id)
        note = ""

        if occurrence is not None and occurrence.dataset_key in rules.dataset_blacklist:
            verdicts[position] = replace(record, verdict=MediaVerdict.BLACKLISTED_DATASET)
            continue

        stage = occurrence.life_stage if occurrence is not None else None
        if stage is not None:
            if not rules.is_adult(stage):
                verdicts[position] = replace(
                    record, verdict=MediaVerdict.NON_ADULT, note=f"life_stage={stage}"
                )
                continue
        elif life_stage_classifier is not None:
            predicted = life_stage_classifier(record)
            if not rules.is_adult(predicted):
                verdicts[position] = replace(
                    record,
                    verdict=MediaVerdict.NON_ADULT,
                    note=f"classifier life_stage={predicted}",
                )
                continue
            note = f"classifier life_stage={predicted}"
        else:
            note = "needs_review: no life-stage metadata"

        if record.content_hash is not None and record.content_hash in kept_hashes:
            verdicts[position] = replace(record, verdict=MediaVerdict.DUPLICATE)
            continue

        if (
            record.width is not None
            and record.height is not None
            and min(record.width, record.height) < rules.thumbnail_min_px
        ):
            verdicts[position] = replace(record, verdict=MediaVerdict.THUMBNAIL)
            continue

        if record.content_hash is not None:
            kept_hashes.add(record.content_hash)
        verdicts[position] = replace(record, verdict=MediaVerdict.KEPT, note=note)

    cleaned = [verdicts[i] for i in range(len(media))]
    summary = Counter(record.verdict.value for record in cleaned)
    return cleaned, dict(summary)
