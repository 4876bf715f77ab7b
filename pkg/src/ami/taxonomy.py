"""Checklist reconciliation against a taxonomy backbone.

A backbone is an immutable snapshot (CSV, not a live service) assigning
every taxon a key, a status, and parent links. Regional species lists
are resolved against it: synonyms merge into accepted names, duplicates
are flagged, and doubtful/fuzzy/unmatched names are surfaced for human
review rather than auto-resolved. Lineage lookups and probability
rollups to genus/family ride on the same structure.
"""

from __future__ import annotations

import csv
import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from ami.errors import ConfigurationError, DataIntegrityError, InputError, NotFoundError

__all__ = [
    "Rank",
    "Status",
    "Resolution",
    "TaxonRecord",
    "Backbone",
    "ChecklistEntry",
    "Lineage",
    "normalize_name",
    "similarity",
    "normalize_checklist",
    "lineage",
    "rollup",
    "read_checklist",
    "write_processed_checklist",
]


class Rank(str, enum.Enum):
    SPECIES = "species"
    GENUS = "genus"
    FAMILY = "family"


class Status(str, enum.Enum):
    ACCEPTED = "accepted"
    SYNONYM = "synonym"
    DOUBTFUL = "doubtful"


class Resolution(str, enum.Enum):
    ACCEPTED = "accepted"
    MERGED_SYNONYM = "merged_synonym"
    DUPLICATE_REMOVED = "duplicate_removed"
    DOUBTFUL = "doubtful"
    FUZZY = "fuzzy"
    UNMATCHED = "unmatched"


@dataclass(frozen=True)
class TaxonRecord:
    taxon_key: int
    scientific_name: str
    rank: Rank
    status: Status
    accepted_key: int | None = None
    parent_key: int | None = None


class Lineage(NamedTuple):
    species_key: int | None
    genus_key: int | None
    family_key: int | None


@dataclass(frozen=True)
class ChecklistEntry:
    input_name: str
    resolution: Resolution
    resolved_key: int | None = None
    note: str = ""


# trailing authorship: an opening paren or capitalized token followed by a
# publication year, e.g. "(Linnaeus, 1758)" or "Walker 1855"
_AUTHORSHIP = re.compile(r"\s+(\(|[A-Z]).*?(\d{4})\)?\s*$")
_YEAR_TAIL = re.compile(r"[\s,]+\(?\d{4}\)?\s*$")


def normalize_name(name: str) -> str:
    """Canonical form of a scientific name: authorship stripped,
    case-folded, whitespace collapsed. Idempotent."""
    collapsed = " ".join(name.split())
    stripped = _AUTHORSHIP.sub("", collapsed)
    stripped = _YEAR_TAIL.sub("", stripped)
    return " ".join(stripped.casefold().split())


def _edit_distance(a: str, b: str) -> int:
    """Damerau-Levenshtein distance (adjacent transpositions count 1)."""
    if a == b:
        return 0
    previous2: list[int] = []
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + cost,
            )
            if i > 1 and j > 1 and ca == b[j - 2] and a[i - 2] == cb:
                current[j] = min(current[j], previous2[j - 2] + 1)
        previous2, previous = previous, current
    return previous[len(b)]


def similarity(a: str, b: str) -> float:
    """Normalized Damerau-Levenshtein similarity in [0, 1]."""
    if not a and not b:
        return 1.0
    return 1.0 - _edit_distance(a, b) / max(len(a), len(b))


@dataclass
class Backbone:
    """Immutable (after load) taxonomy snapshot with a normalized-name index."""

    records: dict[int, TaxonRecord] = field(default_factory=dict)
    name_index: dict[str, list[int]] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Iterable[TaxonRecord]) -> "Backbone":
        backbone = cls()
        for record in records:
            if record.taxon_key in backbone.records:
                raise ConfigurationError(f"duplicate taxon_key {record.taxon_key}")
            backbone.records[record.taxon_key] = record
            backbone.name_index.setdefault(
                normalize_name(record.scientific_name), []
            ).append(record.taxon_key)
        for keys in backbone.name_index.values():
            keys.sort()
        backbone.validate()
        return backbone

    @classmethod
    def from_csv(cls, path: str | Path) -> "Backbone":
        records = []
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            required = {"taxon_key", "scientific_name", "rank", "status"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ConfigurationError(
                    f"backbone CSV must have columns {sorted(required)}"
                )
            for row in reader:
                try:
                    records.append(
                        TaxonRecord(
                            taxon_key=int(row["taxon_key"]),
                            scientific_name=row["scientific_name"],
                            rank=Rank(row["rank"]),
                            status=Status(row["status"]),
                            accepted_key=int(row["accepted_key"])
                            if row.get("accepted_key")
                            else None,
                            parent_key=int(row["parent_key"])
                            if row.get("parent_key")
                            else None,
                        )
                    )
                except (ValueError, KeyError) as exc:
                    raise ConfigurationError(f"bad backbone row {row}: {exc}") from exc
        return cls.from_records(records)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["taxon_key", "scientific_name", "rank", "status", "accepted_key", "parent_key"]
            )
            for key in sorted(self.records):
                record = self.records[key]
                writer.writerow(
                    [
                        record.taxon_key,
                        record.scientific_name,
                        record.rank.value,
                        record.status.value,
                        record.accepted_key if record.accepted_key is not None else "",
                        record.parent_key if record.parent_key is not None else "",
                    ]
                )

    def validate(self) -> None:
        """Raise ConfigurationError when any backbone invariant is broken."""
        for record in self.records.values():
            if record.status is Status.SYNONYM:
                if record.accepted_key is None:
                    raise ConfigurationError(
                        f"synonym {record.taxon_key} lacks accepted_key"
                    )
                target = self.records.get(record.accepted_key)
                if target is None:
                    raise ConfigurationError(
                        f"synonym {record.taxon_key} points at missing taxon "
                        f"{record.accepted_key}"
                    )
                if target.status is not Status.ACCEPTED:
                    raise ConfigurationError(
                        f"synonym {record.taxon_key} resolves to non-accepted "
                        f"{record.accepted_key}"
                    )
                if target.rank is not record.rank:
                    raise ConfigurationError(
                        f"synonym {record.taxon_key} resolves across ranks"
                    )
            elif record.accepted_key is not None:
                raise ConfigurationError(
                    f"{record.status.value} record {record.taxon_key} must not "
                    "carry accepted_key"
                )

            if record.parent_key is not None:
                parent = self.records.get(record.parent_key)
                if parent is None:
                    raise ConfigurationError(
                        f"taxon {record.taxon_key} has missing parent {record.parent_key}"
                    )
                expected = {Rank.SPECIES: Rank.GENUS, Rank.GENUS: Rank.FAMILY}.get(record.rank)
                if expected is None:
                    raise ConfigurationError(
                        f"family {record.taxon_key} must not have a parent"
                    )
                if parent.rank is not expected:
                    raise ConfigurationError(
                        f"taxon {record.taxon_key} ({record.rank.value}) has parent of "
                        f"rank {parent.rank.value}"
                    )
            elif record.status is Status.ACCEPTED and record.rank is not Rank.FAMILY:
                raise ConfigurationError(
                    f"accepted {record.rank.value} {record.taxon_key} lacks a parent"
                )

    def get(self, key: int) -> TaxonRecord:
        record = self.records.get(key)
        if record is None:
            raise NotFoundError(f"taxon {key} not in backbone")
        return record

    def lineage(self, key: int) -> Lineage:
        """Species/genus/family keys for a taxon; synonyms map to accepted."""
        record = self.get(key)
        if record.status is Status.SYNONYM:
            record = self.get(record.accepted_key)  # type: ignore[arg-type]

        species_key = genus_key = family_key = None
        current = record
        for _ in range(3):
            if current.rank is Rank.SPECIES:
                species_key = current.taxon_key
            elif current.rank is Rank.GENUS:
                genus_key = current.taxon_key
            else:
                family_key = current.taxon_key
                if current.parent_key is not None:
                    raise DataIntegrityError(
                        f"family {current.taxon_key} has a parent"
                    )
                return Lineage(species_key, genus_key, family_key)
            if current.parent_key is None:
                raise DataIntegrityError(
                    f"broken parent chain at {current.taxon_key} "
                    f"({current.rank.value} without parent)"
                )
            parent = self.records.get(current.parent_key)
            if parent is None:
                raise DataIntegrityError(
                    f"broken parent chain: {current.taxon_key} references missing "
                    f"{current.parent_key}"
                )
            current = parent
        raise DataIntegrityError(f"parent chain from {key} does not reach a family")


def lineage(key: int, backbone: Backbone) -> Lineage:
    return backbone.lineage(key)


def rollup(
    species_probs: Mapping[int, float],
    backbone: Backbone,
    level: Rank | str,
) -> dict[int, float]:
    """Sum species confidence into each higher taxon at ``level``.

    Mass is conserved exactly up to float summation; iteration order is
    fixed (ascending taxon key) so results are reproducible bit for bit.
    """
    level = Rank(level)
    if level is Rank.SPECIES:
        raise InputError("rollup level must be genus or family")
    for key, prob in species_probs.items():
        if prob < 0:
            raise InputError(f"negative probability for taxon {key}")

    out: dict[int, float] = {}
    for key in sorted(species_probs):
        try:
            lin = backbone.lineage(key)
        except NotFoundError as exc:
            raise DataIntegrityError(f"taxon {key} not in backbone") from exc
        target = lin.genus_key if level is Rank.GENUS else lin.family_key
        if target is None:
            raise DataIntegrityError(
                f"taxon {key} has no {level.value} in its lineage"
            )
        out[target] = out.get(target, 0.0) + species_probs[key]
    return out


def normalize_checklist(
    raw_names: Iterable[str],
    backbone: Backbone,
    fuzzy_threshold: float = 0.90,
) -> list[ChecklistEntry]:
    """Resolve raw checklist names against the backbone, in input order.

    Per name, in priority order: exact accepted match, exact synonym
    match (merged into the accepted name), exact doubtful match, unique
    fuzzy candidate at or above the threshold (flagged, never resolved),
    otherwise unmatched. A name resolving to an already-emitted key is
    flagged duplicate_removed; the first occurrence wins.
    """
    entries: list[ChecklistEntry] = []
    emitted: dict[int, tuple[int, str]] = {}

    for raw in raw_names:
        normalized = normalize_name(raw)
        candidates = [backbone.records[k] for k in backbone.name_index.get(normalized, [])]
        by_status = {status: [] for status in Status}
        for record in candidates:
            by_status[record.status].append(record)

        resolution: Resolution
        resolved_key: int | None = None
        note = ""

        if by_status[Status.ACCEPTED]:
            record = by_status[Status.ACCEPTED][0]
            resolution = Resolution.ACCEPTED
            resolved_key = record.taxon_key
        elif by_status[Status.SYNONYM]:
            record = by_status[Status.SYNONYM][0]
            accepted = backbone.get(record.accepted_key)  # type: ignore[arg-type]
            resolution = Resolution.MERGED_SYNONYM
            resolved_key = accepted.taxon_key
            note = f"synonym of '{accepted.scientific_name}'"
        elif by_status[Status.DOUBTFUL]:
            record = by_status[Status.DOUBTFUL][0]
            resolution = Resolution.DOUBTFUL
            note = f"doubtful taxon {record.taxon_key}"
        else:
            fuzzy = _fuzzy_candidates(normalized, backbone, fuzzy_threshold)
            if len(fuzzy) == 1:
                resolution = Resolution.FUZZY
                note = fuzzy[0].scientific_name
            elif fuzzy:
                resolution = Resolution.UNMATCHED
                names = ", ".join(sorted(r.scientific_name for r in fuzzy))
                note = f"ambiguous fuzzy candidates: {names}"
            else:
                resolution = Resolution.UNMATCHED

        if resolved_key is not None and resolved_key in emitted:
            index, earlier = emitted[resolved_key]
            note = (
                f"duplicate of entry {index} ('{earlier}', taxon {resolved_key}) "
                f"via {resolution.value}"
            )
            resolution = Resolution.DUPLICATE_REMOVED
            resolved_key = None
        elif resolved_key is not None:
            emitted[resolved_key] = (len(entries), raw)

        entries.append(
            ChecklistEntry(
                input_name=raw,
                resolution=resolution,
                resolved_key=resolved_key,
                note=note,
            )
        )
    return entries


def _fuzzy_candidates(
    normalized: str, backbone: Backbone, threshold: float
) -> list[TaxonRecord]:
    """Distinct taxa whose normalized name is within the similarity gate."""
    if not normalized or threshold > 1.0:
        return []
    budget = (1.0 - threshold) * max(len(normalized), 1)
    matches: list[TaxonRecord] = []
    seen: set[int] = set()
    for name, keys in backbone.name_index.items():
        if abs(len(name) - len(normalized)) > budget:
            continue
        if similarity(normalized, name) >= threshold:
            for key in keys:
                record = backbone.records[key]
                if record.status is Status.SYNONYM and record.accepted_key is not None:
                    record = backbone.records[record.accepted_key]
                if record.taxon_key not in seen:
                    seen.add(record.taxon_key)
                    matches.append(record)
    return sorted(matches, key=lambda r: r.taxon_key)


def read_checklist(path: str | Path) -> list[str]:
    """Checklist input: one name per line, or a CSV with a
    ``scientificName`` column."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            column = None
            for name in reader.fieldnames or []:
                if name.strip().casefold() == "scientificname":
                    column = name
                    break
            if column is None:
                raise ConfigurationError(
                    f"{path} has no scientificName column"
                )
            return [row[column].strip() for row in reader if row.get(column, "").strip()]
    with open(path, encoding="utf-8") as handle:
        return [line.strip() for line in handle if line.strip()]


def write_processed_checklist(
    entries: Iterable[ChecklistEntry],
    backbone: Backbone,
    path: str | Path,
) -> None:
    """Processed checklist CSV: input_name, resolution, resolved_key,
    accepted_name, genus, family, note."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["input_name", "resolution", "resolved_key", "accepted_name", "genus", "family", "note"]
        )
        for entry in entries:
            accepted_name = genus = family = ""
            if entry.resolved_key is not None:
                record = backbone.get(entry.resolved_key)
                accepted_name = record.scientific_name
                lin = backbone.lineage(entry.resolved_key)
                if lin.genus_key is not None:
                    genus = backbone.get(lin.genus_key).scientific_name
                if lin.family_key is not None:
                    family = backbone.get(lin.family_key).scientific_name
            writer.writerow(
                [
                    entry.input_name,
                    entry.resolution.value,
                    entry.resolved_key if entry.resolved_key is not None else "",
                    accepted_name,
                    genus,
                    family,
                    entry.note,
                ]
            )
