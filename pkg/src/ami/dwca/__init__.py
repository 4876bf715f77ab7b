"""Darwin Core Archive ingestion, media cleaning, and training export."""

from ami.dwca.archive import (
    ArchiveDescriptor,
    MediaRecord,
    MediaVerdict,
    OccurrenceRecord,
    ParsedArchive,
    TableSpec,
    parse_archive,
    read_media_jsonl,
    read_occurrences_jsonl,
    serialize_archive,
    write_records_jsonl,
)
from ami.dwca.clean import CleaningRules, clean_media
from ami.dwca.export import (
    ManifestRow,
    RejectedRecord,
    export_training_set,
    write_manifest,
)
from ami.dwca.fetch import FetchSummary, cache_object_path, fetch_media

__all__ = [
    "ArchiveDescriptor",
    "MediaRecord",
    "MediaVerdict",
    "OccurrenceRecord",
    "ParsedArchive",
    "TableSpec",
    "parse_archive",
    "serialize_archive",
    "read_media_jsonl",
    "read_occurrences_jsonl",
    "write_records_jsonl",
    "CleaningRules",
    "clean_media",
    "ManifestRow",
    "RejectedRecord",
    "export_training_set",
    "write_manifest",
    "FetchSummary",
    "cache_object_path",
    "fetch_media",
]
