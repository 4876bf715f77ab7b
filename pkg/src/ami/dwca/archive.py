"""Darwin Core Archive reading and writing.

An archive is a zip holding a ``meta.xml`` descriptor plus delimited
text tables: one core table (occurrences here) and keyed extensions
(multimedia). Only the terms the engine consumes are typed; every other
declared column passes through verbatim so parse -> serialize -> parse
is a fixed point.
"""

from __future__ import annotations

import codecs
import csv
import enum
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable
from xml.etree import ElementTree

from ami.errors import ParseError

__all__ = [
    "TableSpec",
    "ArchiveDescriptor",
    "OccurrenceRecord",
    "MediaRecord",
    "MediaVerdict",
    "ParsedArchive",
    "parse_archive",
    "serialize_archive",
    "write_records_jsonl",
    "read_occurrences_jsonl",
    "read_media_jsonl",
]

OCCURRENCE_ROW_TYPE = "http://rs.tdwg.org/dwc/terms/Occurrence"
MULTIMEDIA_ROW_TYPE = "http://rs.gbif.org/terms/1.0/Multimedia"

_OCCURRENCE_TERMS = {
    "occurrenceID": "occurrence_id",
    "taxonKey": "taxon_key",
    "lifeStage": "life_stage",
    "datasetKey": "dataset_key",
    "decimalLatitude": "lat",
    "decimalLongitude": "lon",
    "publisher": "publisher",
}
_MEDIA_URL_TERMS = ("identifier", "accessURI")


def _local(term: str) -> str:
    return term.rstrip("/").rsplit("/", 1)[-1].rsplit("#", 1)[-1]


@dataclass(frozen=True)
class TableSpec:
    location: str
    row_type: str
    delimiter: str = "\t"
    quote_char: str = ""
    ignore_header_lines: int = 1
    id_index: int | None = 0
    fields: dict[int, str] = field(default_factory=dict)
    encoding: str = "utf-8"

    def column_count(self) -> int:
        indexes = list(self.fields)
        if self.id_index is not None:
            indexes.append(self.id_index)
        return max(indexes) + 1 if indexes else 0


@dataclass(frozen=True)
class ArchiveDescriptor:
    core: TableSpec
    extensions: list[TableSpec] = field(default_factory=list)


class MediaVerdict(str, enum.Enum):
    KEPT = "kept"
    DUPLICATE = "duplicate"
    THUMBNAIL = "thumbnail"
    NON_ADULT = "non_adult"
    BLACKLISTED_DATASET = "blacklisted_dataset"
    FETCH_FAILED = "fetch_failed"
    UNREVIEWED = "unreviewed"


@dataclass(frozen=True)
class OccurrenceRecord:
    occurrence_id: str
    taxon_key: int
    life_stage: str | None = None
    dataset_key: str = ""
    location: tuple[float, float] | None = None
    publisher: str | None = None
    extras: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "occurrence_id": self.occurrence_id,
            "taxon_key": self.taxon_key,
            "life_stage": self.life_stage,
            "dataset_key": self.dataset_key,
            "location": list(self.location) if self.location else None,
            "publisher": self.publisher,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "OccurrenceRecord":
        return cls(
            occurrence_id=data["occurrence_id"],
            taxon_key=data["taxon_key"],
            life_stage=data.get("life_stage"),
            dataset_key=data.get("dataset_key", ""),
            location=tuple(data["location"]) if data.get("location") else None,
            publisher=data.get("publisher"),
            extras=data.get("extras", {}),
        )


@dataclass(frozen=True)
class MediaRecord:
    occurrence_id: str
    url: str
    content_hash: str | None = None
    width: int | None = None
    height: int | None = None
    verdict: MediaVerdict = MediaVerdict.UNREVIEWED
    note: str = ""
    extras: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "occurrence_id": self.occurrence_id,
            "url": self.url,
            "content_hash": self.content_hash,
            "width": self.width,
            "height": self.height,
            "verdict": self.verdict.value,
            "note": self.note,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MediaRecord":
        return cls(
            occurrence_id=data["occurrence_id"],
            url=data["url"],
            content_hash=data.get("content_hash"),
            width=data.get("width"),
            height=data.get("height"),
            verdict=MediaVerdict(data.get("verdict", "unreviewed")),
            note=data.get("note", ""),
            extras=data.get("extras", {}),
        )


@dataclass
class ParsedArchive:
    descriptor: ArchiveDescriptor
    occurrences: list[OccurrenceRecord]
    media: list[MediaRecord]
    warnings: list[str] = field(default_factory=list)
    unmatched_extension_rows: int = 0


def _unescape_delimiter(raw: str) -> str:
    if raw == "":
        return raw
    value = codecs.decode(raw, "unicode_escape")
    return value


def _parse_table_spec(element: ElementTree.Element, is_core: bool) -> TableSpec:
    location = element.findtext("files/location")
    if not location:
        raise ParseError("table declaration lacks <files><location>")
    delimiter = _unescape_delimiter(element.get("fieldsTerminatedBy", "\\t"))
    if len(delimiter) != 1:
        raise ParseError(f"delimiter must be a single character, got {delimiter!r}")
    quote_char = element.get("fieldsEnclosedBy", "")
    id_tag = element.find("id" if is_core else "coreid")
    id_index = None
    if id_tag is not None and id_tag.get("index") is not None:
        id_index = int(id_tag.get("index"))  # type: ignore[arg-type]
    if not is_core and id_index is None:
        raise ParseError(f"extension {location} lacks a <coreid> column")
    fields = {}
    for f in element.findall("field"):
        index = f.get("index")
        term = f.get("term")
        if index is None or term is None:
            continue
        fields[int(index)] = term
    return TableSpec(
        location=location,
        row_type=element.get("rowType", ""),
        delimiter=delimiter,
        quote_char=quote_char,
        ignore_header_lines=int(element.get("ignoreHeaderLines", "0")),
        id_index=id_index,
        fields=fields,
        encoding=element.get("encoding", "utf-8"),
    )


def parse_descriptor(data: bytes) -> ArchiveDescriptor:
    try:
        root = ElementTree.fromstring(data)
    except ElementTree.ParseError as exc:
        line, column = exc.position
        offset = _byte_offset(data, line, column)
        raise ParseError(
            f"invalid meta.xml at line {line}, column {column} (byte offset {offset}): {exc}"
        ) from exc
    # tolerate namespaced and namespace-free descriptors alike
    for element in root.iter():
        element.tag = element.tag.rsplit("}", 1)[-1]
    if root.tag != "archive":
        raise ParseError(f"meta.xml root must be <archive>, got <{root.tag}>")
    cores = root.findall("core")
    if len(cores) != 1:
        raise ParseError(f"archive must declare exactly one core, found {len(cores)}")
    core = _parse_table_spec(cores[0], is_core=True)
    extensions = [_parse_table_spec(e, is_core=False) for e in root.findall("extension")]
    return ArchiveDescriptor(core=core, extensions=extensions)


def _byte_offset(data: bytes, line: int, column: int) -> int:
    lines = data.split(b"\n")
    return sum(len(l) + 1 for l in lines[: line - 1]) + column


def _iter_rows(text: str, spec: TableSpec, warnings: list[str]) -> Iterable[list[str]]:
    expected = spec.column_count()
    if spec.quote_char:
        reader = csv.reader(
            io.StringIO(text), delimiter=spec.delimiter, quotechar=spec.quote_char
        )
        rows = list(reader)
    else:
        rows = [line.split(spec.delimiter) for line in text.splitlines()]
    for number, row in enumerate(rows):
        if number < spec.ignore_header_lines:
            continue
        if not row or (len(row) == 1 and row[0] == ""):
            continue
        if len(row) < expected:
            warnings.append(
                f"{spec.location}: row {number + 1} has {len(row)} columns, "
                f"expected {expected}; skipped"
            )
            continue
        yield row


def _build_occurrence(
    row: list[str], spec: TableSpec, warnings: list[str]
) -> OccurrenceRecord | None:
    values: dict[str, str] = {}
    extras: dict[str, str] = {}
    for index, term in spec.fields.items():
        local = _local(term)
        if local in _OCCURRENCE_TERMS:
            values[_OCCURRENCE_TERMS[local]] = row[index]
        else:
            extras[term] = row[index]
    occurrence_id = values.get("occurrence_id") or (
        row[spec.id_index] if spec.id_index is not None else ""
    )
    if not occurrence_id:
        warnings.append(f"{spec.location}: row without an occurrence id skipped")
        return None
    try:
        taxon_key = int(values.get("taxon_key", ""))
    except ValueError:
        warnings.append(
            f"{spec.location}: occurrence {occurrence_id} has no valid taxonKey; skipped"
        )
        return None
    location = None
    lat_raw, lon_raw = values.get("lat", ""), values.get("lon", "")
    if lat_raw and lon_raw:
        try:
            lat, lon = float(lat_raw), float(lon_raw)
            if -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0:
                location = (lat, lon)
            else:
                warnings.append(
                    f"{spec.location}: occurrence {occurrence_id} coordinates out of "
                    f"range ({lat_raw}, {lon_raw}); dropped"
                )
        except ValueError:
            warnings.append(
                f"{spec.location}: occurrence {occurrence_id} has unparseable "
                "coordinates; dropped"
            )
    return OccurrenceRecord(
        occurrence_id=occurrence_id,
        taxon_key=taxon_key,
        life_stage=values.get("life_stage") or None,
        dataset_key=values.get("dataset_key", ""),
        location=location,
        publisher=values.get("publisher") or None,
        extras=extras,
    )


def _build_media(row: list[str], spec: TableSpec, warnings: list[str]) -> MediaRecord | None:
    occurrence_id = row[spec.id_index] if spec.id_index is not None else ""
    url = ""
    extras: dict[str, str] = {}
    for index, term in spec.fields.items():
        local = _local(term)
        if local in _MEDIA_URL_TERMS and not url:
            url = row[index]
        else:
            extras[term] = row[index]
    if not url:
        warnings.append(f"{spec.location}: media row for {occurrence_id} lacks a URL; skipped")
        return None
    return MediaRecord(occurrence_id=occurrence_id, url=url, extras=extras)


def parse_archive(archive_path: str | Path) -> ParsedArchive:
    """Parse a DwC-A zip into occurrence and media records.

    Media rows are joined to occurrences via the extension's core-id
    column; rows referencing unknown occurrences are counted, not fatal.
    Malformed rows are skipped with a warning. A missing or invalid
    meta.xml, or a missing core table, is a ParseError.
    """
    path = Path(archive_path)
    try:
        bundle = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise ParseError(f"cannot open archive {path}: {exc}") from exc

    with bundle:
        names = set(bundle.namelist())
        if "meta.xml" not in names:
            raise ParseError(f"{path} lacks meta.xml")
        descriptor = parse_descriptor(bundle.read("meta.xml"))
        if descriptor.core.location not in names:
            raise ParseError(f"core file {descriptor.core.location} missing from {path}")

        warnings: list[str] = []
        core_text = bundle.read(descriptor.core.location).decode(descriptor.core.encoding)
        occurrences: list[OccurrenceRecord] = []
        seen_ids: set[str] = set()
        for row in _iter_rows(core_text, descriptor.core, warnings):
            record = _build_occurrence(row, descriptor.core, warnings)
            if record is None:
                continue
            if record.occurrence_id in seen_ids:
                warnings.append(
                    f"duplicate occurrence id {record.occurrence_id}; later row skipped"
                )
                continue
            seen_ids.add(record.occurrence_id)
            occurrences.append(record)

        media: list[MediaRecord] = []
        unmatched = 0
        for extension in descriptor.extensions:
            if extension.location not in names:
                warnings.append(f"extension file {extension.location} missing; skipped")
                continue
            text = bundle.read(extension.location).decode(extension.encoding)
            for row in _iter_rows(text, extension, warnings):
                record = _build_media(row, extension, warnings)
                if record is None:
                    continue
                if record.occurrence_id not in seen_ids:
                    unmatched += 1
                    continue
                media.append(record)

    return ParsedArchive(
        descriptor=descriptor,
        occurrences=occurrences,
        media=media,
        warnings=warnings,
        unmatched_extension_rows=unmatched,
    )


def _escape_delimiter(value: str) -> str:
    return value.encode("unicode_escape").decode("ascii")


def _descriptor_xml(descriptor: ArchiveDescriptor) -> bytes:
    root = ElementTree.Element("archive")

    def table_element(tag: str, spec: TableSpec) -> ElementTree.Element:
        el = ElementTree.SubElement(
            root,
            tag,
            {
                "rowType": spec.row_type,
                "encoding": spec.encoding,
                "fieldsTerminatedBy": _escape_delimiter(spec.delimiter),
                "fieldsEnclosedBy": spec.quote_char,
                "linesTerminatedBy": "\\n",
                "ignoreHeaderLines": str(spec.ignore_header_lines),
            },
        )
        files = ElementTree.SubElement(el, "files")
        ElementTree.SubElement(files, "location").text = spec.location
        if spec.id_index is not None:
            ElementTree.SubElement(
                el, "id" if tag == "core" else "coreid", {"index": str(spec.id_index)}
            )
        for index in sorted(spec.fields):
            ElementTree.SubElement(
                el, "field", {"index": str(index), "term": spec.fields[index]}
            )
        return el

    table_element("core", descriptor.core)
    for extension in descriptor.extensions:
        table_element("extension", extension)
    return ElementTree.tostring(root, encoding="utf-8", xml_declaration=True)


def _format_float(value: float) -> str:
    return repr(value)


def _occurrence_row(record: OccurrenceRecord, spec: TableSpec) -> list[str]:
    row = [""] * spec.column_count()
    for index, term in spec.fields.items():
        local = _local(term)
        if local == "occurrenceID":
            row[index] = record.occurrence_id
        elif local == "taxonKey":
            row[index] = str(record.taxon_key)
        elif local == "lifeStage":
            row[index] = record.life_stage or ""
        elif local == "datasetKey":
            row[index] = record.dataset_key
        elif local == "decimalLatitude":
            row[index] = _format_float(record.location[0]) if record.location else ""
        elif local == "decimalLongitude":
            row[index] = _format_float(record.location[1]) if record.location else ""
        elif local == "publisher":
            row[index] = record.publisher or ""
        else:
            row[index] = record.extras.get(term, "")
    if spec.id_index is not None and spec.id_index not in spec.fields:
        row[spec.id_index] = record.occurrence_id
    return row


def _media_row(record: MediaRecord, spec: TableSpec) -> list[str]:
    row = [""] * spec.column_count()
    url_written = False
    for index, term in spec.fields.items():
        local = _local(term)
        if local in _MEDIA_URL_TERMS and not url_written:
            row[index] = record.url
            url_written = True
        else:
            row[index] = record.extras.get(term, "")
    if spec.id_index is not None:
        row[spec.id_index] = record.occurrence_id
    return row


def _render_table(rows: list[list[str]], spec: TableSpec) -> str:
    buffer = io.StringIO()
    if spec.quote_char:
        writer = csv.writer(
            buffer,
            delimiter=spec.delimiter,
            quotechar=spec.quote_char,
            quoting=csv.QUOTE_MINIMAL,
            lineterminator="\n",
        )
        write_row = writer.writerow
    else:

        def write_row(row: list[str]) -> None:
            buffer.write(spec.delimiter.join(row) + "\n")

    if spec.ignore_header_lines:
        header = [""] * spec.column_count()
        for index, term in spec.fields.items():
            header[index] = _local(term)
        if spec.id_index is not None and spec.id_index not in spec.fields:
            header[spec.id_index] = "id"
        write_row(header)
        for _ in range(spec.ignore_header_lines - 1):
            write_row([""] * spec.column_count())
    for row in rows:
        write_row(row)
    return buffer.getvalue()


def serialize_archive(
    descriptor: ArchiveDescriptor,
    occurrences: list[OccurrenceRecord],
    media: list[MediaRecord],
    archive_path: str | Path,
) -> None:
    """Write records back out as a DwC-A zip under the given descriptor."""
    core_rows = [_occurrence_row(record, descriptor.core) for record in occurrences]
    with zipfile.ZipFile(archive_path, "w", zipfile.ZIP_DEFLATED) as bundle:

        def write(name: str, data: bytes | str) -> None:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            bundle.writestr(info, data)

        write("meta.xml", _descriptor_xml(descriptor))
        write(
            descriptor.core.location,
            _render_table(core_rows, descriptor.core).encode(descriptor.core.encoding),
        )
        for extension in descriptor.extensions:
            if _local(extension.row_type) != _local(MULTIMEDIA_ROW_TYPE):
                rows: list[list[str]] = []
            else:
                rows = [_media_row(record, extension) for record in media]
            write(
                extension.location,
                _render_table(rows, extension).encode(extension.encoding),
            )


def write_records_jsonl(records: Iterable[Any], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def read_occurrences_jsonl(path: str | Path) -> list[OccurrenceRecord]:
    with open(path, encoding="utf-8") as handle:
        return [OccurrenceRecord.from_dict(json.loads(line)) for line in handle if line.strip()]


def read_media_jsonl(path: str | Path) -> list[MediaRecord]:
    with open(path, encoding="utf-8") as handle:
        return [MediaRecord.from_dict(json.loads(line)) for line in handle if line.strip()]
