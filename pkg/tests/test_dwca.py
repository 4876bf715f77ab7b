"""Archive parsing/round-trip, media fetch cache, cleaning, capped export."""

from __future__ import annotations

import zipfile
from dataclasses import replace

import pytest

from ami.dwca import (
    CleaningRules,
    MediaRecord,
    MediaVerdict,
    OccurrenceRecord,
    clean_media,
    export_training_set,
    fetch_media,
    parse_archive,
    serialize_archive,
    write_manifest,
)
from ami.errors import ParseError

from conftest import (
    build_archive,
    image_bytes,
    standard_media_rows,
    standard_occurrence_rows,
)


class TestParseArchive:
    def test_fixture_archive(self, fixture_archive):
        parsed = parse_archive(fixture_archive)
        assert len(parsed.occurrences) == 2
        assert len(parsed.media) == 3
        occ1 = parsed.occurrences[0]
        assert occ1.occurrence_id == "occ1"
        assert occ1.taxon_key == 1
        assert occ1.life_stage == "adult"
        assert occ1.dataset_key == "ds-a"
        assert occ1.location == (45.5, -73.6)
        assert occ1.publisher == "Museum A"
        assert occ1.extras["http://rs.tdwg.org/dwc/terms/recordedBy"] == "observer-1"
        assert parsed.media[0].url == "http://example.test/a.jpg"
        assert parsed.media[0].verdict is MediaVerdict.UNREVIEWED

    def test_empty_extension(self, tmp_path):
        archive = build_archive(tmp_path / "a.zip", standard_occurrence_rows(), [])
        parsed = parse_archive(archive)
        assert len(parsed.occurrences) == 2
        assert parsed.media == []

    def test_missing_meta_xml(self, tmp_path):
        path = tmp_path / "bad.zip"
        with zipfile.ZipFile(path, "w") as bundle:
            bundle.writestr("occurrence.txt", "data\n")
        with pytest.raises(ParseError):
            parse_archive(path)

    def test_invalid_meta_xml_reports_offset(self, tmp_path):
        path = tmp_path / "bad.zip"
        with zipfile.ZipFile(path, "w") as bundle:
            bundle.writestr("meta.xml", "<archive><core></archive>")
        with pytest.raises(ParseError) as err:
            parse_archive(path)
        assert "byte offset" in str(err.value)

    def test_wrong_column_count_skips_row(self, tmp_path):
        rows = standard_occurrence_rows()
        rows.append(["occ3", "occ3"])  # truncated row
        archive = build_archive(tmp_path / "a.zip", rows, standard_media_rows())
        parsed = parse_archive(archive)
        assert len(parsed.occurrences) == 2
        assert any("row" in w and "skipped" in w for w in parsed.warnings)

    def test_unmatched_extension_rows_counted(self, tmp_path):
        media = standard_media_rows()
        media.append(["occ999", "http://example.test/x.jpg", "image/jpeg"])
        archive = build_archive(tmp_path / "a.zip", standard_occurrence_rows(), media)
        parsed = parse_archive(archive)
        assert parsed.unmatched_extension_rows == 1
        assert len(parsed.media) == 3

    def test_out_of_range_coordinates_dropped(self, tmp_path):
        rows = standard_occurrence_rows()
        rows[0][5] = "123.0"  # latitude beyond 90
        archive = build_archive(tmp_path / "a.zip", rows, [])
        parsed = parse_archive(archive)
        assert parsed.occurrences[0].location is None
        assert any("out of range" in w for w in parsed.warnings)

    @pytest.mark.parametrize(
        "delimiter,quote,header",
        [("\t", "", 1), (",", '"', 1), ("\t", "", 0)],
    )
    def test_roundtrip_fixed_point(self, tmp_path, delimiter, quote, header):
        archive = build_archive(
            tmp_path / "a.zip",
            standard_occurrence_rows(),
            standard_media_rows(),
            delimiter=delimiter,
            quote=quote,
            header_lines=header,
        )
        first = parse_archive(archive)
        out = tmp_path / "b.zip"
        serialize_archive(first.descriptor, first.occurrences, first.media, out)
        second = parse_archive(out)
        assert second.occurrences == first.occurrences
        assert second.media == first.media
        out2 = tmp_path / "c.zip"
        serialize_archive(second.descriptor, second.occurrences, second.media, out2)
        assert parse_archive(out2).occurrences == first.occurrences

    def test_quoted_delimiter_in_value(self, tmp_path):
        rows = standard_occurrence_rows()
        rows[0][7] = "Museum A, North Wing"
        archive = build_archive(
            tmp_path / "a.zip", rows, [], delimiter=",", quote='"', header_lines=1
        )
        parsed = parse_archive(archive)
        assert parsed.occurrences[0].publisher == "Museum A, North Wing"


class TestFetchMedia:
    def make_records(self, urls):
        return [
            MediaRecord(occurrence_id=f"occ{i}", url=url) for i, url in enumerate(urls)
        ]

    def test_fetch_populates_hash_and_dimensions(self, tmp_path, stub_server):
        url = stub_server.add("/a.jpg", image_bytes(200, 160))
        records, summary = fetch_media(self.make_records([url]), tmp_path)
        assert summary.downloaded == 1
        record = records[0]
        assert record.content_hash is not None
        assert (record.width, record.height) == (200, 160)
        assert record.verdict is MediaVerdict.UNREVIEWED

    def test_rerun_is_noop(self, tmp_path, stub_server):
        url = stub_server.add("/a.jpg", image_bytes(64, 64))
        first, _ = fetch_media(self.make_records([url]), tmp_path)
        hits_before = len(stub_server.hits)
        second, summary = fetch_media(self.make_records([url]), tmp_path)
        assert len(stub_server.hits) == hits_before  # zero network calls
        assert summary.downloaded == 0
        assert summary.cache_hits == 1
        assert second == first

    def test_identical_bytes_share_cache_file(self, tmp_path, stub_server):
        payload = image_bytes(80, 80)
        url_a = stub_server.add("/a.jpg", payload)
        url_b = stub_server.add("/b.jpg", payload)
        records, _ = fetch_media(self.make_records([url_a, url_b]), tmp_path)
        assert records[0].content_hash == records[1].content_hash
        objects = list((tmp_path / "objects").iterdir())
        assert len(objects) == 1

    def test_non_image_bytes_fail_after_decode(self, tmp_path, stub_server):
        url = stub_server.add("/junk.jpg", b"this is not an image")
        records, summary = fetch_media(self.make_records([url]), tmp_path)
        assert records[0].verdict is MediaVerdict.FETCH_FAILED
        assert "decode failed" in records[0].note
        assert summary.failed == 1

    def test_http_error_retries_then_fails(self, tmp_path, stub_server):
        url = stub_server.add("/missing.jpg", b"", status=404)
        records, _ = fetch_media(self.make_records([url]), tmp_path, retries=1)
        assert records[0].verdict is MediaVerdict.FETCH_FAILED
        assert len(stub_server.hits) == 2  # initial try plus one retry

    def test_failures_cached_negative(self, tmp_path, stub_server):
        url = stub_server.add("/bad.jpg", b"nope")
        fetch_media(self.make_records([url]), tmp_path)
        hits = len(stub_server.hits)
        records, _ = fetch_media(self.make_records([url]), tmp_path)
        assert len(stub_server.hits) == hits
        assert records[0].verdict is MediaVerdict.FETCH_FAILED


def occurrence(occurrence_id, taxon_key, life_stage=None, dataset_key="ds"):
    return OccurrenceRecord(
        occurrence_id=occurrence_id,
        taxon_key=taxon_key,
        life_stage=life_stage,
        dataset_key=dataset_key,
    )


def fetched(occurrence_id, url, content_hash, width=400, height=300):
    return MediaRecord(
        occurrence_id=occurrence_id,
        url=url,
        content_hash=content_hash,
        width=width,
        height=height,
    )


class TestCleanMedia:
    def test_non_adult_removed(self):
        occurrences = [occurrence("occ1", 1, life_stage="larva")]
        media = [fetched("occ1", "u1", "h1")]
        cleaned, summary = clean_media(
            occurrences, media, CleaningRules(adult_stages=frozenset({"adult", "imago"}))
        )
        assert cleaned[0].verdict is MediaVerdict.NON_ADULT
        assert summary == {"non_adult": 1}

    def test_duplicate_second_occurrence(self):
        occurrences = [occurrence("occ1", 1, "adult"), occurrence("occ2", 2, "adult")]
        media = [fetched("occ1", "u1", "same"), fetched("occ2", "u2", "same")]
        cleaned, _ = clean_media(occurrences, media, CleaningRules())
        assert cleaned[0].verdict is MediaVerdict.KEPT
        assert cleaned[1].verdict is MediaVerdict.DUPLICATE

    def test_duplicate_representative_is_smallest_occurrence_id(self):
        occurrences = [occurrence("occ1", 1, "adult"), occurrence("occ2", 2, "adult")]
        media = [fetched("occ2", "u2", "same"), fetched("occ1", "u1", "same")]
        cleaned, _ = clean_media(occurrences, media, CleaningRules())
        # input order preserved, but occ1 is the kept representative
        assert cleaned[0].verdict is MediaVerdict.DUPLICATE
        assert cleaned[1].verdict is MediaVerdict.KEPT

    def test_thumbnail(self):
        occurrences = [occurrence("occ1", 1, "adult")]
        media = [fetched("occ1", "u1", "h1", width=90, height=60)]
        cleaned, _ = clean_media(
            occurrences, media, CleaningRules(thumbnail_min_px=128)
        )
        assert cleaned[0].verdict is MediaVerdict.THUMBNAIL

    def test_blacklist_wins_over_everything(self):
        occurrences = [occurrence("occ1", 1, life_stage="larva", dataset_key="bad-ds")]
        media = [fetched("occ1", "u1", "h1", width=10, height=10)]
        cleaned, _ = clean_media(
            occurrences,
            media,
            CleaningRules(dataset_blacklist=frozenset({"bad-ds"})),
        )
        assert cleaned[0].verdict is MediaVerdict.BLACKLISTED_DATASET

    def test_missing_life_stage_kept_for_review(self):
        occurrences = [occurrence("occ1", 1, life_stage=None)]
        media = [fetched("occ1", "u1", "h1")]
        cleaned, _ = clean_media(occurrences, media, CleaningRules())
        assert cleaned[0].verdict is MediaVerdict.KEPT
        assert "needs_review" in cleaned[0].note

    def test_missing_life_stage_routed_to_classifier(self):
        occurrences = [occurrence("occ1", 1), occurrence("occ2", 2)]
        media = [fetched("occ1", "u1", "h1"), fetched("occ2", "u2", "h2")]
        stages = {"u1": "larva", "u2": "adult"}
        cleaned, _ = clean_media(
            occurrences,
            media,
            CleaningRules(),
            life_stage_classifier=lambda record: stages[record.url],
        )
        assert cleaned[0].verdict is MediaVerdict.NON_ADULT
        assert cleaned[1].verdict is MediaVerdict.KEPT

    def test_fetch_failed_passes_through(self):
        occurrences = [occurrence("occ1", 1, "adult")]
        media = [
            replace(fetched("occ1", "u1", None), verdict=MediaVerdict.FETCH_FAILED)
        ]
        cleaned, summary = clean_media(occurrences, media, CleaningRules())
        assert cleaned[0].verdict is MediaVerdict.FETCH_FAILED
        assert summary == {"fetch_failed": 1}

    def test_partition_property(self):
        occurrences = [
            occurrence("occ1", 1, "adult"),
            occurrence("occ2", 2, "larva"),
            occurrence("occ3", 3, "adult", dataset_key="bad"),
            occurrence("occ4", 4, "adult"),
        ]
        media = [
            fetched("occ1", "u1", "h1"),
            fetched("occ2", "u2", "h2"),
            fetched("occ3", "u3", "h3"),
            fetched("occ4", "u4", "h1"),
            fetched("occ4", "u5", "h5", width=20, height=20),
        ]
        cleaned, summary = clean_media(
            occurrences, media, CleaningRules(dataset_blacklist=frozenset({"bad"}))
        )
        assert len(cleaned) == len(media)
        assert sum(summary.values()) == len(media)
        assert all(r.verdict is not MediaVerdict.UNREVIEWED for r in cleaned)


class TestExportTrainingSet:
    def make_kept(self, taxon_key, count, start=0):
        occurrences = []
        media = []
        for i in range(start, start + count):
            occ_id = f"occ-{taxon_key}-{i:04d}"
            occurrences.append(occurrence(occ_id, taxon_key, "adult"))
            media.append(
                replace(
                    fetched(occ_id, f"http://x/{taxon_key}/{i}.jpg", f"hash-{taxon_key}-{i:04d}"),
                    verdict=MediaVerdict.KEPT,
                )
            )
        return occurrences, media

    def test_under_cap_keeps_all(self, tmp_path):
        occurrences, media = self.make_kept(1, 3)
        rows, rejects = export_training_set(
            occurrences, media, [1], tmp_path, cap_per_species=1000, seed=5
        )
        assert len(rows) == 3
        assert rejects == []

    def test_cap_enforced_exactly(self, tmp_path):
        occurrences, media = self.make_kept(1, 15)
        rows, _ = export_training_set(
            occurrences, media, [1], tmp_path, cap_per_species=10, seed=5
        )
        assert len(rows) == 10
        hashes = [r.content_hash for r in rows]
        assert hashes == sorted(hashes)

    def test_same_seed_byte_identical(self, tmp_path):
        occurrences, media = self.make_kept(1, 30)
        occurrences2, media2 = self.make_kept(2, 8)
        occurrences += occurrences2
        media += media2
        paths = []
        for name in ("m1.csv", "m2.csv"):
            rows, _ = export_training_set(
                occurrences, media, [1, 2], tmp_path, cap_per_species=12, seed=99
            )
            out = tmp_path / name
            write_manifest(rows, out)
            paths.append(out)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_different_seed_different_sample(self, tmp_path):
        occurrences, media = self.make_kept(1, 30)
        rows_a, _ = export_training_set(occurrences, media, [1], tmp_path, 5, seed=1)
        rows_b, _ = export_training_set(occurrences, media, [1], tmp_path, 5, seed=2)
        assert [r.content_hash for r in rows_a] != [r.content_hash for r in rows_b]

    def test_no_cap_is_identity(self, tmp_path):
        occurrences, media = self.make_kept(1, 7)
        rows, _ = export_training_set(
            occurrences, media, [1], tmp_path, cap_per_species=None, seed=0
        )
        assert len(rows) == 7

    def test_species_off_checklist_rejected(self, tmp_path):
        occurrences, media = self.make_kept(42, 2)
        rows, rejects = export_training_set(occurrences, media, [1], tmp_path)
        assert rows == []
        assert len(rejects) == 2
        assert all(r.taxon_key == 42 for r in rejects)

    def test_sorted_by_taxon_then_hash(self, tmp_path):
        occ_b, media_b = self.make_kept(2, 4)
        occ_a, media_a = self.make_kept(1, 4)
        rows, _ = export_training_set(
            occ_b + occ_a, media_b + media_a, [1, 2], tmp_path
        )
        keys = [(r.taxon_key, r.content_hash) for r in rows]
        assert keys == sorted(keys)
