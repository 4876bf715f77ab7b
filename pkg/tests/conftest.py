"""Shared fixtures: hand-built DwC-A archives, a stub HTTP server, and
tiny raster factories."""

from __future__ import annotations

import io
import threading
import zipfile
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from PIL import Image

DWC = "http://rs.tdwg.org/dwc/terms"
GBIF = "http://rs.gbif.org/terms/1.0"
DC = "http://purl.org/dc/terms"


def build_meta_xml(delimiter: str, quote: str, header_lines: int) -> str:
    """meta.xml written by hand, independent of the engine's serializer."""
    delim = {"\t": "\\t", ",": ","}[delimiter]
    quote = quote.replace('"', "&quot;")
    return f"""<?xml version="1.0" encoding="UTF-8"?>
<archive xmlns="http://rs.tdwg.org/dwc/text/">
  <core encoding="utf-8" fieldsTerminatedBy="{delim}" linesTerminatedBy="\\n"
        fieldsEnclosedBy="{quote}" ignoreHeaderLines="{header_lines}"
        rowType="{DWC}/Occurrence">
    <files><location>occurrence.txt</location></files>
    <id index="0"/>
    <field index="1" term="{DWC}/occurrenceID"/>
    <field index="2" term="{GBIF}/taxonKey"/>
    <field index="3" term="{DWC}/lifeStage"/>
    <field index="4" term="{GBIF}/datasetKey"/>
    <field index="5" term="{DWC}/decimalLatitude"/>
    <field index="6" term="{DWC}/decimalLongitude"/>
    <field index="7" term="{DC}/publisher"/>
    <field index="8" term="{DWC}/recordedBy"/>
  </core>
  <extension encoding="utf-8" fieldsTerminatedBy="{delim}" linesTerminatedBy="\\n"
        fieldsEnclosedBy="{quote}" ignoreHeaderLines="{header_lines}"
        rowType="{GBIF}/Multimedia">
    <files><location>multimedia.txt</location></files>
    <coreid index="0"/>
    <field index="1" term="{DC}/identifier"/>
    <field index="2" term="{DC}/format"/>
  </extension>
</archive>
"""


def render_rows(rows, delimiter, quote, header):
    lines = []
    if header:
        lines.append(delimiter.join(f"col{i}" for i in range(len(rows[0]) if rows else 9)))
    for row in rows:
        if quote:
            cells = [
                f"{quote}{cell}{quote}" if delimiter in cell else cell for cell in row
            ]
        else:
            cells = row
        lines.append(delimiter.join(cells))
    return "\n".join(lines) + "\n"


def build_archive(
    path,
    occurrence_rows,
    media_rows,
    delimiter="\t",
    quote="",
    header_lines=1,
):
    """Write a fixture archive: id, occurrenceID, taxonKey, lifeStage,
    datasetKey, lat, lon, publisher, recordedBy / id, identifier, format."""
    with zipfile.ZipFile(path, "w") as bundle:
        bundle.writestr("meta.xml", build_meta_xml(delimiter, quote, header_lines))
        bundle.writestr(
            "occurrence.txt",
            render_rows(occurrence_rows, delimiter, quote, header_lines),
        )
        bundle.writestr(
            "multimedia.txt", render_rows(media_rows, delimiter, quote, header_lines)
        )
    return path


def standard_occurrence_rows():
    return [
        ["occ1", "occ1", "1", "adult", "ds-a", "45.5", "-73.6", "Museum A", "observer-1"],
        ["occ2", "occ2", "10", "larva", "ds-b", "", "", "", "observer-2"],
    ]


def standard_media_rows():
    return [
        ["occ1", "http://example.test/a.jpg", "image/jpeg"],
        ["occ1", "http://example.test/b.jpg", "image/jpeg"],
        ["occ2", "http://example.test/c.jpg", "image/jpeg"],
    ]


@pytest.fixture
def fixture_archive(tmp_path):
    return build_archive(
        tmp_path / "archive.zip", standard_occurrence_rows(), standard_media_rows()
    )


def image_bytes(width, height, color=(120, 90, 60), fmt="JPEG"):
    image = Image.new("RGB", (width, height), color)
    buffer = io.BytesIO()
    image.save(buffer, format=fmt)
    return buffer.getvalue()


class _StubHandler(BaseHTTPRequestHandler):
    responses: dict[str, tuple[int, bytes, str]] = {}
    hits: list[str] = []

    def do_GET(self):  # noqa: N802 - http.server API
        type(self).hits.append(self.path)
        status, payload, content_type = type(self).responses.get(
            self.path, (404, b"not found", "text/plain")
        )
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):  # silence per-request stderr noise
        pass


class StubServer:
    def __init__(self):
        handler = type("Handler", (_StubHandler,), {"responses": {}, "hits": []})
        self.handler = handler
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def add(self, path, payload, content_type="image/jpeg", status=200):
        self.handler.responses[path] = (status, payload, content_type)
        return f"{self.base_url}{path}"

    @property
    def hits(self):
        return self.handler.hits

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()


def solid_rgba(width, height, color, alpha=255):
    image = np.zeros((height, width, 4), dtype=np.uint8)
    image[:, :, :3] = color
    image[:, :, 3] = alpha
    return image


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One visible pass/fail line per acceptance criterion."""
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.fspath.basename == "test_acceptance.py":
        terminal = item.config.pluginmanager.get_plugin("terminalreporter")
        if terminal is not None:
            verdict = "PASS" if report.passed else "FAIL"
            terminal.write_line(
                f"[acceptance] {item.name}: {verdict} ({report.duration:.1f}s)"
            )
