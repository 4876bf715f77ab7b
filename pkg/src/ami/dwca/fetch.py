"""Concurrent media download into a content-addressed cache.

Every URL's outcome (content hash, decoded dimensions, or the error) is
recorded in an append-only index, so re-running fetch over the same
records touches the network zero times and reproduces identical record
states. Files land under ``objects/`` keyed by content hash: two URLs
serving identical bytes share one cached file. Cache writes are atomic
(write-temp-then-rename).
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import requests
from PIL import Image

from ami.errors import InputError
from ami.dwca.archive import MediaRecord, MediaVerdict

__all__ = ["FetchSummary", "fetch_media", "cache_object_path"]

_EXTENSIONS = {"JPEG": ".jpg", "PNG": ".png"}


@dataclass
class FetchSummary:
    downloaded: int = 0
    cache_hits: int = 0
    failed: int = 0
    deduplicated: int = 0


def cache_object_path(cache_dir: str | Path, content_hash: str, extension: str) -> Path:
    return Path(cache_dir) / "objects" / f"{content_hash}{extension}"


def _load_index(cache_dir: Path) -> dict[str, dict]:
    index: dict[str, dict] = {}
    index_path = cache_dir / "index.jsonl"
    if index_path.exists():
        with open(index_path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn tail from an interrupted run
                index[entry["url"]] = entry
    return index


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _download(
    url: str,
    session: requests.Session,
    retries: int,
    timeout: float,
) -> bytes:
    last_error: Exception | None = None
    for _attempt in range(retries + 1):
        try:
            response = session.get(url, timeout=timeout)
            response.raise_for_status()
            return response.content
        except requests.RequestException as exc:
            last_error = exc
    raise last_error  # type: ignore[misc]


def fetch_media(
    records: Sequence[MediaRecord],
    cache_dir: str | Path,
    concurrency: int = 4,
    retries: int = 2,
    timeout: float = 10.0,
    session_factory: Callable[[], requests.Session] = requests.Session,
) -> tuple[list[MediaRecord], FetchSummary]:
    """Populate content hashes and dimensions for each record's URL.

    Each distinct URL is fetched at most once per call and at most once
    across calls (the index is the negative/positive cache). Per-URL
    failures never abort the batch: after the retry budget the record
    gets verdict ``fetch_failed`` and the error is remembered. An
    unwritable cache directory is fatal.
    """
    if concurrency < 1:
        raise InputError("concurrency must be >= 1")
    cache_dir = Path(cache_dir)
    (cache_dir / "objects").mkdir(parents=True, exist_ok=True)

    index = _load_index(cache_dir)
    summary = FetchSummary()
    lock = threading.Lock()
    session = session_factory()

    def fetch_url(url: str) -> dict:
        try:
            payload = _download(url, session, retries, timeout)
        except Exception as exc:
            return {"url": url, "error": f"download failed: {exc}"}
        try:
            image = Image.open(io.BytesIO(payload))
            image.load()
            width, height = image.size
            extension = _EXTENSIONS.get(image.format or "", ".bin")
        except Exception as exc:
            return {"url": url, "error": f"decode failed: {exc}"}
        content_hash = hashlib.sha256(payload).hexdigest()
        target = cache_object_path(cache_dir, content_hash, extension)
        with lock:
            if target.exists():
                summary.deduplicated += 1
            else:
                _atomic_write(target, payload)
        return {
            "url": url,
            "content_hash": content_hash,
            "width": width,
            "height": height,
            "extension": extension,
        }

    cached_urls = set(index)
    summary.cache_hits = sum(1 for r in records if r.url in cached_urls)
    pending: list[str] = []
    seen_pending: set[str] = set()
    for record in records:
        if record.url not in index and record.url not in seen_pending:
            seen_pending.add(record.url)
            pending.append(record.url)

    if pending:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(fetch_url, pending))
        with open(cache_dir / "index.jsonl", "a", encoding="utf-8") as handle:
            for entry in results:
                handle.write(json.dumps(entry, sort_keys=True) + "\n")
                handle.flush()
                index[entry["url"]] = entry
                if "error" in entry:
                    summary.failed += 1
                else:
                    summary.downloaded += 1
            os.fsync(handle.fileno())

    updated: list[MediaRecord] = []
    for record in records:
        entry = index.get(record.url)
        if entry is None:  # pragma: no cover - every URL lands in the index
            updated.append(record)
            continue
        if "error" in entry:
            updated.append(
                replace(record, verdict=MediaVerdict.FETCH_FAILED, note=entry["error"])
            )
        else:
            updated.append(
                replace(
                    record,
                    content_hash=entry["content_hash"],
                    width=entry["width"],
                    height=entry["height"],
                )
            )
    return updated, summary
