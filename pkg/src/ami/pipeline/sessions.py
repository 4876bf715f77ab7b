"""Capture-session discovery.

A session is one deployment's night of frames: everything falling in the
same noon-to-noon window of the deployment's timezone. Capture times
come from EXIF when present, then a filename timestamp pattern, then the
file's mtime (with a warning). Unreadable files go to an ``unsorted``
bucket rather than being dropped silently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Any

from PIL import Image

__all__ = ["Session", "DiscoveryResult", "discover_sessions", "night_of"]

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}

# e.g. 20240701-221530, 20240701_221530, 20240701T221530
DEFAULT_TIMESTAMP_PATTERN = re.compile(
    r"(\d{4})(\d{2})(\d{2})[-_T]?(\d{2})(\d{2})(\d{2})"
)

_EXIF_DATETIME_ORIGINAL = 36867
_EXIF_DATETIME = 306


@dataclass(frozen=True)
class Session:
    session_id: str
    deployment_id: str
    frames: tuple[tuple[str, str], ...]  # (path, capture time ISO), time-ordered
    night_of: str  # ISO date of the noon-to-noon window start

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "deployment_id": self.deployment_id,
            "frames": [list(f) for f in self.frames],
            "night_of": self.night_of,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Session":
        return cls(
            session_id=data["session_id"],
            deployment_id=data["deployment_id"],
            frames=tuple((p, t) for p, t in data["frames"]),
            night_of=data["night_of"],
        )


@dataclass
class DiscoveryResult:
    sessions: list[Session] = field(default_factory=list)
    unsorted: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def night_of(capture_time: datetime) -> date:
    """Date labelling the noon-to-noon window containing the instant."""
    return (capture_time - timedelta(hours=12)).date()


def _exif_capture_time(path: Path) -> datetime | None:
    try:
        with Image.open(path) as image:
            exif = image.getexif()
    except Exception:
        return None
    raw = exif.get(_EXIF_DATETIME_ORIGINAL) or exif.get(_EXIF_DATETIME)
    if not raw:
        return None
    try:
        return datetime.strptime(str(raw), "%Y:%m:%d %H:%M:%S")
    except ValueError:
        return None


def _filename_capture_time(path: Path, pattern: re.Pattern) -> datetime | None:
    match = pattern.search(path.name)
    if not match:
        return None
    try:
        year, month, day, hour, minute, second = (int(g) for g in match.groups())
        return datetime(year, month, day, hour, minute, second)
    except ValueError:
        return None


def discover_sessions(
    root: str | Path,
    tz: timezone = timezone.utc,
    timestamp_pattern: re.Pattern = DEFAULT_TIMESTAMP_PATTERN,
    use_exif: bool = True,
) -> DiscoveryResult:
    """Group ``root/<deployment_id>/...`` images into noon-to-noon sessions.

    Session ids are deterministic: ``<deployment_id>:<night_of>``.
    """
    root = Path(root)
    result = DiscoveryResult()
    if not root.is_dir():
        return result

    # deployment -> night -> [(capture_time, path)]
    grouped: dict[str, dict[date, list[tuple[datetime, str]]]] = {}
    for deployment_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        deployment_id = deployment_dir.name
        for path in sorted(deployment_dir.rglob("*")):
            if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            capture = _exif_capture_time(path) if use_exif else None
            if capture is None:
                capture = _filename_capture_time(path, timestamp_pattern)
            if capture is None:
                try:
                    mtime = path.stat().st_mtime
                except OSError as exc:
                    result.warnings.append(f"unreadable file {path}: {exc}")
                    result.unsorted.append(str(path))
                    continue
                capture = datetime.fromtimestamp(mtime, tz=tz).replace(tzinfo=None)
                result.warnings.append(
                    f"{path}: no EXIF or filename timestamp; using file mtime"
                )
            night = night_of(capture)
            grouped.setdefault(deployment_id, {}).setdefault(night, []).append(
                (capture, str(path))
            )

    for deployment_id in sorted(grouped):
        for night in sorted(grouped[deployment_id]):
            frames = sorted(grouped[deployment_id][night])
            result.sessions.append(
                Session(
                    session_id=f"{deployment_id}:{night.isoformat()}",
                    deployment_id=deployment_id,
                    frames=tuple((path, ts.isoformat()) for ts, path in frames),
                    night_of=night.isoformat(),
                )
            )
    return result
