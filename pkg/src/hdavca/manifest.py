"""Dataset manifests: one JSON entry per retargeted stereo item."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    content_id: str
    retargeted_left: str
    retargeted_right: str
    original_left: str | None = None
    original_right: str | None = None
    disparity: str | None = None
    featmap_original: str | None = None
    featmap_retargeted: str | None = None
    mos: float | None = None


def load_manifest(path) -> list[ManifestEntry]:
    try:
        with open(str(path), "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed manifest: {path}") from exc
    if not isinstance(data, list):
        raise ValueError(f"malformed manifest: {path} (expected a JSON array)")
    entries = []
    for idx, item in enumerate(data):
        if not isinstance(item, dict):
            raise ValueError(f"malformed manifest entry #{idx}: not an object")
        try:
            entries.append(ManifestEntry(**item))
        except TypeError as exc:
            raise ValueError(f"malformed manifest entry #{idx}: {exc}") from exc
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("manifest ids must be unique")
    return entries


def save_manifest(entries: list[ManifestEntry], path) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump([asdict(e) for e in entries], fh, indent=2, sort_keys=True)
