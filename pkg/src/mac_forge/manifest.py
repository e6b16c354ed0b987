"""JSON-lines manifests of audio/transcript pairs."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

from .errors import ParseError
from .util import atomic_write_text

SOURCES = ("real", "mac")


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    audio: str
    text: str
    source: str = "real"
    provenance: str = ""

    def resolve(self, manifest_path) -> str:
        """Absolute audio path; relative paths are taken from the manifest's directory."""
        if os.path.isabs(self.audio):
            return self.audio
        return os.path.join(os.path.dirname(os.path.abspath(os.fspath(manifest_path))), self.audio)


def dumps(records) -> str:
    return "".join(json.dumps(asdict(r), ensure_ascii=False) + "\n" for r in records)


def loads(text: str, source: str | None = None) -> list[ManifestRecord]:
    records = []
    seen = set()
    for number, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", number, source) from exc
        if not isinstance(obj, dict):
            raise ParseError("record must be a JSON object", number, source)
        missing = [k for k in ("id", "audio", "text") if not isinstance(obj.get(k), str)]
        if missing:
            raise ParseError(f"missing or non-string field(s) {missing}", number, source)
        record = ManifestRecord(
            obj["id"], obj["audio"], obj["text"], obj.get("source", "real"), obj.get("provenance", "")
        )
        if record.source not in SOURCES:
            raise ParseError(f"source must be one of {SOURCES}, got {record.source!r}", number, source)
        if record.id in seen:
            raise ParseError(f"duplicate id {record.id!r}", number, source)
        seen.add(record.id)
        records.append(record)
    return records


def read_manifest(path) -> list[ManifestRecord]:
    with open(os.fspath(path), encoding="utf-8") as f:
        return loads(f.read(), source=os.fspath(path))


def write_manifest(path, records) -> None:
    atomic_write_text(path, dumps(records))


def read_lines(path) -> list[str]:
    """Non-blank lines of a plain text file (text corpora, exclusion lists)."""
    with open(os.fspath(path), encoding="utf-8") as f:
        return [line.rstrip("\r\n") for line in f if line.strip()]
