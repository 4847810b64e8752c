"""Shared workload data model and JSON-lines log ingestion.

A workload log is newline-delimited JSON, one query per line:

    {"query_text": str, "labels": {str: str},
     "timestamp"?: int, "runtime_ms"?: int, "error_code"?: str}

Dirty lines are rejected with a per-line diagnostic instead of aborting the
whole ingestion; ``strict=True`` upgrades rejections to fatal errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .errors import IngestError


@dataclass(frozen=True)
class LabeledQuery:
    """One query plus its ordered label channels and optional metadata."""

    query_text: str
    labels: Mapping[str, str] = field(default_factory=dict)
    timestamp: int | None = None
    runtime_ms: int | None = None
    error_code: str | None = None

    def __post_init__(self):
        if not isinstance(self.query_text, str) or not self.query_text.strip():
            raise ValueError("query_text must be non-empty after trimming")
        labels = dict(self.labels)
        for name, value in labels.items():
            if not isinstance(name, str) or not name:
                raise ValueError("label channel names must be non-empty strings")
            if not isinstance(value, str):
                raise ValueError(f"label {name!r} must be a string")
        if self.runtime_ms is not None and self.runtime_ms < 0:
            raise ValueError("runtime_ms must be non-negative")
        object.__setattr__(self, "labels", labels)

    def with_labels(self, extra: Mapping[str, str]) -> "LabeledQuery":
        """Return a copy with ``extra`` channels appended.

        Existing channels are never overwritten; a collision raises.
        """
        merged = dict(self.labels)
        for name, value in extra.items():
            if name in merged:
                raise ValueError(f"label channel {name!r} already present")
            merged[name] = value
        return replace(self, labels=merged)

    def to_json_dict(self) -> dict:
        doc: dict = {"query_text": self.query_text, "labels": dict(self.labels)}
        if self.timestamp is not None:
            doc["timestamp"] = self.timestamp
        if self.runtime_ms is not None:
            doc["runtime_ms"] = self.runtime_ms
        if self.error_code is not None:
            doc["error_code"] = self.error_code
        return doc


@dataclass(frozen=True)
class WorkloadLog:
    """An ordered sequence of labeled queries from one source."""

    records: tuple[LabeledQuery, ...]
    source_id: str = ""

    def __init__(self, records: Iterable[LabeledQuery], source_id: str = ""):
        object.__setattr__(self, "records", tuple(records))
        object.__setattr__(self, "source_id", source_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


@dataclass(frozen=True)
class LineRejection:
    """Why a specific input line was rejected (1-based line number)."""

    line_no: int
    reason: str


@dataclass(frozen=True)
class IngestResult:
    log: WorkloadLog
    rejections: tuple[LineRejection, ...]

    @property
    def accepted(self) -> int:
        return len(self.log)

    @property
    def rejected(self) -> int:
        return len(self.rejections)


def _parse_record(doc, schema: Sequence[str] | None) -> LabeledQuery:
    if not isinstance(doc, dict):
        raise ValueError("record is not a JSON object")
    text = doc.get("query_text")
    if not isinstance(text, str) or not text.strip():
        raise ValueError("missing or empty query_text")
    raw_labels = doc.get("labels", {})
    if not isinstance(raw_labels, dict):
        raise ValueError("labels must be an object")
    labels = {}
    for name, value in raw_labels.items():
        if schema is not None and name not in schema:
            continue
        if not isinstance(name, str) or not name:
            raise ValueError("label channel names must be non-empty strings")
        if not isinstance(value, str):
            raise ValueError(f"label {name!r} is not a string")
        labels[name] = value
    timestamp = doc.get("timestamp")
    if timestamp is not None and (isinstance(timestamp, bool) or not isinstance(timestamp, int)):
        raise ValueError("timestamp must be an integer")
    runtime_ms = doc.get("runtime_ms")
    if runtime_ms is not None:
        if isinstance(runtime_ms, bool) or not isinstance(runtime_ms, int) or runtime_ms < 0:
            raise ValueError("runtime_ms must be a non-negative integer")
    error_code = doc.get("error_code")
    if error_code is not None and not isinstance(error_code, str):
        raise ValueError("error_code must be a string")
    return LabeledQuery(
        query_text=text,
        labels=labels,
        timestamp=timestamp,
        runtime_ms=runtime_ms,
        error_code=error_code,
    )


def read_log(
    path,
    schema: Sequence[str] | None = None,
    *,
    strict: bool = False,
    source_id: str | None = None,
) -> IngestResult:
    """Ingest a JSON-lines workload log.

    Records are returned in file order. ``schema``, when given, restricts the
    label channels kept per record. Malformed lines and records with an empty
    query_text are rejected (with their line number); an unreadable file is
    fatal.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read workload log {path}: {exc}") from exc

    records: list[LabeledQuery] = []
    rejections: list[LineRejection] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            rejections.append(LineRejection(line_no, "blank line"))
            continue
        try:
            doc = json.loads(line)
            records.append(_parse_record(doc, schema))
        except (ValueError, TypeError) as exc:
            reason = str(exc) or exc.__class__.__name__
            if strict:
                raise IngestError(f"{path}:{line_no}: {reason}") from exc
            rejections.append(LineRejection(line_no, reason))
    sid = source_id if source_id is not None else str(path)
    return IngestResult(WorkloadLog(records, source_id=sid), tuple(rejections))


def write_log(log: WorkloadLog | Iterable[LabeledQuery], path) -> None:
    """Write records as JSON lines (one record per line, order preserved)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps(rec.to_json_dict(), ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
