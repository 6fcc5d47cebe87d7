"""Telemetry records, the host file and the KPI batch wire format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..errors import DuplicateSourceId, MalformedBatch, ParseError, UnknownMode

CONNECTION_MODES = ("pull", "push")
COLLECTION_MODES = ("agent-based", "agent-less")
HOST_FIELDS = (
    "source_id",
    "hostname",
    "port",
    "credentials",
    "content_type",
    "connection_mode",
    "collection_mode",
)


@dataclass(frozen=True)
class HostRecord:
    source_id: str
    hostname: str
    port: int
    credentials: str = field(default="", repr=False)
    content_type: str = "application/json"
    connection_mode: str = "pull"
    collection_mode: str = "agent-based"

    def __post_init__(self) -> None:
        if self.connection_mode not in CONNECTION_MODES:
            raise UnknownMode(f"{self.source_id}: connection_mode {self.connection_mode!r}")
        if self.collection_mode not in COLLECTION_MODES:
            raise UnknownMode(f"{self.source_id}: collection_mode {self.collection_mode!r}")

    def to_document(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in HOST_FIELDS}


@dataclass(frozen=True)
class KpiSample:
    source_id: str
    link_or_node_id: str
    timestamp: int  # milliseconds, monotonic per (source_id, link_or_node_id)
    values: Mapping[str, float] = field(hash=False)

    def key(self) -> tuple:
        return (
            self.source_id,
            self.link_or_node_id,
            self.timestamp,
            tuple(sorted(self.values.items())),
        )


@dataclass(frozen=True)
class KpiBatch:
    source_id: str
    samples: tuple[KpiSample, ...]
    batch_seq: int
    partial: bool = False

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "source_id": self.source_id,
            "batch_seq": self.batch_seq,
            "samples": [
                {"id": s.link_or_node_id, "ts_ms": s.timestamp, "values": dict(s.values)}
                for s in self.samples
            ],
        }
        if self.partial:
            doc["partial"] = True
        return doc

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_document(), sort_keys=True, separators=(",", ":")).encode()


def decode_batch(payload: bytes | str | Mapping[str, Any]) -> KpiBatch:
    """Parse and structurally validate a KPI batch document."""
    try:
        doc = json.loads(payload) if isinstance(payload, (bytes, str)) else payload
        source = str(doc["source_id"])
        seq = int(doc["batch_seq"])
        samples = []
        for entry in doc["samples"]:
            values = {str(k): float(v) for k, v in entry["values"].items()}
            if not all(math.isfinite(v) for v in values.values()):
                raise ValueError("non-finite KPI value")
            samples.append(KpiSample(source, str(entry["id"]), int(entry["ts_ms"]), values))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise MalformedBatch(f"undecodable batch: {exc}") from exc
    if not samples:
        raise MalformedBatch(f"{source}: empty batch")
    return KpiBatch(source, tuple(samples), seq, bool(doc.get("partial", False)))


def load_host_registry(document: str | bytes | list[Mapping[str, Any]]) -> dict[str, HostRecord]:
    """Parse a host file (JSON array of host records) into ``source_id -> HostRecord``."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc)) from exc
    if not isinstance(document, list):
        raise ParseError("host file must be a JSON array")
    hosts: dict[str, HostRecord] = {}
    for i, entry in enumerate(document):
        if not isinstance(entry, Mapping):
            raise ParseError(f"host #{i} is not an object")
        missing = [f for f in ("source_id", "hostname", "port") if f not in entry]
        if missing:
            raise ParseError(f"host #{i} lacks {missing}")
        extra = set(entry) - set(HOST_FIELDS)
        if extra:
            raise ParseError(f"host #{i} has unknown fields {sorted(extra)}")
        try:
            port = int(entry["port"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"host #{i}: bad port") from exc
        record = HostRecord(
            source_id=str(entry["source_id"]),
            hostname=str(entry["hostname"]),
            port=port,
            credentials=str(entry.get("credentials", "")),
            content_type=str(entry.get("content_type", "application/json")),
            connection_mode=str(entry.get("connection_mode", "pull")),
            collection_mode=str(entry.get("collection_mode", "agent-based")),
        )
        if record.source_id in hosts:
            raise DuplicateSourceId(record.source_id)
        hosts[record.source_id] = record
    return hosts


def topic_for(domain: str, source_id: str) -> str:
    return f"telemetry.{domain}.{source_id}"
