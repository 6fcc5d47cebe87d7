"""The master KPI store shared between telemetry collection and routing."""

from __future__ import annotations

import bisect
import threading
from collections.abc import Mapping
from types import MappingProxyType
from typing import Iterator

from ..errors import MalformedBatch
from .model import KpiBatch, KpiSample


class KpiSnapshot(Mapping):
    """Immutable view: per link/node id, the latest sample at or before ``as_of``."""

    def __init__(self, as_of: int, entries: dict[str, KpiSample]) -> None:
        self.as_of = as_of
        self._entries = MappingProxyType(dict(entries))

    def __getitem__(self, key: str) -> KpiSample:
        return self._entries[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"KpiSnapshot(as_of={self.as_of}, entries={len(self)})"


class KpiStore:
    """Per-(source, id) time series with idempotent batch ingestion.

    Writes are serialized; snapshots read under the same lock so they always
    reflect a consistent prefix of ingested batches.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._series: dict[tuple[str, str], list[KpiSample]] = {}
        self._times: dict[tuple[str, str], list[int]] = {}
        self._last_seq: dict[str, int] = {}
        self.ingested_batches = 0
        self.duplicate_batches = 0
        self.malformed_batches = 0

    def ingest(self, batch: KpiBatch) -> bool:
        """Store ``batch``; returns False when it is a duplicate (already-seen batch_seq).

        Raises MalformedBatch (and discards the whole batch) when samples are
        foreign to the batch source or timestamps do not strictly increase.
        """
        with self._lock:
            last = self._last_seq.get(batch.source_id)
            if last is not None and batch.batch_seq <= last:
                self.duplicate_batches += 1
                return False
            latest: dict[tuple[str, str], int] = {}
            for s in batch.samples:
                key = (s.source_id, s.link_or_node_id)
                if s.source_id != batch.source_id:
                    self.malformed_batches += 1
                    raise MalformedBatch(f"sample from {s.source_id} in batch of {batch.source_id}")
                prev = latest.get(key)
                if prev is None:
                    times = self._times.get(key)
                    prev = times[-1] if times else None
                if prev is not None and s.timestamp <= prev:
                    self.malformed_batches += 1
                    raise MalformedBatch(
                        f"{key}: timestamp {s.timestamp} not after {prev}"
                    )
                latest[key] = s.timestamp
            for s in batch.samples:
                key = (s.source_id, s.link_or_node_id)
                self._series.setdefault(key, []).append(s)
                self._times.setdefault(key, []).append(s.timestamp)
            self._last_seq[batch.source_id] = batch.batch_seq
            self.ingested_batches += 1
            return True

    def snapshot(self, as_of: int) -> KpiSnapshot:
        entries: dict[str, KpiSample] = {}
        with self._lock:
            for key in sorted(self._series):
                times = self._times[key]
                i = bisect.bisect_right(times, as_of)
                if i == 0:
                    continue
                sample = self._series[key][i - 1]
                cur = entries.get(sample.link_or_node_id)
                if cur is None or (sample.timestamp, sample.source_id) > (cur.timestamp, cur.source_id):
                    entries[sample.link_or_node_id] = sample
        return KpiSnapshot(as_of, entries)

    def timestamps(self) -> list[int]:
        """Distinct sample timestamps across every series, ascending."""
        with self._lock:
            return sorted({t for times in self._times.values() for t in times})

    def samples(self) -> list[KpiSample]:
        with self._lock:
            return [s for key in sorted(self._series) for s in self._series[key]]

    def series(self, source_id: str, item_id: str) -> list[KpiSample]:
        with self._lock:
            return list(self._series.get((source_id, item_id), ()))

    def items_of(self, source_id: str) -> list[str]:
        with self._lock:
            return sorted(i for s, i in self._series if s == source_id)

    def sources(self) -> list[str]:
        with self._lock:
            return sorted({s for s, _ in self._series} | set(self._last_seq))
