"""ShellMon server: host registry, fetcher (pull), subscriber (push) and liveness."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..errors import HostUnreachable, MalformedBatch, UnknownMode
from .model import HostRecord, KpiBatch, decode_batch
from .store import KpiSnapshot, KpiStore
from .transport import MessageBus, PollTransport, Subscription

logger = logging.getLogger(__name__)

DEFAULT_LIVENESS_THRESHOLD = 3
DEFAULT_POLL_INTERVAL_MS = 1000


@dataclass
class HostState:
    misses: int = 0
    down: bool = False
    polls: int = 0


class ShellMonServer:
    def __init__(
        self,
        hosts: dict[str, HostRecord],
        store: KpiStore | None = None,
        transport: PollTransport | None = None,
        liveness_threshold: int = DEFAULT_LIVENESS_THRESHOLD,
        workers: int = 4,
    ) -> None:
        self.hosts = dict(hosts)
        self.store = store or KpiStore()
        self.transport = transport
        self.liveness_threshold = liveness_threshold
        self.workers = workers
        self.state = {sid: HostState() for sid in self.hosts}
        self.subscriptions: list[Subscription] = []

    def _fetch(self, host: HostRecord) -> KpiBatch:
        if host.connection_mode != "pull":
            raise UnknownMode(f"{host.source_id} is not a pull host")
        if self.transport is None:
            raise HostUnreachable("no pull transport configured")
        state = self.state.setdefault(host.source_id, HostState())
        state.polls += 1
        try:
            payload = self.transport.request(host)
        except HostUnreachable:
            state.misses += 1
            if state.misses >= self.liveness_threshold and not state.down:
                state.down = True
                logger.warning("host %s marked down after %d misses", host.source_id, state.misses)
            raise
        state.misses = 0
        state.down = False
        try:
            batch = decode_batch(payload)
        except MalformedBatch:
            self.store.malformed_batches += 1
            raise
        if batch.source_id != host.source_id:
            self.store.malformed_batches += 1
            raise MalformedBatch(f"{host.source_id} answered as {batch.source_id}")
        return batch

    def poll_once(self, host: HostRecord | str) -> KpiBatch:
        """Poll one pull host and store its batch."""
        if isinstance(host, str):
            host = self.hosts[host]
        batch = self._fetch(host)
        self.store.ingest(batch)
        return batch

    def poll_all(self) -> dict[str, KpiBatch | Exception]:
        """Poll every pull host concurrently; batches are stored in source order."""
        pull_hosts = [h for _, h in sorted(self.hosts.items()) if h.connection_mode == "pull"]
        results: dict[str, KpiBatch | Exception] = {}

        def fetch(host: HostRecord) -> KpiBatch | Exception:
            try:
                return self._fetch(host)
            except (HostUnreachable, MalformedBatch) as exc:
                return exc

        if self.workers > 1 and len(pull_hosts) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                fetched = list(pool.map(fetch, pull_hosts))
        else:
            fetched = [fetch(h) for h in pull_hosts]
        for host, res in zip(pull_hosts, fetched):
            if isinstance(res, KpiBatch):
                try:
                    self.store.ingest(res)
                except MalformedBatch as exc:
                    res = exc
            results[host.source_id] = res
        return results

    def run_subscription(self, topics: list[str], bus: MessageBus) -> Subscription:
        sub = bus.subscribe(topics)
        self.subscriptions.append(sub)
        return sub

    def pump(self) -> int:
        """Drain every subscription into the store."""
        return sum(sub.drain(self.store) for sub in self.subscriptions)

    def is_down(self, source_id: str) -> bool:
        return self.state.get(source_id, HostState()).down

    def snapshot(self, as_of: int) -> KpiSnapshot:
        return self.store.snapshot(as_of)
