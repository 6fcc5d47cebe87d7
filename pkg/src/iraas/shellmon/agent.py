"""Telemetry agents: Accumulator -> Collector -> Sender.

The same cycle runs on-device (agent-based) or in a middleware that reaches
the device remotely (agent-less, NetMon style); only the placement differs.
"""

from __future__ import annotations

import logging
from typing import Callable, Protocol

from ..errors import DeviceReadFailure
from .model import KpiBatch, KpiSample, topic_for
from .transport import MessageBus

logger = logging.getLogger(__name__)


class DeviceKpiSource(Protocol):
    def device_links(self) -> list[str]: ...

    def read(self, item_id: str) -> dict[str, float]: ...


class Agent:
    def __init__(
        self,
        source_id: str,
        device: DeviceKpiSource,
        clock: Callable[[], int],
        connection_mode: str = "pull",
        collection_mode: str = "agent-based",
        bus: MessageBus | None = None,
        domain: str = "default",
    ) -> None:
        self.source_id = source_id
        self.device = device
        self.clock = clock
        self.connection_mode = connection_mode
        self.collection_mode = collection_mode
        self.bus = bus
        self.topic = topic_for(domain, source_id)
        self.alive = True
        self.node_util: dict[str, dict[str, float]] = {}
        self.batch_seq = 0
        self._last_ts: int | None = None

    def accumulate(self) -> list[str]:
        """Drain device counters into ``node_util``; returns ids that failed to read."""
        self.node_util = {}
        failed = []
        for item in self.device.device_links():
            try:
                self.node_util[item] = dict(self.device.read(item))
            except DeviceReadFailure:
                failed.append(item)
        return failed

    def collect(self, partial: bool) -> KpiBatch:
        ts = int(self.clock())
        if self._last_ts is not None and ts <= self._last_ts:
            ts = self._last_ts + 1
        self._last_ts = ts
        self.batch_seq += 1
        samples = tuple(
            KpiSample(self.source_id, item, ts, values)
            for item, values in sorted(self.node_util.items())
        )
        return KpiBatch(self.source_id, samples, self.batch_seq, partial)

    def send(self, batch: KpiBatch) -> None:
        if self.connection_mode == "push":
            if self.bus is None:
                raise RuntimeError(f"{self.source_id}: push agent without a bus")
            self.bus.publish(self.topic, batch.to_bytes())

    def collect_cycle(self) -> KpiBatch:
        failed = self.accumulate()
        if failed and not self.node_util:
            raise DeviceReadFailure(f"{self.source_id}: all reads failed ({failed})")
        if failed:
            logger.warning("%s: partial batch, unreadable %s", self.source_id, failed)
        batch = self.collect(partial=bool(failed))
        self.send(batch)
        return batch

    def handle_poll(self) -> bytes:
        """Pull endpoint: a poll starts the collection cycle and returns the batch."""
        return self.collect_cycle().to_bytes()


class NetMonMiddleware(Agent):
    """Agent-less collection: the cycle runs off-device and answers polls only."""

    def __init__(self, source_id: str, device: DeviceKpiSource, clock: Callable[[], int]) -> None:
        super().__init__(source_id, device, clock, "pull", "agent-less")


def agent_collect_cycle(agent: Agent) -> KpiBatch:
    return agent.collect_cycle()
