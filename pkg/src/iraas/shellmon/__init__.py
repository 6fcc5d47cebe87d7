"""ShellMon: multi-modal telemetry collection (pull/push, agent-based/agent-less)."""

from .agent import Agent, NetMonMiddleware, agent_collect_cycle
from .model import (
    HostRecord,
    KpiBatch,
    KpiSample,
    decode_batch,
    load_host_registry,
    topic_for,
)
from .server import ShellMonServer
from .store import KpiSnapshot, KpiStore
from .transport import (
    AgentHttpServer,
    HttpPollTransport,
    LoopbackTransport,
    MessageBus,
    Subscription,
)


def snapshot(store: KpiStore, as_of: int) -> KpiSnapshot:
    return store.snapshot(as_of)


def poll_once(server: ShellMonServer, host: HostRecord | str) -> KpiBatch:
    return server.poll_once(host)


__all__ = [
    "Agent",
    "AgentHttpServer",
    "HostRecord",
    "HttpPollTransport",
    "KpiBatch",
    "KpiSample",
    "KpiSnapshot",
    "KpiStore",
    "LoopbackTransport",
    "MessageBus",
    "NetMonMiddleware",
    "ShellMonServer",
    "Subscription",
    "agent_collect_cycle",
    "decode_batch",
    "load_host_registry",
    "poll_once",
    "snapshot",
    "topic_for",
]
