"""Pull (request-response) and push (publish-subscribe) transports.

Reference implementations are in-process: :class:`LoopbackTransport` for
polls and :class:`MessageBus` for publish-subscribe. :class:`HttpPollTransport`
and :class:`AgentHttpServer` carry the same ``/poll`` contract over real sockets.
"""

from __future__ import annotations

import fnmatch
import http.client
import threading
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import TYPE_CHECKING, Iterator, Protocol

from ..errors import BusUnreachable, HostUnreachable, MalformedBatch
from .model import HostRecord, KpiBatch, decode_batch

if TYPE_CHECKING:
    from .agent import Agent
    from .store import KpiStore

POLL_PATH = "/poll"


class PollTransport(Protocol):
    def request(self, host: HostRecord, path: str = POLL_PATH) -> bytes: ...


class LoopbackTransport:
    """In-process request-response: (hostname, port) -> agent."""

    def __init__(self) -> None:
        self._agents: dict[tuple[str, int], Agent] = {}

    def bind(self, hostname: str, port: int, agent: Agent) -> None:
        self._agents[(hostname, port)] = agent

    def request(self, host: HostRecord, path: str = POLL_PATH) -> bytes:
        agent = self._agents.get((host.hostname, host.port))
        if agent is None or not agent.alive:
            raise HostUnreachable(f"{host.source_id} at {host.hostname}:{host.port}")
        if path != POLL_PATH:
            raise HostUnreachable(f"no endpoint {path}")
        return agent.handle_poll()


class HttpPollTransport:
    """HTTP/1.1 polls with one keep-alive connection per host."""

    def __init__(self, timeout: float = 5.0) -> None:
        self.timeout = timeout
        self._conns: dict[tuple[str, int], http.client.HTTPConnection] = {}
        self._lock = threading.Lock()

    def request(self, host: HostRecord, path: str = POLL_PATH) -> bytes:
        key = (host.hostname, host.port)
        with self._lock:
            conn = self._conns.get(key)
            if conn is None:
                conn = http.client.HTTPConnection(host.hostname, host.port, timeout=self.timeout)
                self._conns[key] = conn
        try:
            conn.request("GET", path, headers={"Connection": "keep-alive"})
            resp = conn.getresponse()
            body = resp.read()
        except (OSError, http.client.HTTPException) as exc:
            conn.close()
            with self._lock:
                self._conns.pop(key, None)
            raise HostUnreachable(f"{host.source_id}: {exc}") from exc
        if resp.status != 200:
            raise HostUnreachable(f"{host.source_id}: HTTP {resp.status}")
        return body

    def close(self) -> None:
        with self._lock:
            for conn in self._conns.values():
                conn.close()
            self._conns.clear()


class AgentHttpServer:
    """Expose an agent's ``/poll`` endpoint on a local socket."""

    def __init__(self, agent: Agent, host: str = "127.0.0.1", port: int = 0) -> None:
        self.agent = agent
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def do_GET(self) -> None:  # noqa: N802
                if self.path != POLL_PATH or not outer.agent.alive:
                    self.send_error(404 if self.path != POLL_PATH else 503)
                    return
                body = outer.agent.handle_poll()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args) -> None:
                pass

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> AgentHttpServer:
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class MessageBus:
    """In-process topic bus. Messages are delivered to subscriptions existing at publish time."""

    def __init__(self) -> None:
        self._subs: list[Subscription] = []
        self._lock = threading.Lock()
        self.connected = True
        self.published = 0

    def publish(self, topic: str, payload: bytes) -> None:
        if not self.connected:
            raise BusUnreachable(topic)
        with self._lock:
            self.published += 1
            for sub in self._subs:
                if sub.matches(topic):
                    sub._queue.append((topic, payload))

    def subscribe(self, topics: list[str]) -> Subscription:
        if not self.connected:
            raise BusUnreachable(",".join(topics))
        sub = Subscription(self, list(topics))
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)


class Subscription:
    """Consumer side of a bus subscription; ``lag`` is the pending-message gauge."""

    def __init__(self, bus: MessageBus, topics: list[str]) -> None:
        self.bus = bus
        self.topics = topics
        self._queue: deque[tuple[str, bytes]] = deque()
        self.delivered = 0
        self.malformed = 0

    def matches(self, topic: str) -> bool:
        return any(fnmatch.fnmatchcase(topic, pattern) for pattern in self.topics)

    @property
    def lag(self) -> int:
        return len(self._queue)

    def __iter__(self) -> Iterator[KpiBatch]:
        while self._queue:
            _, payload = self._queue.popleft()
            try:
                batch = decode_batch(payload)
            except MalformedBatch:
                self.malformed += 1
                continue
            yield batch

    def drain(self, store: KpiStore) -> int:
        """Deliver every pending batch to ``store`` in publish order; returns batches stored."""
        stored = 0
        for batch in self:
            try:
                if store.ingest(batch):
                    stored += 1
                    self.delivered += 1
            except MalformedBatch:
                self.malformed += 1
        return stored
