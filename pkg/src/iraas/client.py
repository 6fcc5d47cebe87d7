"""The iRaaS client: intents in, install plans out.

Pipeline per intent: fetch controller topologies -> fuse and normalize ->
checksummed policy package -> route_request -> validated response ->
per-controller install plan -> controller install.
"""

from __future__ import annotations

import http.client
import json
import logging
import socket
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

from .errors import (
    AllControllersUnreachable,
    ControllerUnreachable,
    DuplicateIntentId,
    IraasError,
    MalformedIntent,
    MalformedTopologyDocument,
    NoControllers,
    RequestTimeout,
    ResponseValidationFailed,
    ServerUnreachable,
    UnknownControllerForNode,
    error_from_code,
)
from .graph import ControllerTopology, NodeId, fuse_topologies, normalize_costs
from .metric import MetricSpec, validate_metric_spec
from .policy import PolicyPackage
from .routing import DEFAULT_K, RoutingLogic
from .wire import canonical_bytes, decode_float

logger = logging.getLogger(__name__)

EXTERIOR = "exterior"
CONTROLLER_KINDS = ("sdn", "non-sdn")
DEFAULT_TIMEOUT_S = 30.0
DEFAULT_ATTEMPTS = 3
DEFAULT_BACKOFF_S = 0.05


# ---------------------------------------------------------------- intents


@dataclass(frozen=True)
class ControllerEndpoint:
    controller_id: str
    kind: str = "sdn"
    host: str = "127.0.0.1"
    port: int = 0
    credentials: str = field(default="", repr=False)

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> ControllerEndpoint:
        addr = doc.get("address", {})
        kind = str(doc.get("kind", "sdn"))
        if kind not in CONTROLLER_KINDS:
            raise MalformedIntent(f"controller kind {kind!r}")
        return cls(
            str(doc["controller_id"]),
            kind,
            str(addr.get("host", "127.0.0.1")),
            int(addr.get("port", 0)),
            str(doc.get("credentials", "")),
        )


@dataclass(frozen=True)
class RouteIntent:
    intent_id: str
    controllers: tuple[ControllerEndpoint, ...]
    metric: MetricSpec
    algorithm: str = "spf"
    cutoff: int | None = None
    k: int = DEFAULT_K
    pseudo_cost: float = 100.0
    ranking: str = "by-cost"
    seed_costs: Mapping[str, float] | None = field(default=None, compare=False)

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> RouteIntent:
        try:
            return cls(
                intent_id=str(doc["intent_id"]),
                controllers=tuple(ControllerEndpoint.from_document(c) for c in doc.get("controllers", [])),
                metric=MetricSpec.from_document(doc["metric"]),
                algorithm=str(doc.get("algorithm", "spf")),
                cutoff=doc.get("cutoff"),
                k=doc.get("k", DEFAULT_K),
                pseudo_cost=float(doc.get("pseudo_cost", 100.0)),
                ranking=str(doc.get("ranking", "by-cost")),
                seed_costs=doc.get("seed_costs"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedIntent(f"malformed intent: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> RouteIntent:
        return cls.from_document(json.loads(Path(path).read_text()))

    def logic(self) -> RoutingLogic:
        return RoutingLogic(
            metric=self.metric,
            algorithm=self.algorithm,
            cutoff_diameter=self.cutoff,
            k_alternates=self.k,
            seed_costs=self.seed_costs,
            ranking=self.ranking,
        )

    def validate(self) -> RouteIntent:
        """Pre-flight checks done before any controller is contacted."""
        if not self.controllers:
            raise NoControllers(self.intent_id)
        ids = [c.controller_id for c in self.controllers]
        if len(set(ids)) != len(ids):
            raise MalformedIntent(f"{self.intent_id}: duplicate controller ids")
        if not self.pseudo_cost > 0:
            raise MalformedIntent(f"{self.intent_id}: pseudo_cost must be positive")
        validate_metric_spec(self.metric)
        self.logic().validate()
        return self


@dataclass(frozen=True)
class IntentAck:
    intent_id: str
    status: str


# ---------------------------------------------------------------- controllers


class ControllerAdapter(Protocol):
    def fetch_topology(self, endpoint: ControllerEndpoint) -> Mapping[str, Any]: ...

    def install(self, endpoint: ControllerEndpoint, section: list[dict[str, Any]]) -> Mapping[str, Any]: ...


class SimControllerAdapter:
    """Controller management API backed by a simulation; ``down`` holds unreachable ids."""

    def __init__(self, sim: Any) -> None:
        self.sim = sim
        self.down: set[str] = set()

    def fetch_topology(self, endpoint: ControllerEndpoint) -> Mapping[str, Any]:
        if endpoint.controller_id in self.down:
            raise ControllerUnreachable(endpoint.controller_id)
        return self.sim.export_topology(endpoint.controller_id)

    def install(self, endpoint: ControllerEndpoint, section: list[dict[str, Any]]) -> Mapping[str, Any]:
        if endpoint.controller_id in self.down:
            raise ControllerUnreachable(endpoint.controller_id)
        return self.sim.apply_install(endpoint.controller_id, section)


@dataclass(frozen=True)
class FetchResult:
    topologies: tuple[ControllerTopology, ...]
    documents: Mapping[str, Mapping[str, Any]]
    unreachable: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()


def parse_topology(endpoint: ControllerEndpoint, doc: Mapping[str, Any]) -> ControllerTopology:
    try:
        if str(doc.get("controller_id")) != endpoint.controller_id:
            raise ValueError(f"document names controller {doc.get('controller_id')!r}")
        return ControllerTopology.from_document(doc)
    except (KeyError, TypeError, ValueError, IraasError) as exc:
        raise MalformedTopologyDocument(endpoint.controller_id, str(exc)) from exc


def fetch_topologies(
    endpoints: list[ControllerEndpoint] | tuple[ControllerEndpoint, ...],
    adapter: ControllerAdapter,
    strict: bool = False,
    workers: int = 4,
) -> FetchResult:
    """Fetch every controller's topology in parallel and join.

    Lenient mode proceeds with the controllers that answered; strict mode
    requires all of them.
    """
    if not endpoints:
        raise NoControllers("no controller endpoints")

    def one(ep: ControllerEndpoint) -> Mapping[str, Any] | Exception:
        try:
            return adapter.fetch_topology(ep)
        except (ControllerUnreachable, OSError) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(endpoints)))) as pool:
        docs = list(pool.map(one, endpoints))
    topologies, documents, unreachable, warnings = [], {}, [], []
    for ep, doc in zip(endpoints, docs):
        if isinstance(doc, Exception):
            unreachable.append(ep.controller_id)
            warnings.append(f"ControllerUnreachable: {ep.controller_id}")
            continue
        topologies.append(parse_topology(ep, doc))
        documents[ep.controller_id] = doc
    if not topologies:
        raise AllControllersUnreachable(", ".join(unreachable))
    if strict and unreachable:
        raise AllControllersUnreachable(f"strict mode: unreachable {', '.join(unreachable)}")
    return FetchResult(tuple(topologies), documents, tuple(unreachable), tuple(warnings))


def build_policy(intent: RouteIntent, topologies: list[ControllerTopology] | tuple[ControllerTopology, ...]) -> PolicyPackage:
    fused = fuse_topologies(list(topologies), intent.pseudo_cost)
    return PolicyPackage.build(intent.intent_id, normalize_costs(fused), intent.logic())


# ---------------------------------------------------------------- server wire


class RouteServerProxy(Protocol):
    def route_request(self, data: bytes, as_of: int | None) -> bytes: ...

    def route_event(self, intent_id: str, event: Mapping[str, Any]) -> bytes: ...


class LocalRouteServer:
    """In-process channel; payloads still cross as canonical bytes."""

    def __init__(self, server: Any) -> None:
        self.server = server
        self.available = True

    def _check(self) -> None:
        if not self.available:
            raise ServerUnreachable("route server is down")

    def route_request(self, data: bytes, as_of: int | None) -> bytes:
        self._check()
        return canonical_bytes(self.server.route_request(data, as_of))

    def route_event(self, intent_id: str, event: Mapping[str, Any]) -> bytes:
        self._check()
        return canonical_bytes(self.server.handle_event(intent_id, event))


class HttpRouteServer:
    """route_request / route_event over HTTP/1.1."""

    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT_S) -> None:
        self.host = host
        self.port = port
        self.timeout = timeout

    def _post(self, path: str, body: bytes, headers: dict[str, str]) -> bytes:
        conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout)
        try:
            conn.request("POST", path, body=body, headers=headers)
            resp = conn.getresponse()
            payload = resp.read()
        except socket.timeout as exc:
            raise RequestTimeout(f"{self.host}:{self.port}{path}") from exc
        except (OSError, http.client.HTTPException) as exc:
            raise ServerUnreachable(f"{self.host}:{self.port}: {exc}") from exc
        finally:
            conn.close()
        if resp.status == 422:
            err = json.loads(payload)
            raise error_from_code(err.get("error", ""), err.get("detail", ""))
        if resp.status != 200:
            raise ServerUnreachable(f"{self.host}:{self.port}{path}: HTTP {resp.status}")
        return payload

    def route_request(self, data: bytes, as_of: int | None) -> bytes:
        headers = {"Content-Type": "application/octet-stream"}
        if as_of is not None:
            headers["X-As-Of"] = str(as_of)
        return self._post("/route_request", data, headers)

    def route_event(self, intent_id: str, event: Mapping[str, Any]) -> bytes:
        body = canonical_bytes({"intent_id": intent_id, "event": dict(event)})
        return self._post("/route_event", body, {"Content-Type": "application/json"})


@dataclass(frozen=True)
class ResponseRoute:
    path: tuple[str, ...]
    cost: float
    reliability: float | None
    rank: int

    def to_document(self) -> dict[str, Any]:
        from .wire import encode_float

        return {
            "path": list(self.path),
            "cost": encode_float(self.cost),
            "reliability": None if self.reliability is None else encode_float(self.reliability),
            "rank": self.rank,
        }


@dataclass(frozen=True)
class RouteResponse:
    intent_id: str
    pairs: Mapping[tuple[str, str], tuple[ResponseRoute, ...]]
    warnings: tuple[str, ...] = ()
    recompute_counter: int = 0
    recompute_delta: int = 0

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> RouteResponse:
        try:
            pairs = {}
            for p in doc["pairs"]:
                pairs[(str(p["src"]), str(p["dst"]))] = tuple(
                    ResponseRoute(
                        tuple(map(str, r["path"])),
                        decode_float(r["cost"]),
                        None if r.get("reliability") is None else decode_float(r["reliability"]),
                        int(r["rank"]),
                    )
                    for r in p["routes"]
                )
            return cls(
                str(doc["intent_id"]),
                pairs,
                tuple(doc.get("warnings", ())),
                int(doc.get("recompute_counter", 0)),
                int(doc.get("recompute_delta", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ResponseValidationFailed(f"malformed response: {exc}") from exc

    def active(self, src: str, dst: str) -> ResponseRoute | None:
        rs = self.pairs.get((src, dst), ())
        return rs[0] if rs else None


def validate_response(resp: RouteResponse, pkg: PolicyPackage) -> RouteResponse:
    """Every referenced node must be a device of the packaged graph."""
    known = {str(n) for n in pkg.graph.endpoints}
    if resp.intent_id != pkg.intent_id:
        raise ResponseValidationFailed(f"response for {resp.intent_id}, expected {pkg.intent_id}")
    for (src, dst), routes in resp.pairs.items():
        for name in (src, dst):
            if name not in known:
                raise ResponseValidationFailed(f"unknown node {name}")
        for r in routes:
            bad = [n for n in r.path if n not in known]
            if bad:
                raise ResponseValidationFailed(f"route {src}->{dst} names unknown node {bad[0]}")
            if r.path[0] != src or r.path[-1] != dst:
                raise ResponseValidationFailed(f"route {r.path} does not join {src}->{dst}")
    return resp


def _with_retry(
    call: Callable[[], bytes],
    attempts: int,
    backoff: float,
    timeout: float,
    sleep: Callable[[float], None],
) -> bytes:
    last: Exception | None = None
    for attempt in range(attempts):
        with ThreadPoolExecutor(max_workers=1) as pool:
            fut = pool.submit(call)
            try:
                return fut.result(timeout=timeout)
            except FutureTimeout as exc:
                raise RequestTimeout(f"no answer within {timeout}s") from exc
            except ServerUnreachable as exc:
                last = exc
        if attempt + 1 < attempts:
            delay = backoff * (2**attempt)
            logger.warning("route server unreachable, retry %d in %.3fs", attempt + 1, delay)
            sleep(delay)
    raise ServerUnreachable(f"after {attempts} attempts: {last}")


def request_routes(
    pkg: PolicyPackage,
    server: RouteServerProxy,
    as_of: int | None = None,
    attempts: int = DEFAULT_ATTEMPTS,
    backoff: float = DEFAULT_BACKOFF_S,
    timeout: float = DEFAULT_TIMEOUT_S,
    sleep: Callable[[float], None] = time.sleep,
) -> RouteResponse:
    payload = _with_retry(
        lambda: server.route_request(pkg.to_bytes(), as_of), attempts, backoff, timeout, sleep
    )
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ResponseValidationFailed(f"undecodable response: {exc}") from exc
    return validate_response(RouteResponse.from_document(doc), pkg)


# ---------------------------------------------------------------- install


@dataclass(frozen=True)
class InstallEntry:
    src: str
    dst: str
    next_hops: tuple[str, ...]

    def to_document(self) -> dict[str, Any]:
        return {"src": self.src, "dst": self.dst, "next_hops": list(self.next_hops)}


@dataclass(frozen=True)
class Segment:
    """The part of one ranked route that lies inside a single controller."""

    src: str
    dst: str
    rank: int
    part: int
    nodes: tuple[str, ...]


@dataclass(frozen=True)
class InstallPlan:
    sections: Mapping[str, tuple[InstallEntry, ...]]
    segments: Mapping[str, tuple[Segment, ...]]

    def to_document(self) -> dict[str, Any]:
        return {
            cid: {
                "entries": [e.to_document() for e in self.sections[cid]],
                "segments": [
                    {"src": s.src, "dst": s.dst, "rank": s.rank, "part": s.part, "nodes": list(s.nodes)}
                    for s in self.segments.get(cid, ())
                ],
            }
            for cid in sorted(self.sections)
        }

    def routes(self) -> dict[tuple[str, str], list[tuple[str, ...]]]:
        """Reassemble the ranked route set from the per-controller segments."""
        parts: dict[tuple[str, str, int], list[Segment]] = {}
        for segs in self.segments.values():
            for s in segs:
                parts.setdefault((s.src, s.dst, s.rank), []).append(s)
        out: dict[tuple[str, str], list[tuple[str, ...]]] = {}
        for (src, dst, rank) in sorted(parts, key=lambda k: (k[0], k[1], k[2])):
            nodes = tuple(n for s in sorted(parts[(src, dst, rank)], key=lambda s: s.part) for n in s.nodes)
            out.setdefault((src, dst), []).append(nodes)
        return out


def plan_install(resp: RouteResponse, controllers: list[str] | tuple[str, ...] | None = None) -> InstallPlan:
    """Partition routes by owning controller into ordered next-hop lists.

    A pair's next hops follow rank order (floating-static style). A hop into
    another controller is the ``exterior`` marker; the pseudo-node never appears.
    """
    known = None if controllers is None else set(controllers)

    def owner(name: str) -> str:
        ns, sep, _ = name.partition(":")
        if not sep:
            raise ResponseValidationFailed(f"not a qualified node id: {name!r}")
        if known is not None and ns not in known:
            raise UnknownControllerForNode(name)
        return ns

    entries: dict[str, dict[tuple[str, str], list[str]]] = {}
    segments: dict[str, list[Segment]] = {}

    def add_hop(cid: str, src: str, dst: str, hop: str) -> None:
        hops = entries.setdefault(cid, {}).setdefault((src, dst), [])
        if hop not in hops:
            hops.append(hop)

    for (src, dst) in sorted(resp.pairs):
        for r in sorted(resp.pairs[(src, dst)], key=lambda r: r.rank):
            runs: list[list[str]] = []
            for n in r.path:
                if runs and owner(runs[-1][-1]) == owner(n):
                    runs[-1].append(n)
                else:
                    runs.append([n])
            for part, run in enumerate(runs):
                cid = owner(run[0])
                segments.setdefault(cid, []).append(Segment(src, dst, r.rank, part, tuple(run)))
                for i, n in enumerate(run):
                    if n == dst:
                        break
                    hop = run[i + 1] if i + 1 < len(run) else EXTERIOR
                    if i == 0:
                        add_hop(cid, n, dst, hop)
    sections = {
        cid: tuple(InstallEntry(s, d, tuple(h)) for (s, d), h in sorted(table.items()))
        for cid, table in sorted(entries.items())
    }
    return InstallPlan(sections, {cid: tuple(v) for cid, v in sorted(segments.items())})


# ---------------------------------------------------------------- client


@dataclass
class PipelineResult:
    intent: RouteIntent
    fetch: FetchResult
    package: PolicyPackage
    response: RouteResponse
    plan: InstallPlan
    installs: dict[str, Mapping[str, Any]]


def _link_state(docs: Mapping[str, Mapping[str, Any]]) -> tuple[set[str], dict[str, dict[str, Any]]]:
    nodes: set[str] = set()
    links: dict[str, dict[str, Any]] = {}
    for cid, doc in docs.items():
        for n in doc.get("nodes", []):
            nodes.add(f"{cid}:{n['id'] if isinstance(n, Mapping) else n}")
        for lk in doc.get("links", []):
            links[lk["link_id"]] = {
                "a": f"{cid}:{lk['a']}",
                "b": f"{cid}:{lk['b']}",
                "link_id": lk["link_id"],
                "usable": lk.get("attrs", {}).get("usable", True) is not False,
                "cost": lk.get("attrs", {}).get("cost", 1.0),
            }
    return nodes, links


def diff_topologies(
    old: Mapping[str, Mapping[str, Any]], new: Mapping[str, Mapping[str, Any]]
) -> list[dict[str, Any]]:
    """Server events turning the ``old`` controller views into ``new``."""
    old_nodes, old_links = _link_state(old)
    new_nodes, new_links = _link_state(new)
    events: list[dict[str, Any]] = []
    for n in sorted(old_nodes - new_nodes):
        events.append({"kind": "remove_node", "target": n})
    gone = sorted(old_nodes - new_nodes)
    for lid in sorted(set(old_links) - set(new_links)):
        lk = old_links[lid]
        if lk["a"] not in gone and lk["b"] not in gone:
            events.append({"kind": "remove_link", "target": lid})
    added_nodes = sorted(new_nodes - old_nodes)
    for n in added_nodes:
        incident = [
            {k: lk[k] for k in ("a", "b", "link_id", "cost")}
            for lid, lk in sorted(new_links.items())
            if lid not in old_links and n in (lk["a"], lk["b"]) and lk["usable"]
        ]
        events.append(
            {"kind": "add_node", "target": {"node": n, "links": incident, "controller_id": NodeId.parse(n).controller_ns}}
        )
    for lid in sorted(set(new_links) - set(old_links)):
        lk = new_links[lid]
        if lk["a"] in added_nodes or lk["b"] in added_nodes:
            continue
        events.append({"kind": "add_link", "target": {k: lk[k] for k in ("a", "b", "link_id", "cost")}})
        if not lk["usable"]:
            events.append({"kind": "fail_link", "target": lid})
    for lid in sorted(set(old_links) & set(new_links)):
        was, now = old_links[lid]["usable"], new_links[lid]["usable"]
        if was and not now:
            events.append({"kind": "fail_link", "target": lid})
        elif now and not was:
            events.append({"kind": "restore_link", "target": lid})
    return events


class IraasClient:
    """Client session: one serialized pipeline per intent, intents run concurrently."""

    def __init__(
        self,
        adapter: ControllerAdapter,
        server: RouteServerProxy,
        strict: bool = False,
        workers: int = 4,
        attempts: int = DEFAULT_ATTEMPTS,
        backoff: float = DEFAULT_BACKOFF_S,
        timeout: float = DEFAULT_TIMEOUT_S,
    ) -> None:
        self.adapter = adapter
        self.server = server
        self.strict = strict
        self.workers = workers
        self.retry = {"attempts": attempts, "backoff": backoff, "timeout": timeout}
        self._executor = ThreadPoolExecutor(max_workers=workers)
        self._lock = threading.Lock()
        self.intents: dict[str, RouteIntent] = {}
        self.futures: dict[str, Future] = {}
        self.results: dict[str, PipelineResult] = {}
        self._intent_locks: dict[str, threading.Lock] = {}
        self._views: dict[str, dict[str, Mapping[str, Any]]] = {}

    def close(self) -> None:
        self._executor.shutdown(wait=True)

    def submit_intent(self, intent: RouteIntent | Mapping[str, Any], as_of: int | None = None) -> IntentAck:
        """Validate locally, register and start the pipeline; returns immediately."""
        if not isinstance(intent, RouteIntent):
            intent = RouteIntent.from_document(intent)
        with self._lock:
            if intent.intent_id in self.intents:
                raise DuplicateIntentId(intent.intent_id)
        intent.validate()
        with self._lock:
            if intent.intent_id in self.intents:
                raise DuplicateIntentId(intent.intent_id)
            self.intents[intent.intent_id] = intent
            self._intent_locks[intent.intent_id] = threading.Lock()
            self.futures[intent.intent_id] = self._executor.submit(self._pipeline, intent, as_of)
        return IntentAck(intent.intent_id, "accepted")

    def result(self, intent_id: str, timeout: float | None = None) -> PipelineResult:
        return self.futures[intent_id].result(timeout=timeout)

    def _pipeline(self, intent: RouteIntent, as_of: int | None) -> PipelineResult:
        with self._intent_locks[intent.intent_id]:
            fetch = fetch_topologies(intent.controllers, self.adapter, self.strict, self.workers)
            pkg = build_policy(intent, fetch.topologies)
            resp = request_routes(pkg, self.server, as_of, **self.retry)
            if fetch.warnings:
                resp = RouteResponse(
                    resp.intent_id, resp.pairs, fetch.warnings + resp.warnings,
                    resp.recompute_counter, resp.recompute_delta,
                )
            plan, installs = self._install(intent, resp)
            result = PipelineResult(intent, fetch, pkg, resp, plan, installs)
            self.results[intent.intent_id] = result
            self._views[intent.intent_id] = dict(fetch.documents)
            return result

    def _install(self, intent: RouteIntent, resp: RouteResponse) -> tuple[InstallPlan, dict[str, Mapping[str, Any]]]:
        plan = plan_install(resp, [c.controller_id for c in intent.controllers])
        installs = {}
        for ep in intent.controllers:
            section = [e.to_document() for e in plan.sections.get(ep.controller_id, ())]
            try:
                installs[ep.controller_id] = self.adapter.install(ep, section)
            except ControllerUnreachable as exc:
                logger.warning("install on %s skipped: %s", ep.controller_id, exc)
        return plan, installs

    def send_event(self, intent_id: str, event: Mapping[str, Any]) -> RouteResponse:
        """Forward one event to the server, validate the answer and reinstall."""
        with self._intent_locks[intent_id]:
            res = self.results[intent_id]
            payload = _with_retry(
                lambda: self.server.route_event(intent_id, event),
                self.retry["attempts"], self.retry["backoff"], self.retry["timeout"], time.sleep,
            )
            resp = RouteResponse.from_document(json.loads(payload))
            known = {str(n) for n in res.package.graph.endpoints}
            known |= _link_state(self._views.get(intent_id, {}))[0]
            for routes in resp.pairs.values():
                for r in routes:
                    if any(n not in known for n in r.path):
                        raise ResponseValidationFailed(f"route {r.path} names an unknown node")
            plan, installs = self._install(res.intent, resp)
            res.response, res.plan, res.installs = resp, plan, installs
            return resp

    def sync_topology(self, intent_id: str, at_ms: int | None = None) -> list[tuple[dict[str, Any], RouteResponse]]:
        """Re-fetch controller views and forward what changed as server events."""
        intent = self.intents[intent_id]
        fetch = fetch_topologies(intent.controllers, self.adapter, False, self.workers)
        old = self._views[intent_id]
        new = {cid: fetch.documents.get(cid, old.get(cid)) for cid in old}
        events = diff_topologies(old, new)
        self._views[intent_id] = new
        out = []
        for ev in events:
            ev = {**ev, "at_ms": at_ms}
            out.append((ev, self.send_event(intent_id, ev)))
        return out

    def tick(self, intent_id: str, at_ms: int) -> RouteResponse:
        return self.send_event(intent_id, {"kind": "tick", "at_ms": at_ms})
