"""The iRaaS route server.

Each accepted policy package opens a session holding the validated graph,
its SPT forest and the current ranked table. Sessions are then driven by
events: telemetry ticks re-rank, link failures switch over, and topology
changes apply deltas to the forest.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Mapping

from .errors import IraasError, MalformedIntent, NoRoute, UnknownLink
from .graph import Link, NodeId, NormalizedGraph
from .metric import CostHistory, weight_graph
from .policy import PolicyPackage, check_integrity
from .routing import (
    LinkAdded,
    LinkRemoved,
    NodeAdded,
    NodeRemoved,
    RankedRoute,
    RankedRouteTable,
    RoutingLogic,
    SptForest,
    apply_topology_delta,
    build_spt_forest,
    dual_classify,
    query_routes,
    rank_routes,
    switchover_on_failure,
)
from .shellmon.store import KpiStore
from .wire import canonical_bytes, decode_float, encode_float

logger = logging.getLogger(__name__)

EVENT_KINDS = (
    "tick", "fail_link", "restore_link", "add_link", "remove_link", "add_node", "remove_node",
)


@dataclass
class Session:
    intent_id: str
    logic: RoutingLogic
    forest: SptForest
    table: RankedRouteTable | None = None
    weighted: NormalizedGraph | None = None
    failed: set[str] = field(default_factory=set)
    warnings: list[str] = field(default_factory=list)
    cost_ticks: dict[int, dict[str, float]] = field(default_factory=dict)
    as_of: int | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def graph(self) -> NormalizedGraph:
        return self.forest.graph

    @property
    def window(self) -> int:
        return int(self.logic.metric.param("window"))


def _route_doc(r: RankedRoute) -> dict[str, Any]:
    rel = None if r.reliability is None else encode_float(r.reliability.score)
    return {
        "path": list(r.path_str),
        "cost": encode_float(r.cost),
        "reliability": rel,
        "rank": r.rank,
    }


class IraasServer:
    """Route server bound to a KPI store. Without a store, policy link costs are used as-is."""

    def __init__(self, store: KpiStore | None = None, workers: int = 1) -> None:
        self.store = store
        self.workers = workers
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    # -- weighting ----------------------------------------------------------

    def _base_graph(self, s: Session) -> NormalizedGraph:
        g = s.graph
        if s.logic.seed_costs:
            g = g.with_costs({k: float(v) for k, v in s.logic.seed_costs.items() if k in g.costs})
        return g

    def _weigh(self, s: Session, as_of: int | None) -> NormalizedGraph:
        g = self._base_graph(s)
        if self.store is not None and as_of is not None:
            g, report = weight_graph(g, s.logic.metric, self.store.snapshot(as_of), strict=False)
            for lid in report.missing:
                msg = f"MissingTelemetry: {lid}"
                if msg not in s.warnings:
                    s.warnings.append(msg)
        if s.failed:
            g = g.with_costs({lid: math.inf for lid in s.failed})
        return g

    def _history(self, s: Session, as_of: int | None) -> CostHistory | None:
        if self.store is None or as_of is None:
            return None
        ticks = [t for t in self.store.timestamps() if t <= as_of][-s.window :]
        history = CostHistory(max(2, s.window))
        telemetered = [lk for lk in s.graph.links if lk.kind == "link"]
        for t in ticks:
            costs = s.cost_ticks.get(t)
            if costs is None:
                g, _ = weight_graph(s.graph, s.logic.metric, self.store.snapshot(t), strict=False)
                costs = {lk.link_id: g.costs[lk.link_id] for lk in telemetered}
                s.cost_ticks[t] = costs
            history.record(t, costs)
        for t in [t for t in s.cost_ticks if t not in ticks]:
            del s.cost_ticks[t]
        return history

    def _rank(self, s: Session, as_of: int | None) -> None:
        g = self._weigh(s, as_of)
        metric = s.logic.metric
        s.table = rank_routes(
            s.forest,
            g,
            ranking=s.logic.ranking,
            k=s.logic.k_alternates,
            history=self._history(s, as_of) if s.logic.ranking == "by-reliability" else None,
            risk_free=metric.param("risk_free"),
            epsilon=metric.param("epsilon"),
            predictor="smoothing" if metric.param("smoothing") else None,
            alpha=metric.param("alpha"),
        )
        s.weighted = g
        s.as_of = as_of

    # -- API ----------------------------------------------------------------

    def route_request(
        self, policy: PolicyPackage | bytes, as_of: int | None = None
    ) -> dict[str, Any]:
        """Validate a policy, build its forest and answer with ranked routes."""
        result = check_integrity(policy)
        with self._lock:
            if result.intent_id in self.sessions:
                raise MalformedIntent(f"session {result.intent_id} already open")
        forest = build_spt_forest(result.graph, result.logic, workers=self.workers)
        s = Session(result.intent_id, result.logic, forest, warnings=list(result.warnings))
        with s.lock:
            self._rank(s, as_of)
        with self._lock:
            self.sessions[s.intent_id] = s
        logger.info(
            "session %s: %d paths over %d trees", s.intent_id, forest.path_count, len(forest.trees)
        )
        return self.response(s.intent_id)

    def session(self, intent_id: str) -> Session:
        try:
            return self.sessions[intent_id]
        except KeyError:
            raise MalformedIntent(f"unknown session {intent_id}") from None

    def handle_event(self, intent_id: str, event: Mapping[str, Any]) -> dict[str, Any]:
        """Apply one event to a session and return the new response.

        ``tick`` re-ranks against telemetry at ``at_ms``; ``fail_link`` is a
        ranking-only switchover; the other kinds are forest deltas.
        """
        s = self.session(intent_id)
        kind = event.get("kind")
        at = event.get("at_ms")
        with s.lock:
            before = s.forest.recompute_counter
            if kind == "tick":
                self._rank(s, at)
            elif kind == "fail_link":
                lid = str(event["target"])
                if lid not in s.graph.costs:
                    raise UnknownLink(lid)
                s.failed.add(lid)
                s.table = switchover_on_failure(s.table, lid)
            elif kind == "restore_link":
                lid = str(event["target"])
                if lid not in s.graph.costs:
                    raise UnknownLink(lid)
                s.failed.discard(lid)
                if lid in s.forest.dead_links:
                    s.forest = apply_topology_delta(s.forest, LinkAdded(s.graph.link_index[lid]))
                self._rank(s, at)
            elif kind == "remove_link":
                s.forest = apply_topology_delta(s.forest, LinkRemoved(str(event["target"])))
                self._rank(s, at)
            elif kind == "add_link":
                link = _link_from_event(event["target"])
                s.failed.discard(link.link_id)
                s.forest = apply_topology_delta(s.forest, LinkAdded(link))
                self._rank(s, at)
            elif kind == "add_node":
                t = event["target"]
                s.forest = apply_topology_delta(
                    s.forest,
                    NodeAdded(
                        NodeId.parse(t["node"]),
                        tuple(_link_from_event(lk) for lk in t.get("links", [])),
                        float(t.get("cost", 0.0)),
                        str(t.get("controller_id", "")),
                    ),
                )
                self._rank(s, at)
            elif kind == "remove_node":
                s.forest = apply_topology_delta(s.forest, NodeRemoved(NodeId.parse(event["target"])))
                self._rank(s, at)
            else:
                raise MalformedIntent(f"unknown event kind {kind!r}")
            delta = s.forest.recompute_counter - before
        resp = self.response(intent_id)
        resp["recompute_delta"] = delta
        return resp

    def response(self, intent_id: str) -> dict[str, Any]:
        s = self.session(intent_id)
        algo = s.logic.algorithm
        pairs = []
        if algo == "dual":
            pairs = self._dual_pairs(s)
        else:
            k = None if algo == "spf" else 10**9
            for (src, dst) in sorted(s.table.routes):
                try:
                    routes = [_route_doc(r) for r in query_routes(s.table, src, dst, k)]
                except NoRoute:
                    routes = []
                pairs.append({"src": str(src), "dst": str(dst), "routes": routes})
        return {
            "intent_id": intent_id,
            "pairs": pairs,
            "warnings": list(s.warnings),
            "recompute_counter": s.forest.recompute_counter,
        }

    def _dual_pairs(self, s: Session) -> list[dict[str, Any]]:
        g = s.weighted
        dead = s.forest.effective_dead_links
        pairs = []
        for dst in g.endpoints:
            if dst in s.forest.dead_nodes:
                continue
            classes = dual_classify(g, dst, dead)
            for src in g.endpoints:
                if src == dst:
                    continue
                c = classes[src]
                routes = []
                if c.successor is not None:
                    entries = (c.successor,) + c.feasible_successors
                    for rank, e in enumerate(entries, start=1):
                        path = [str(n) for n in e.path if not n.is_pseudo]
                        routes.append(
                            {"path": path, "cost": encode_float(e.via_cost), "reliability": None, "rank": rank}
                        )
                pairs.append({"src": str(src), "dst": str(dst), "routes": routes})
        pairs.sort(key=lambda p: (p["src"], p["dst"]))
        return pairs


def _link_from_event(doc: Mapping[str, Any]) -> Link:
    return Link(
        NodeId.parse(doc["a"]),
        NodeId.parse(doc["b"]),
        str(doc["link_id"]),
        cost=decode_float(doc.get("cost", 1.0)),
    )


def decode_response(payload: bytes | Mapping[str, Any]) -> dict[str, Any]:
    doc = json.loads(payload) if isinstance(payload, (bytes, str)) else dict(payload)
    for pair in doc.get("pairs", []):
        for r in pair["routes"]:
            r["cost"] = decode_float(r["cost"])
            if r.get("reliability") is not None:
                r["reliability"] = decode_float(r["reliability"])
    return doc


class RouteHttpServer:
    """HTTP front end: ``POST /route_request`` (framed policy) and ``POST /route_event`` (JSON)."""

    def __init__(self, server: IraasServer, host: str = "127.0.0.1", port: int = 0) -> None:
        self.server = server
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def _reply(self, status: int, doc: Mapping[str, Any]) -> None:
                body = canonical_bytes(doc)
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self) -> None:  # noqa: N802
                length = int(self.headers.get("Content-Length", 0))
                body = self.rfile.read(length)
                try:
                    if self.path == "/route_request":
                        as_of = self.headers.get("X-As-Of")
                        doc = outer.server.route_request(body, None if as_of is None else int(as_of))
                    elif self.path == "/route_event":
                        req = json.loads(body)
                        doc = outer.server.handle_event(req["intent_id"], req["event"])
                    else:
                        self._reply(404, {"error": "not found"})
                        return
                except IraasError as exc:
                    self._reply(422, {"error": exc.code, "detail": str(exc)})
                    return
                self._reply(200, doc)

            def log_message(self, *args) -> None:
                pass

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    def start(self) -> RouteHttpServer:
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
