"""End-to-end scenario runs: simulation, telemetry, route server and client together.

The run is driven by logical time. Each telemetry interval the simulation
advances, telemetry is collected into the KPI store, topology changes seen
by the client are forwarded as server events, and routes are re-ranked.
"""

from __future__ import annotations

import logging
import math
import statistics
from contextlib import ExitStack
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .client import (
    HttpRouteServer,
    IraasClient,
    LocalRouteServer,
    RouteIntent,
    RouteResponse,
    SimControllerAdapter,
)
from .errors import DeviceReadFailure
from .metric import evaluate_metric, reliability_of_costs
from .netsim import ScenarioSpec, Simulation
from .server import IraasServer, RouteHttpServer
from .shellmon import (
    Agent,
    AgentHttpServer,
    HostRecord,
    HttpPollTransport,
    KpiStore,
    LoopbackTransport,
    MessageBus,
    NetMonMiddleware,
    ShellMonServer,
)
from .wire import encode_float

logger = logging.getLogger(__name__)

REPORT_VERSION = 1


@dataclass(frozen=True)
class TelemetryConfig:
    connection_mode: str = "pull"
    collection_mode: str = "agent-based"
    interval_ms: int = 100
    warmup_ms: int = 1600
    down_hosts: tuple[str, ...] = ()

    @classmethod
    def from_document(cls, doc: dict[str, Any]) -> TelemetryConfig:
        return cls(
            str(doc.get("connection_mode", "pull")),
            str(doc.get("collection_mode", "agent-based")),
            int(doc.get("interval_ms", 100)),
            int(doc.get("warmup_ms", 1600)),
            tuple(doc.get("down_hosts", ())),
        )


class Telemetry:
    """ShellMon wiring for every simulated device."""

    def __init__(self, sim: Simulation, cfg: TelemetryConfig, distributed: bool, stack: ExitStack) -> None:
        self.sim = sim
        self.cfg = cfg
        self.store = KpiStore()
        self.bus = MessageBus() if cfg.connection_mode == "push" else None
        self.agents: dict[str, Agent] = {}
        hosts: dict[str, HostRecord] = {}
        loopback = LoopbackTransport()
        clock = lambda: sim.now_ms  # noqa: E731
        for i, sid in enumerate(sorted(sim.devices)):
            dev = sim.devices[sid]
            if cfg.collection_mode == "agent-less" and cfg.connection_mode == "pull":
                agent: Agent = NetMonMiddleware(sid, dev, clock)
            else:
                agent = Agent(
                    sid, dev, clock, cfg.connection_mode, cfg.collection_mode, self.bus, sim.spec.domain
                )
            agent.alive = sid not in cfg.down_hosts
            self.agents[sid] = agent
            host, port = "sim", i + 1
            if distributed and cfg.connection_mode == "pull":
                http = AgentHttpServer(agent).start()
                stack.callback(http.stop)
                host, port = http.address
            loopback.bind(host, port, agent)
            hosts[sid] = HostRecord(
                sid, host, port, connection_mode=cfg.connection_mode, collection_mode=cfg.collection_mode
            )
        transport: Any = loopback
        if distributed and cfg.connection_mode == "pull":
            transport = HttpPollTransport()
            stack.callback(transport.close)
        self.server = ShellMonServer(hosts, self.store, transport)
        if self.bus is not None:
            self.server.run_subscription([f"telemetry.{sim.spec.domain}.*"], self.bus)

    def owned_links(self, sid: str) -> set[str]:
        cid, _, local = sid.partition(":")
        ctrl = self.sim.controllers.get(cid)
        if ctrl is None:
            return set()
        return {lid for lid, lk in ctrl.links.items() if lk.a == local}

    def collect(self) -> None:
        if self.cfg.connection_mode == "pull":
            for sid, res in self.server.poll_all().items():
                if isinstance(res, Exception):
                    logger.debug("poll %s failed: %s", sid, res)
            return
        for sid in sorted(self.agents):
            agent = self.agents[sid]
            if not agent.alive:
                continue
            try:
                agent.collect_cycle()
            except DeviceReadFailure as exc:
                logger.warning("%s", exc)
        self.server.pump()


def _pairs_doc(resp: RouteResponse) -> list[dict[str, Any]]:
    return [
        {"src": s, "dst": d, "routes": [r.to_document() for r in resp.pairs[(s, d)]]}
        for (s, d) in sorted(resp.pairs)
    ]


def _actives(resp: RouteResponse) -> dict[str, tuple[tuple[str, ...] | None, float]]:
    out = {}
    for (s, d), routes in resp.pairs.items():
        out[f"{s}->{d}"] = (routes[0].path, routes[0].cost) if routes else (None, math.inf)
    return out


class _Timeline:
    def __init__(self) -> None:
        self.changes: dict[str, list[dict[str, Any]]] = {}
        self.ticks: list[dict[str, Any]] = []
        self._last: dict[str, tuple[str, ...] | None] = {}

    def observe(self, t: int, resp: RouteResponse, record_tick: bool = True) -> int:
        changed = 0
        costs = []
        for key, (path, cost) in sorted(_actives(resp).items()):
            if key not in self._last or self._last[key] != path:
                changed += key in self._last
                self._last[key] = path
                self.changes.setdefault(key, []).append(
                    {"t_ms": t, "path": None if path is None else list(path), "cost": encode_float(cost)}
                )
            if path is not None:
                costs.append(cost)
        if record_tick:
            self.ticks.append(
                {
                    "t_ms": t,
                    "reachable_pairs": len(costs),
                    "mean_active_cost": encode_float(math.fsum(costs) / len(costs)) if costs else None,
                }
            )
        return changed


def _telemetry_summary(tel: Telemetry, intent: RouteIntent) -> dict[str, Any]:
    metric = intent.metric
    sources: dict[str, Any] = {}
    store = tel.store
    for sid in sorted(tel.agents):
        links: dict[str, Any] = {}
        for item in sorted(set(store.items_of(sid)) | tel.owned_links(sid)):
            series = store.series(sid, item)
            attrs = sorted({a for s in series for a in s.values})
            costs = [evaluate_metric(metric, s) for s in series]
            rel = None
            if len(costs) >= 2:
                rel = reliability_of_costs(costs, metric.param("risk_free"), metric.param("epsilon")).score
            links[item] = {
                "count": len(series),
                "attributes": {
                    a: {
                        "mean": statistics.fmean(vals),
                        "std": statistics.pstdev(vals),
                    }
                    for a in attrs
                    for vals in [[s.values[a] for s in series if a in s.values]]
                },
                "cost_mean": statistics.fmean(costs) if costs else None,
                "reliability": None if rel is None else encode_float(rel),
            }
        state = tel.server.state.get(sid)
        sources[sid] = {
            "count": sum(v["count"] for v in links.values()),
            "links": links,
            "down": bool(state and state.down) or not tel.agents[sid].alive,
            "batches": tel.agents[sid].batch_seq,
        }
    return {
        "connection_mode": tel.cfg.connection_mode,
        "collection_mode": tel.cfg.collection_mode,
        "interval_ms": tel.cfg.interval_ms,
        "ingested_batches": store.ingested_batches,
        "duplicate_batches": store.duplicate_batches,
        "malformed_batches": store.malformed_batches,
        "samples": len(store.samples()),
        "sources": sources,
    }


def _event_key(target: Any) -> str:
    if isinstance(target, dict):
        if "node" in target:
            return str(target["node"])
        if target.get("link_id"):
            return str(target["link_id"])
        a, b = sorted((str(target["a"]), str(target["b"])))
        return f"{target['controller_id']}/{a}-{b}"
    return str(target)


def _cause(sim_events: list[dict[str, Any]], ev: dict[str, Any], t: int) -> int:
    """Logical time of the simulation event behind a client-side event."""
    key = _event_key(ev["target"])
    for se in sim_events:
        if _event_key(se["target"]) == key:
            return int(se["at_ms"])
    return int(sim_events[0]["at_ms"]) if sim_events else t


def run_scenario(
    scenario: str | Path | ScenarioSpec,
    intent: str | Path | RouteIntent,
    seed: int | None = None,
    distributed: bool = False,
    workers: int = 1,
) -> dict[str, Any]:
    """Execute one scenario end to end and return the machine-readable report."""
    scenario_name = str(scenario) if not isinstance(scenario, ScenarioSpec) else "<inline>"
    intent_name = str(intent) if not isinstance(intent, RouteIntent) else "<inline>"
    if not isinstance(intent, RouteIntent):
        intent = RouteIntent.load(intent)
    intent.validate()
    spec = scenario if isinstance(scenario, ScenarioSpec) else ScenarioSpec.load(scenario)
    if seed is not None:
        spec.seed = seed
    cfg = TelemetryConfig.from_document(spec.telemetry)
    interval = cfg.interval_ms
    last_event = max((e["at_ms"] for e in spec.events), default=0)
    duration = max(spec.duration_ms, cfg.warmup_ms + interval, last_event + 2 * interval)

    with ExitStack() as stack:
        sim = Simulation(spec)
        tel = Telemetry(sim, cfg, distributed, stack)
        route_server = IraasServer(tel.store, workers=workers)
        if distributed:
            http = RouteHttpServer(route_server).start()
            stack.callback(http.stop)
            proxy: Any = HttpRouteServer(*http.address)
        else:
            proxy = LocalRouteServer(route_server)
        client = IraasClient(SimControllerAdapter(sim), proxy)
        stack.callback(client.close)

        t = 0
        while t + interval <= cfg.warmup_ms:
            t += interval
            sim.advance(t)
            tel.collect()
        client.submit_intent(intent, as_of=t)
        result = client.result(intent.intent_id)
        started = t
        timeline = _Timeline()
        timeline.observe(t, result.response)
        convergence: list[dict[str, Any]] = []

        while t + interval <= duration:
            t += interval
            adv = sim.advance(t)
            tel.collect()
            if adv.events:
                for ev, resp in client.sync_topology(intent.intent_id, at_ms=t):
                    at = _cause(adv.events, ev, t)
                    reachable = sum(
                        sim.forward_walk(s, d).reached
                        for (s, d), rs in sorted(resp.pairs.items())
                        if rs
                    )
                    convergence.append(
                        {
                            "kind": "switchover" if ev["kind"] == "fail_link" else "delta",
                            "event": ev["kind"],
                            "target": ev["target"],
                            "event_ms": at,
                            "reflected_ms": t,
                            "latency_ms": t - at,
                            "recompute_delta": resp.recompute_delta,
                            "recompute_counter": resp.recompute_counter,
                            "active_changes": timeline.observe(t, resp, record_tick=False),
                            "forwarding_reachable_pairs": reachable,
                        }
                    )
            timeline.observe(t, client.tick(intent.intent_id, t))

        final = client.results[intent.intent_id]
        report = {
            "version": REPORT_VERSION,
            "scenario": scenario_name,
            "intent": intent_name,
            "intent_id": intent.intent_id,
            "seed": spec.seed,
            "algorithm": intent.algorithm,
            "ranking": intent.ranking,
            "k": intent.k,
            "started_ms": started,
            "ended_ms": t,
            "controllers": sorted(sim.controllers),
            "pairs": _pairs_doc(final.response),
            "timeline": timeline.changes,
            "ticks": timeline.ticks,
            "convergence": convergence,
            "recompute_counter": final.response.recompute_counter,
            "install": {cid: len(entries) for cid, entries in sorted(final.plan.sections.items())},
            "warnings": list(final.response.warnings),
            "telemetry": _telemetry_summary(tel, intent),
        }
    return report
