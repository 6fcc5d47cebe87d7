"""Deterministic discrete-event hybrid-SDN substrate.

A scenario defines controllers (explicit or generated topologies), per-link
KPI processes (sinusoid + seeded Gaussian noise), and a time-ordered event
list. Logical time only moves through :meth:`Simulation.advance`.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import (
    BadSpec,
    ClockRegression,
    DeviceReadFailure,
    UnknownController,
    UnknownDevice,
)
from .graph import Link, NodeId, default_designated
from .shellmon.model import KpiSample

logger = logging.getLogger(__name__)

EVENT_KINDS = ("fail_link", "restore_link", "add_link", "remove_node")
UNIT_INTERVAL_ATTRS = ("load", "reliability")
EXTERIOR = "exterior"

DEFAULT_KPI: dict[str, dict[str, float]] = {
    "throughput": {"base": 100.0, "amplitude": 10.0, "noise_sigma": 2.0, "period_ms": 10000},
    "latency": {"base": 5.0, "amplitude": 1.0, "noise_sigma": 0.2, "period_ms": 10000},
    "load": {"base": 0.3, "amplitude": 0.1, "noise_sigma": 0.02, "period_ms": 10000},
    "reliability": {"base": 0.99, "amplitude": 0.0, "noise_sigma": 0.002, "period_ms": 10000},
    "jitter": {"base": 1.0, "amplitude": 0.2, "noise_sigma": 0.1, "period_ms": 10000},
}


@dataclass(frozen=True)
class KpiProcess:
    base: float
    amplitude: float = 0.0
    noise_sigma: float = 0.0
    period_ms: float = 10000.0

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> KpiProcess:
        return cls(
            float(doc.get("base", 0.0)),
            float(doc.get("amplitude", 0.0)),
            float(doc.get("noise_sigma", 0.0)),
            float(doc.get("period_ms", 10000.0)),
        )


@dataclass
class ScenarioSpec:
    seed: int
    controllers: list[dict[str, Any]]
    kpi_period_ms: int = 100
    kpi_processes: dict[str, KpiProcess] = field(default_factory=dict)
    link_kpi: dict[str, dict[str, KpiProcess]] = field(default_factory=dict)
    events: list[dict[str, Any]] = field(default_factory=list)
    domain: str = "default"
    telemetry: dict[str, Any] = field(default_factory=dict)
    duration_ms: int = 0

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> ScenarioSpec:
        try:
            kpi = doc.get("kpi", {})
            attrs = {**DEFAULT_KPI, **kpi.get("attributes", {})}
            return cls(
                seed=int(doc.get("seed", 0)),
                controllers=list(doc["controllers"]),
                kpi_period_ms=int(kpi.get("period_ms", 100)),
                kpi_processes={k: KpiProcess.from_document(v) for k, v in attrs.items()},
                link_kpi={
                    lid: {a: KpiProcess.from_document(p) for a, p in per.items()}
                    for lid, per in kpi.get("links", {}).items()
                },
                events=list(doc.get("events", [])),
                domain=str(doc.get("domain", "default")),
                telemetry=dict(doc.get("telemetry", {})),
                duration_ms=int(doc.get("duration_ms", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BadSpec(f"malformed scenario: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> ScenarioSpec:
        return cls.from_document(json.loads(Path(path).read_text()))


def _generate(cid: str, gen: Mapping[str, Any], rng: random.Random) -> dict[str, Any]:
    n = int(gen["nodes"])
    names = [f"s{i}" for i in range(1, n + 1)]
    pairs: list[tuple[int, int]] = []
    model = gen.get("model", "random")
    if model == "random":
        p = float(gen["edge_prob"])
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    elif model == "partial-mesh":
        degree = int(gen.get("degree", 3))
        edges = set()
        for off in range(1, max(1, degree // 2) + 1):
            for i in range(n):
                edges.add(tuple(sorted((i, (i + off) % n))))
        if degree % 2 and n % 2 == 0:
            for i in range(n // 2):
                edges.add((i, i + n // 2))
        pairs = sorted(e for e in edges if e[0] != e[1])
    else:
        raise BadSpec(f"{cid}: unknown generator model {model!r}")
    return {
        "nodes": [{"id": x} for x in names],
        "links": [
            {"a": names[i], "b": names[j], "link_id": f"{cid}/{names[i]}-{names[j]}"}
            for i, j in pairs
        ],
    }


@dataclass
class SimLink:
    a: str
    b: str
    link_id: str
    attrs: dict[str, Any] = field(default_factory=dict)
    usable: bool = True


@dataclass
class SimNode:
    local_id: str
    cost: float = 0.0
    hosts: list[str] = field(default_factory=list)


class SimController:
    """Shim-layer controller: a live topology view plus an installed-routes table."""

    def __init__(self, controller_id: str, kind: str, topo: Mapping[str, Any]) -> None:
        self.controller_id = controller_id
        self.kind = kind
        self.nodes: dict[str, SimNode] = {}
        for entry in topo.get("nodes", []):
            if isinstance(entry, str):
                entry = {"id": entry}
            self.nodes[str(entry["id"])] = SimNode(
                str(entry["id"]), float(entry.get("cost", 0.0)), list(entry.get("hosts", []))
            )
        self.links: dict[str, SimLink] = {}
        for entry in topo.get("links", []):
            if isinstance(entry, (list, tuple)):
                a, b = map(str, entry)
                entry = {"a": a, "b": b}
            self.add_link(entry)
        self.designated = topo.get("designated")
        self.installed: dict[tuple[str, str], list[str]] = {}

    def add_link(self, entry: Mapping[str, Any]) -> SimLink:
        a, b = str(entry["a"]), str(entry["b"])
        if a not in self.nodes or b not in self.nodes:
            raise BadSpec(f"{self.controller_id}: link {a}-{b} references unknown node")
        lid = str(entry.get("link_id") or f"{self.controller_id}/{min(a, b)}-{max(a, b)}")
        if lid in self.links:
            raise BadSpec(f"{self.controller_id}: duplicate link id {lid}")
        link = SimLink(a, b, lid, dict(entry.get("attrs", {})))
        self.links[lid] = link
        return link

    def qualified(self, local: str) -> str:
        return f"{self.controller_id}:{local}"

    def live_neighbors(self, node: str) -> dict[str, SimLink]:
        out = {}
        for lk in self.links.values():
            if lk.usable and node in (lk.a, lk.b):
                out[lk.b if lk.a == node else lk.a] = lk
        return out


class SimDevice:
    """KPI counters of one switch: the latest reading of each link it owns."""

    def __init__(self, sim: Simulation, controller_id: str, local_id: str) -> None:
        self.sim = sim
        self.controller_id = controller_id
        self.local_id = local_id
        self.counters: dict[str, dict[str, float]] = {}
        self.fail_reads: set[str] = set()

    @property
    def source_id(self) -> str:
        return f"{self.controller_id}:{self.local_id}"

    def device_links(self) -> list[str]:
        ctrl = self.sim.controllers[self.controller_id]
        return sorted(
            lid
            for lid, lk in ctrl.links.items()
            if lk.a == self.local_id and lk.usable and lid in self.counters
        )

    def read(self, item_id: str) -> dict[str, float]:
        if item_id in self.fail_reads:
            raise DeviceReadFailure(f"{self.source_id}: {item_id}")
        return dict(self.counters[item_id])


@dataclass
class AdvanceResult:
    samples: list[KpiSample]
    events: list[dict[str, Any]]


@dataclass
class WalkResult:
    reached: bool
    path: list[str]
    reason: str = ""


class Simulation:
    def __init__(self, spec: ScenarioSpec) -> None:
        self.spec = spec
        self.now_ms = 0
        self.controllers: dict[str, SimController] = {}
        rng = random.Random(spec.seed)
        for c in spec.controllers:
            cid = str(c["controller_id"])
            if cid in self.controllers:
                raise BadSpec(f"duplicate controller {cid}")
            if "topology" in c:
                topo = c["topology"]
            elif "generator" in c:
                topo = _generate(cid, c["generator"], random.Random(f"{spec.seed}|gen|{cid}"))
            else:
                raise BadSpec(f"{cid}: needs topology or generator")
            self.controllers[cid] = SimController(cid, c.get("kind", "sdn"), topo)
        del rng
        self.devices: dict[str, SimDevice] = {}
        for cid, ctrl in self.controllers.items():
            for local in ctrl.nodes:
                dev = SimDevice(self, cid, local)
                self.devices[dev.source_id] = dev
        self._rngs: dict[tuple[str, str], random.Random] = {}
        self._phase: dict[tuple[str, str], float] = {}
        self._events = self._validate_events(spec.events)
        self._next_event = 0
        self._next_tick = spec.kpi_period_ms
        self.applied: list[dict[str, Any]] = []
        self._apply_due(0)

    # -- validation -------------------------------------------------------

    def _validate_events(self, events: list[dict[str, Any]]) -> list[dict[str, Any]]:
        last = -math.inf
        links = {lid for c in self.controllers.values() for lid in c.links}
        nodes = {c.qualified(n) for c in self.controllers.values() for n in c.nodes}
        for ev in events:
            at = ev.get("at_ms")
            if not isinstance(at, (int, float)) or at < last:
                raise BadSpec(f"events not sorted by at_ms at {ev!r}")
            last = at
            kind = ev.get("kind")
            target = ev.get("target")
            if kind not in EVENT_KINDS:
                raise BadSpec(f"unknown event kind {kind!r}")
            if kind in ("fail_link", "restore_link"):
                if target not in links:
                    raise BadSpec(f"{kind}: unknown link {target!r}")
            elif kind == "remove_node":
                if target not in nodes:
                    raise BadSpec(f"remove_node: unknown node {target!r}")
                nodes.discard(target)
            elif kind == "add_link":
                cid = target.get("controller_id") if isinstance(target, Mapping) else None
                if cid not in self.controllers:
                    raise BadSpec(f"add_link: unknown controller {cid!r}")
                for end in ("a", "b"):
                    if f"{cid}:{target.get(end)}" not in nodes:
                        raise BadSpec(f"add_link: unknown node {target.get(end)!r}")
                lid = target.get("link_id") or f"{cid}/{min(target['a'], target['b'])}-{max(target['a'], target['b'])}"
                if lid in links:
                    raise BadSpec(f"add_link: duplicate link {lid}")
                links.add(lid)
        return [copy.deepcopy(e) for e in events]

    # -- KPI generation ---------------------------------------------------

    def _process(self, link_id: str, attr: str) -> KpiProcess:
        return self.spec.link_kpi.get(link_id, {}).get(attr) or self.spec.kpi_processes[attr]

    def _draw(self, link_id: str, attr: str, t: int) -> float:
        key = (link_id, attr)
        rng = self._rngs.get(key)
        if rng is None:
            rng = random.Random(f"{self.spec.seed}|{link_id}|{attr}")
            self._rngs[key] = rng
            self._phase[key] = rng.uniform(0.0, 2.0 * math.pi)
        p = self._process(link_id, attr)
        value = p.base + p.amplitude * math.sin(2.0 * math.pi * t / p.period_ms + self._phase[key])
        if p.noise_sigma > 0:
            value += rng.gauss(0.0, p.noise_sigma)
        if attr in UNIT_INTERVAL_ATTRS:
            return min(1.0, max(0.0, value))
        if attr == "throughput":
            return max(1e-3, value)
        return max(0.0, value)

    def _tick(self, t: int) -> list[KpiSample]:
        out = []
        for cid in sorted(self.controllers):
            ctrl = self.controllers[cid]
            for lid in sorted(ctrl.links):
                lk = ctrl.links[lid]
                if not lk.usable:
                    continue
                values = {a: self._draw(lid, a, t) for a in sorted(self.spec.kpi_processes)}
                dev = self.devices[ctrl.qualified(lk.a)]
                dev.counters[lid] = values
                out.append(KpiSample(dev.source_id, lid, t, values))
        return out

    # -- events -----------------------------------------------------------

    def _apply(self, ev: dict[str, Any]) -> None:
        kind, target = ev["kind"], ev["target"]
        if kind in ("fail_link", "restore_link"):
            for ctrl in self.controllers.values():
                if target in ctrl.links:
                    ctrl.links[target].usable = kind == "restore_link"
        elif kind == "add_link":
            ctrl = self.controllers[target["controller_id"]]
            ctrl.add_link(target)
        elif kind == "remove_node":
            nid = NodeId.parse(target)
            ctrl = self.controllers[nid.controller_ns]
            ctrl.nodes.pop(nid.local_id, None)
            for lid in [lid for lid, lk in ctrl.links.items() if nid.local_id in (lk.a, lk.b)]:
                del ctrl.links[lid]
            self.devices.pop(target, None)
            if ctrl.designated == nid.local_id:
                ctrl.designated = None
        logger.info("t=%d applied %s %s", self.now_ms, kind, target)
        self.applied.append(ev)

    def _apply_due(self, upto: int) -> list[dict[str, Any]]:
        applied = []
        while self._next_event < len(self._events) and self._events[self._next_event]["at_ms"] <= upto:
            ev = self._events[self._next_event]
            self._apply(ev)
            applied.append(ev)
            self._next_event += 1
        return applied

    @property
    def pending_events(self) -> list[dict[str, Any]]:
        return self._events[self._next_event :]

    def advance(self, to_ms: int) -> AdvanceResult:
        """Move logical time to ``to_ms``: events and KPI ticks are interleaved by time,
        events first when they coincide with a tick."""
        if to_ms < self.now_ms:
            raise ClockRegression(f"{to_ms} < {self.now_ms}")
        samples: list[KpiSample] = []
        events: list[dict[str, Any]] = []
        period = self.spec.kpi_period_ms
        while True:
            next_ev = (
                self._events[self._next_event]["at_ms"]
                if self._next_event < len(self._events)
                else math.inf
            )
            t = min(next_ev, self._next_tick if period > 0 else math.inf)
            if t > to_ms:
                break
            self.now_ms = int(t)
            events.extend(self._apply_due(self.now_ms))
            if period > 0 and self._next_tick == t:
                samples.extend(self._tick(int(t)))
                self._next_tick += period
        self.now_ms = to_ms
        return AdvanceResult(samples, events)

    # -- controller interfaces --------------------------------------------

    def controller(self, controller_id: str) -> SimController:
        try:
            return self.controllers[controller_id]
        except KeyError:
            raise UnknownController(controller_id) from None

    def export_topology(self, controller_id: str) -> dict[str, Any]:
        ctrl = self.controller(controller_id)
        return {
            "controller_id": controller_id,
            "nodes": [
                {"id": n.local_id, "cost": n.cost, "hosts": list(n.hosts)}
                for _, n in sorted(ctrl.nodes.items())
            ],
            "links": [
                {
                    "a": lk.a,
                    "b": lk.b,
                    "link_id": lk.link_id,
                    "attrs": {**lk.attrs, "usable": lk.usable},
                }
                for _, lk in sorted(ctrl.links.items())
            ],
            "designated": ctrl.designated,
        }

    def _local(self, ctrl: SimController, ref: str) -> str:
        ns, sep, local = ref.partition(":")
        if sep:
            if ns != ctrl.controller_id:
                raise UnknownDevice(f"{ref} is not managed by {ctrl.controller_id}")
            ref = local
        if ref not in ctrl.nodes:
            raise UnknownDevice(f"{ctrl.controller_id}: {ref}")
        return ref

    def apply_install(self, controller_id: str, section: list[Any]) -> dict[str, Any]:
        """Replace installed next-hop lists for the (src, dst) pairs in ``section``."""
        ctrl = self.controller(controller_id)
        staged: dict[tuple[str, str], list[str]] = {}
        for entry in section:
            e = entry if isinstance(entry, Mapping) else entry.to_document()
            src = self._local(ctrl, str(e["src"]))
            hops = []
            for h in e["next_hops"]:
                hops.append(EXTERIOR if h == EXTERIOR else self._local(ctrl, str(h)))
            staged[(src, str(e["dst"]))] = hops
        ctrl.installed.update(staged)
        return {"controller_id": controller_id, "installed": len(staged)}

    def forward_walk(self, src: str, dst: str, max_hops: int = 64) -> WalkResult:
        """Follow installed next-hop lists over the live topology from src to dst."""
        cur = NodeId.parse(src)
        path = [str(cur)]
        seen = {str(cur)}
        for _ in range(max_hops):
            if str(cur) == dst:
                return WalkResult(True, path)
            ctrl = self.controllers.get(cur.controller_ns)
            if ctrl is None or cur.local_id not in ctrl.nodes:
                return WalkResult(False, path, f"{cur} not in topology")
            hops = ctrl.installed.get((cur.local_id, dst))
            if not hops:
                return WalkResult(False, path, f"no route at {cur}")
            live = ctrl.live_neighbors(cur.local_id)
            nxt = None
            for h in hops:
                if h == EXTERIOR:
                    dctrl = self.controllers.get(NodeId.parse(dst).controller_ns)
                    ingress = dctrl.designated if dctrl else None
                    if dctrl is not None and ingress is None:
                        ns = dctrl.controller_id
                        ingress = default_designated(
                            [NodeId(ns, n) for n in dctrl.nodes],
                            [Link(NodeId(ns, lk.a), NodeId(ns, lk.b), lk.link_id) for lk in dctrl.links.values()],
                        ).local_id
                    if ingress is not None:
                        nxt = NodeId(dctrl.controller_id, ingress)
                        break
                elif h in live:
                    nxt = NodeId(cur.controller_ns, h)
                    break
            if nxt is None:
                return WalkResult(False, path, f"no live next hop at {cur}")
            if str(nxt) in seen:
                return WalkResult(False, path + [str(nxt)], "forwarding loop")
            seen.add(str(nxt))
            path.append(str(nxt))
            cur = nxt
        return WalkResult(str(cur) == dst, path, "" if str(cur) == dst else "hop limit")


def load_scenario(spec: ScenarioSpec | Mapping[str, Any] | str | Path) -> Simulation:
    if isinstance(spec, (str, Path)):
        spec = ScenarioSpec.load(spec)
    elif not isinstance(spec, ScenarioSpec):
        spec = ScenarioSpec.from_document(spec)
    return Simulation(spec)


def advance(sim: Simulation, to_ms: int) -> AdvanceResult:
    return sim.advance(to_ms)


def export_topology(sim: Simulation, controller_id: str) -> dict[str, Any]:
    return sim.export_topology(controller_id)


def apply_install(sim: Simulation, controller_id: str, section: list[Any]) -> dict[str, Any]:
    return sim.apply_install(controller_id, section)
