"""Graph data model, multi-controller topology fusion and node-cost normalization.

Node identity is controller-qualified (``"c1:s1"``) so fusing topologies is a
pure union. Links are undirected. Node computational cost is folded into the
graph by splitting a costly node ``v`` into ``v#in -> v#out`` joined by an arc
carrying the node cost; every original link ``(u, v)`` becomes the arcs
``out(u) -> in(v)`` and ``out(v) -> in(u)``. A path from ``s`` to ``d`` then
starts at ``out(s)``, ends at ``in(d)`` and pays the cost of every
intermediate node exactly once.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable, Mapping

from .errors import (
    DuplicateController,
    EmptyInput,
    GraphError,
    InvalidDesignated,
    NegativeCost,
    NotSimpleGraph,
)

PSEUDO_NS = "pseudo"
INF = math.inf


@dataclass(frozen=True, order=True)
class NodeId:
    controller_ns: str
    local_id: str
    part: str = ""  # "", "in" or "out" for halves of a split node

    def __str__(self) -> str:
        base = f"{self.controller_ns}:{self.local_id}"
        return f"{base}#{self.part}" if self.part else base

    @property
    def base(self) -> NodeId:
        return NodeId(self.controller_ns, self.local_id) if self.part else self

    @property
    def is_pseudo(self) -> bool:
        return self.controller_ns == PSEUDO_NS

    @classmethod
    def parse(cls, text: str) -> NodeId:
        ns, sep, rest = text.partition(":")
        if not sep or not ns or not rest:
            raise ValueError(f"not a qualified node id: {text!r}")
        local, _, part = rest.partition("#")
        return cls(ns, local, part)


def pseudo_node_id(name: str = "vp") -> NodeId:
    return NodeId(PSEUDO_NS, name)


@dataclass(frozen=True)
class Link:
    a: NodeId
    b: NodeId
    link_id: str
    cost: float = 1.0
    kind: str = "link"  # "link" or "pseudo"
    static_attrs: Mapping[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @property
    def key(self) -> tuple[NodeId, NodeId]:
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)

    @property
    def usable(self) -> bool:
        return bool(self.static_attrs.get("usable", True))

    def other(self, node: NodeId) -> NodeId:
        return self.b if node == self.a else self.a


@dataclass(frozen=True)
class SelfLoop:
    node: str

    def __str__(self) -> str:
        return f"SelfLoop({self.node})"


@dataclass(frozen=True)
class ParallelEdge:
    a: str
    b: str

    def __str__(self) -> str:
        return f"ParallelEdge({self.a},{self.b})"


def _edge_endpoints(graph: Any) -> Iterable[tuple[Any, Any]]:
    if hasattr(graph, "arcs") and hasattr(graph, "split_map"):
        return ((arc.tail, arc.head) for arc in graph.arcs)
    links = graph.links if hasattr(graph, "links") else graph
    out = []
    for item in links:
        if isinstance(item, Link):
            out.append((item.a, item.b))
        else:
            out.append((item[0], item[1]))
    if hasattr(graph, "pseudo_links"):
        out.extend((lk.a, lk.b) for lk in graph.pseudo_links)
    return out


def validate_simple(graph: Any) -> list[SelfLoop | ParallelEdge]:
    """Report self-loops and parallel edges; an empty list means the graph is simple.

    Accepts any object with ``links`` (Link objects or endpoint tuples), a plain
    iterable of endpoint tuples, or a NormalizedGraph (whose arcs are directed).
    """
    directed = hasattr(graph, "split_map")
    seen: set[tuple[Any, Any]] = set()
    violations: list[SelfLoop | ParallelEdge] = []
    reported: set[tuple[Any, Any]] = set()
    for a, b in _edge_endpoints(graph):
        if a == b:
            violations.append(SelfLoop(str(a)))
            continue
        key = (a, b) if directed else tuple(sorted((a, b), key=str))
        if key in seen:
            if key not in reported:
                violations.append(ParallelEdge(str(key[0]), str(key[1])))
                reported.add(key)
        else:
            seen.add(key)
    return violations


def _require_simple(graph: Any, where: str) -> None:
    violations = validate_simple(graph)
    if violations:
        raise NotSimpleGraph(f"{where}: " + ", ".join(map(str, violations)))


def default_designated(nodes: Iterable[NodeId], links: Iterable[Link]) -> NodeId:
    """Highest-degree node, ties broken by smallest rendered id."""
    degree: dict[NodeId, int] = {n: 0 for n in nodes}
    if not degree:
        raise InvalidDesignated("topology has no nodes")
    for lk in links:
        degree[lk.a] = degree.get(lk.a, 0) + 1
        degree[lk.b] = degree.get(lk.b, 0) + 1
    return min(degree, key=lambda n: (-degree[n], str(n)))


@dataclass(frozen=True)
class ControllerTopology:
    controller_id: str
    nodes: frozenset[NodeId]
    links: tuple[Link, ...]
    node_costs: Mapping[NodeId, float] = field(default_factory=dict)
    designated_node: NodeId | None = None

    def __post_init__(self) -> None:
        for lk in self.links:
            if lk.a not in self.nodes or lk.b not in self.nodes:
                raise GraphError(
                    f"{self.controller_id}: link {lk.link_id} endpoint outside node set"
                )
        _require_simple(self, f"controller {self.controller_id}")
        for n, c in self.node_costs.items():
            if c < 0:
                raise NegativeCost(f"{n}: {c}")
        if self.designated_node is None:
            if self.nodes:
                object.__setattr__(
                    self, "designated_node", default_designated(self.nodes, self.links)
                )
        elif self.designated_node not in self.nodes:
            raise InvalidDesignated(
                f"{self.controller_id}: designated node {self.designated_node} not in topology"
            )

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> ControllerTopology:
        """Parse a topology export document (``controller_id``, ``nodes``, ``links``,
        optional ``designated``). Node ids in the document are local device ids."""
        cid = str(doc["controller_id"])
        nodes: set[NodeId] = set()
        costs: dict[NodeId, float] = {}
        for entry in doc["nodes"]:
            if isinstance(entry, str):
                entry = {"id": entry}
            nid = NodeId(cid, str(entry["id"]))
            nodes.add(nid)
            cost = float(entry.get("cost", 0.0))
            if cost:
                costs[nid] = cost
        links = []
        for entry in doc.get("links", []):
            attrs = dict(entry.get("attrs", {}))
            cost = float(attrs.pop("cost", 1.0)) if "cost" in attrs else 1.0
            links.append(
                Link(
                    NodeId(cid, str(entry["a"])),
                    NodeId(cid, str(entry["b"])),
                    str(entry["link_id"]),
                    cost=cost,
                    static_attrs=attrs,
                )
            )
        designated = doc.get("designated")
        return cls(
            controller_id=cid,
            nodes=frozenset(nodes),
            links=tuple(sorted(links, key=lambda lk: lk.link_id)),
            node_costs=costs,
            designated_node=NodeId(cid, str(designated)) if designated else None,
        )

    def to_document(self) -> dict[str, Any]:
        return {
            "controller_id": self.controller_id,
            "nodes": [
                {"id": n.local_id, "cost": float(self.node_costs.get(n, 0.0))}
                for n in sorted(self.nodes)
            ],
            "links": [
                {
                    "a": lk.a.local_id,
                    "b": lk.b.local_id,
                    "link_id": lk.link_id,
                    "attrs": {**lk.static_attrs, "cost": lk.cost},
                }
                for lk in self.links
            ],
            "designated": self.designated_node.local_id if self.designated_node else None,
        }


@dataclass(frozen=True)
class FusedGraph:
    nodes: tuple[NodeId, ...]
    links: tuple[Link, ...]
    pseudo_node: NodeId | None = None
    pseudo_links: tuple[Link, ...] = ()
    origin: Mapping[NodeId, str] = field(default_factory=dict)
    node_costs: Mapping[NodeId, float] = field(default_factory=dict)
    designated: Mapping[str, NodeId] = field(default_factory=dict)

    @property
    def all_nodes(self) -> tuple[NodeId, ...]:
        if self.pseudo_node is None:
            return self.nodes
        return self.nodes + (self.pseudo_node,)

    @property
    def all_links(self) -> tuple[Link, ...]:
        return self.links + self.pseudo_links


def fuse_topologies(topologies: list[ControllerTopology], pseudo_cost: float = 1.0) -> FusedGraph:
    if not topologies:
        raise EmptyInput("no topologies to fuse")
    if not pseudo_cost > 0 or math.isinf(pseudo_cost):
        raise ValueError(f"pseudo_cost must be positive and finite, got {pseudo_cost}")
    seen: set[str] = set()
    for topo in topologies:
        if topo.controller_id in seen:
            raise DuplicateController(topo.controller_id)
        seen.add(topo.controller_id)
        if topo.designated_node is None or topo.designated_node not in topo.nodes:
            raise InvalidDesignated(topo.controller_id)

    nodes: list[NodeId] = []
    links: list[Link] = []
    origin: dict[NodeId, str] = {}
    costs: dict[NodeId, float] = {}
    designated: dict[str, NodeId] = {}
    for topo in topologies:
        for n in topo.nodes:
            if n in origin:
                raise DuplicateController(f"node {n} exported by two controllers")
            origin[n] = topo.controller_id
        nodes.extend(topo.nodes)
        links.extend(topo.links)
        costs.update({n: c for n, c in topo.node_costs.items() if c})
        designated[topo.controller_id] = topo.designated_node

    pseudo = None
    pseudo_links: list[Link] = []
    if len(topologies) > 1:
        pseudo = pseudo_node_id()
        for topo in sorted(topologies, key=lambda t: t.controller_id):
            pseudo_links.append(
                Link(
                    topo.designated_node,
                    pseudo,
                    f"pseudo:{topo.controller_id}",
                    cost=float(pseudo_cost),
                    kind="pseudo",
                )
            )
    fused = FusedGraph(
        nodes=tuple(sorted(nodes)),
        links=tuple(sorted(links, key=lambda lk: lk.link_id)),
        pseudo_node=pseudo,
        pseudo_links=tuple(pseudo_links),
        origin=origin,
        node_costs=costs,
        designated=designated,
    )
    _require_simple(fused, "fused graph")
    ids = [lk.link_id for lk in fused.all_links]
    if len(ids) != len(set(ids)):
        raise NotSimpleGraph("duplicate link ids across controllers")
    return fused


@dataclass(frozen=True)
class Arc:
    tail: NodeId
    head: NodeId
    link_id: str
    hop: int  # 1 for a real/pseudo link traversal, 0 for a split-internal arc


def split_link_id(node: NodeId) -> str:
    return f"split:{node}"


@dataclass(frozen=True)
class NormalizedGraph:
    """Shortest-path-ready graph: split costly nodes plus a per-link cost table.

    ``links`` keep original endpoints; ``costs`` maps every link id (including
    pseudo and split-internal ids) to its current weight.
    """

    nodes: tuple[NodeId, ...]
    links: tuple[Link, ...]
    split_map: Mapping[NodeId, tuple[NodeId, NodeId]]
    costs: Mapping[str, float]
    node_costs: Mapping[NodeId, float] = field(default_factory=dict)
    pseudo_node: NodeId | None = None
    origin: Mapping[NodeId, str] = field(default_factory=dict)

    @cached_property
    def original_nodes(self) -> tuple[NodeId, ...]:
        return tuple(sorted({n.base for n in self.nodes}))

    @cached_property
    def endpoints(self) -> tuple[NodeId, ...]:
        """Original nodes that may be a route source or destination (not pseudo)."""
        return tuple(n for n in self.original_nodes if not n.is_pseudo)

    @cached_property
    def link_index(self) -> dict[str, Link]:
        return {lk.link_id: lk for lk in self.links}

    def in_form(self, node: NodeId) -> NodeId:
        pair = self.split_map.get(node)
        return pair[0] if pair else node

    def out_form(self, node: NodeId) -> NodeId:
        pair = self.split_map.get(node)
        return pair[1] if pair else node

    @cached_property
    def arcs(self) -> tuple[Arc, ...]:
        arcs: list[Arc] = []
        for v, (vin, vout) in sorted(self.split_map.items()):
            arcs.append(Arc(vin, vout, split_link_id(v), 0))
        for lk in self.links:
            arcs.append(Arc(self.out_form(lk.a), self.in_form(lk.b), lk.link_id, 1))
            arcs.append(Arc(self.out_form(lk.b), self.in_form(lk.a), lk.link_id, 1))
        return tuple(arcs)

    @cached_property
    def successors(self) -> dict[NodeId, tuple[Arc, ...]]:
        adj: dict[NodeId, list[Arc]] = defaultdict(list)
        for arc in self.arcs:
            adj[arc.tail].append(arc)
        return {n: tuple(sorted(v, key=lambda a: (a.head, a.link_id))) for n, v in adj.items()}

    @cached_property
    def predecessors(self) -> dict[NodeId, tuple[Arc, ...]]:
        adj: dict[NodeId, list[Arc]] = defaultdict(list)
        for arc in self.arcs:
            adj[arc.head].append(arc)
        return {n: tuple(sorted(v, key=lambda a: (a.tail, a.link_id))) for n, v in adj.items()}

    @cached_property
    def link_ids(self) -> frozenset[str]:
        return frozenset(self.costs)

    def cost(self, link_id: str) -> float:
        return self.costs[link_id]

    def neighbors(self, node: NodeId) -> list[tuple[NodeId, Link]]:
        """Original-graph neighbours of an original node, sorted by id."""
        out = [(lk.other(node), lk) for lk in self.links if node in (lk.a, lk.b)]
        return sorted(out, key=lambda p: (p[0], p[1].link_id))

    def with_costs(self, updates: Mapping[str, float]) -> NormalizedGraph:
        unknown = set(updates) - set(self.costs)
        if unknown:
            raise KeyError(f"unknown link ids: {sorted(unknown)}")
        return replace(self, costs={**self.costs, **updates})

    def with_link(self, link: Link) -> NormalizedGraph:
        for n in (link.a, link.b):
            if n.base not in self.original_nodes:
                raise KeyError(str(n))
        if link.link_id in self.costs:
            raise ValueError(f"link {link.link_id} already present")
        g = replace(
            self,
            links=tuple(sorted(self.links + (link,), key=lambda lk: lk.link_id)),
            costs={**self.costs, link.link_id: link.cost},
        )
        _require_simple(g, "after adding link")
        return g

    def with_node(self, node: NodeId, node_cost: float = 0.0, controller_id: str = "") -> NormalizedGraph:
        if node in self.original_nodes:
            raise ValueError(f"node {node} already present")
        if node_cost < 0:
            raise NegativeCost(f"{node}: {node_cost}")
        nodes = list(self.nodes)
        split_map = dict(self.split_map)
        costs = dict(self.costs)
        node_costs = dict(self.node_costs)
        if node_cost > 0:
            pair = (replace(node, part="in"), replace(node, part="out"))
            split_map[node] = pair
            nodes.extend(pair)
            costs[split_link_id(node)] = float(node_cost)
            node_costs[node] = float(node_cost)
        else:
            nodes.append(node)
        return replace(
            self,
            nodes=tuple(sorted(nodes)),
            split_map=split_map,
            costs=costs,
            node_costs=node_costs,
            origin={**self.origin, node: controller_id or node.controller_ns},
        )

    def hop_diameter(self) -> int:
        """Largest finite hop distance between original nodes (BFS on links)."""
        adj: dict[NodeId, set[NodeId]] = defaultdict(set)
        for lk in self.links:
            adj[lk.a].add(lk.b)
            adj[lk.b].add(lk.a)
        best = 0
        for src in self.original_nodes:
            dist = {src: 0}
            frontier = [src]
            while frontier:
                nxt = []
                for u in frontier:
                    for v in adj[u]:
                        if v not in dist:
                            dist[v] = dist[u] + 1
                            nxt.append(v)
                frontier = nxt
            best = max(best, max(dist.values()))
        return best

    def components(self) -> list[list[NodeId]]:
        adj: dict[NodeId, set[NodeId]] = defaultdict(set)
        for lk in self.links:
            adj[lk.a].add(lk.b)
            adj[lk.b].add(lk.a)
        seen: set[NodeId] = set()
        comps = []
        for n in self.original_nodes:
            if n in seen:
                continue
            stack, comp = [n], []
            seen.add(n)
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            comps.append(sorted(comp))
        return comps


def normalize_costs(
    g: FusedGraph, node_costs: Mapping[NodeId, float] | None = None
) -> NormalizedGraph:
    """Split every node with positive computational cost into an in/out pair.

    Distances in the result equal original edge costs plus the costs of the
    intermediate nodes traversed; endpoint node costs are not charged.
    """
    _require_simple(g, "normalize_costs")
    costs_in = dict(g.node_costs if node_costs is None else node_costs)
    for n, c in costs_in.items():
        if c < 0 or math.isnan(c):
            raise NegativeCost(f"{n}: {c}")
    split_map: dict[NodeId, tuple[NodeId, NodeId]] = {}
    nodes: list[NodeId] = []
    costs: dict[str, float] = {}
    kept_costs: dict[NodeId, float] = {}
    for n in g.all_nodes:
        c = float(costs_in.get(n, 0.0))
        if c > 0:
            pair = (replace(n, part="in"), replace(n, part="out"))
            split_map[n] = pair
            nodes.extend(pair)
            costs[split_link_id(n)] = c
            kept_costs[n] = c
        else:
            nodes.append(n)
    for lk in g.all_links:
        costs[lk.link_id] = float(lk.cost)
    origin = dict(g.origin)
    if g.pseudo_node is not None:
        origin[g.pseudo_node] = PSEUDO_NS
    return NormalizedGraph(
        nodes=tuple(sorted(nodes)),
        links=tuple(sorted(g.all_links, key=lambda lk: lk.link_id)),
        split_map=split_map,
        costs=costs,
        node_costs=kept_costs,
        pseudo_node=g.pseudo_node,
        origin=origin,
    )


def graph_to_document(g: NormalizedGraph) -> dict[str, Any]:
    """Wire form of a normalized graph (used inside policy packages)."""
    return {
        "nodes": [
            {
                "id": str(n),
                "controller": g.origin.get(n, n.controller_ns),
                "cost": float(g.node_costs.get(n, 0.0)),
            }
            for n in g.original_nodes
        ],
        "links": [
            {
                "a": str(lk.a),
                "b": str(lk.b),
                "link_id": lk.link_id,
                "kind": lk.kind,
                "cost": float(lk.cost),
                "attrs": dict(lk.static_attrs),
            }
            for lk in g.links
        ],
        "pseudo_node": str(g.pseudo_node) if g.pseudo_node else None,
        "split": sorted(str(n) for n in g.split_map),
        "costs": {k: float(v) for k, v in sorted(g.costs.items())},
    }


def graph_from_document(doc: Mapping[str, Any]) -> NormalizedGraph:
    from .wire import decode_float

    node_costs: dict[NodeId, float] = {}
    origin: dict[NodeId, str] = {}
    originals: list[NodeId] = []
    for entry in doc["nodes"]:
        n = NodeId.parse(entry["id"])
        originals.append(n)
        origin[n] = entry.get("controller", n.controller_ns)
        c = float(entry.get("cost", 0.0))
        if c < 0:
            raise NegativeCost(f"{n}: {c}")
        if c:
            node_costs[n] = c
    split = {NodeId.parse(s) for s in doc.get("split", [])}
    split_map = {n: (replace(n, part="in"), replace(n, part="out")) for n in sorted(split)}
    nodes: list[NodeId] = []
    for n in originals:
        nodes.extend(split_map[n] if n in split_map else (n,))
    links = tuple(
        Link(
            NodeId.parse(e["a"]),
            NodeId.parse(e["b"]),
            e["link_id"],
            cost=decode_float(e.get("cost", 1.0)),
            kind=e.get("kind", "link"),
            static_attrs=dict(e.get("attrs", {})),
        )
        for e in doc["links"]
    )
    costs = {k: decode_float(v) for k, v in doc["costs"].items()}
    pseudo = doc.get("pseudo_node")
    return NormalizedGraph(
        nodes=tuple(sorted(nodes)),
        links=tuple(sorted(links, key=lambda lk: lk.link_id)),
        split_map=split_map,
        costs=costs,
        node_costs={n: c for n, c in node_costs.items() if n in split_map},
        pseudo_node=NodeId.parse(pseudo) if pseudo else None,
        origin=origin,
    )
