"""Route engine: SPT-forest path discovery, route ranking, DUAL classification,
incremental topology deltas and failure switchover.

Phase 1 (:func:`build_spt_forest`) enumerates every simple path within a hop
cut-off, organised as one tree per destination. Phase 2
(:func:`rank_routes`) prices the branches with the current link costs and
orders them. Failures only re-rank; only topology growth enumerates again.
"""

from __future__ import annotations

import heapq
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence

from .errors import (
    BadCutoff,
    ForestGraphMismatch,
    GraphTooLarge,
    NoRoute,
    PreconditionViolation,
    UnknownAlgorithm,
    UnknownLink,
    UnknownNode,
)
from .graph import Link, NodeId, NormalizedGraph, split_link_id
from .metric import (
    CostHistory,
    MetricSpec,
    Reliability,
    per_step_scores,
    predict_reliability,
    reliability_of_costs,
)

ALGORITHMS = ("spf", "dual", "all-paths")
RANKINGS = ("by-cost", "by-reliability")
DEFAULT_K = 3
DEFAULT_MAX_PATHS = 10**6
MAX_DEFAULT_CUTOFF = 8


@dataclass(frozen=True)
class RoutingLogic:
    metric: MetricSpec
    algorithm: str = "spf"
    cutoff_diameter: int | None = None
    k_alternates: int = DEFAULT_K
    seed_costs: Mapping[str, float] | None = field(default=None, compare=False, hash=False)
    ranking: str = "by-cost"
    max_paths: int = DEFAULT_MAX_PATHS

    def validate(self) -> RoutingLogic:
        if self.algorithm not in ALGORITHMS:
            raise UnknownAlgorithm(self.algorithm)
        if self.cutoff_diameter is not None and (
            not isinstance(self.cutoff_diameter, int) or self.cutoff_diameter < 1
        ):
            raise BadCutoff(f"cutoff_diameter={self.cutoff_diameter!r}")
        if not isinstance(self.k_alternates, int) or self.k_alternates < 1:
            raise BadCutoff(f"k_alternates={self.k_alternates!r}")
        if self.ranking not in RANKINGS:
            raise UnknownAlgorithm(f"ranking {self.ranking!r}")
        return self

    def to_document(self) -> dict[str, Any]:
        return {
            "metric": self.metric.to_document(),
            "algorithm": self.algorithm,
            "cutoff": self.cutoff_diameter,
            "k": self.k_alternates,
            "seed_costs": dict(sorted(self.seed_costs.items())) if self.seed_costs else None,
            "ranking": self.ranking,
            "max_paths": self.max_paths,
        }

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> RoutingLogic:
        return cls(
            metric=MetricSpec.from_document(doc["metric"]),
            algorithm=doc.get("algorithm", "spf"),
            cutoff_diameter=doc.get("cutoff"),
            k_alternates=doc.get("k", DEFAULT_K),
            seed_costs=doc.get("seed_costs"),
            ranking=doc.get("ranking", "by-cost"),
            max_paths=doc.get("max_paths", DEFAULT_MAX_PATHS),
        )


@dataclass(frozen=True)
class Branch:
    """One root-to-leaf branch: a simple path from a source to the tree root."""

    nodes: tuple[NodeId, ...]  # normalized nodes, source first
    links: tuple[str, ...]  # link ids in traversal order, split-internal ids included
    hops: int
    # original node sequence (split halves collapsed, pseudo kept) and its rendering
    route: tuple[NodeId, ...] = field(default=(), compare=False, repr=False)
    route_str: tuple[str, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.route:
            out: list[NodeId] = []
            for n in self.nodes:
                b = n.base
                if not out or out[-1] != b:
                    out.append(b)
            object.__setattr__(self, "route", tuple(out))
        if not self.route_str:
            object.__setattr__(self, "route_str", tuple(str(n) for n in self.route))


@dataclass(frozen=True)
class SptTree:
    destination: NodeId
    branches: Mapping[NodeId, tuple[Branch, ...]]  # source -> branches

    @property
    def size(self) -> int:
        return sum(len(b) for b in self.branches.values())


@dataclass(frozen=True)
class SptForest:
    graph: NormalizedGraph
    cutoff: int
    trees: Mapping[NodeId, SptTree]
    dead_links: frozenset[str] = frozenset()
    dead_nodes: frozenset[NodeId] = frozenset()
    recompute_counter: int = 0

    @property
    def path_count(self) -> int:
        return sum(t.size for t in self.trees.values())

    def branches(self, source: NodeId, destination: NodeId) -> tuple[Branch, ...]:
        tree = self.trees.get(destination)
        if tree is None:
            return ()
        return tree.branches.get(source, ())

    def path_set(self, source: NodeId, destination: NodeId) -> list[tuple[NodeId, ...]]:
        return [b.route for b in self.branches(source, destination)]

    @property
    def effective_dead_links(self) -> frozenset[str]:
        if not self.dead_nodes:
            return self.dead_links
        extra = {split_link_id(n) for n in self.dead_nodes}
        for lk in self.graph.links:
            if lk.a in self.dead_nodes or lk.b in self.dead_nodes:
                extra.add(lk.link_id)
        return self.dead_links | extra


def default_cutoff(g: NormalizedGraph) -> int:
    return max(1, min(g.hop_diameter() + 2, MAX_DEFAULT_CUTOFF))


class _Budget:
    def __init__(self, limit: int) -> None:
        self.limit = limit
        self.used = 0

    def take(self, n: int = 1) -> None:
        self.used += n
        if self.used > self.limit:
            raise GraphTooLarge(f"more than {self.limit} enumerated paths")


def _is_source_form(n: NodeId) -> bool:
    return n.part != "in" and not n.is_pseudo


def _is_dest_form(n: NodeId) -> bool:
    return n.part != "out" and not n.is_pseudo


def _build_tree(g: NormalizedGraph, dest: NodeId, cutoff: int, budget: _Budget) -> SptTree:
    """Backward DFS from the destination over reversed arcs."""
    nodes = list(g.nodes)
    index = {n: i for i, n in enumerate(nodes)}
    preds = [
        [(index[a.tail], a.link_id, a.hop) for a in g.predecessors.get(n, ())] for n in nodes
    ]
    is_source = [_is_source_form(n) for n in nodes]
    base_id: dict[NodeId, int] = {}
    base_ix = [base_id.setdefault(n.base, len(base_id)) for n in nodes]
    bases = {j: b for b, j in base_id.items()}
    names = {j: str(b) for j, b in bases.items()}
    root = index[g.in_form(dest)]
    visited = [False] * len(nodes)
    visited[root] = True
    visited[index[g.out_form(dest)]] = True
    branches: dict[NodeId, list[Branch]] = defaultdict(list)
    rev_nodes: list[int] = [root]
    rev_links: list[str] = []
    rev_route: list[int] = [base_ix[root]]

    def visit(node: int, hops: int) -> None:
        for tail, link_id, hop in preds[node]:
            if visited[tail]:
                continue
            h = hops + hop
            if h > cutoff:
                continue
            visited[tail] = True
            rev_nodes.append(tail)
            rev_links.append(link_id)
            b = base_ix[tail]
            pushed = b != rev_route[-1]
            if pushed:
                rev_route.append(b)
            if is_source[tail]:
                budget.take()
                branches[bases[b]].append(
                    Branch(
                        tuple(nodes[i] for i in reversed(rev_nodes)),
                        tuple(reversed(rev_links)),
                        h,
                        tuple(bases[j] for j in reversed(rev_route)),
                        tuple(names[j] for j in reversed(rev_route)),
                    )
                )
            visit(tail, h)
            if pushed:
                rev_route.pop()
            rev_links.pop()
            rev_nodes.pop()
            visited[tail] = False

    visit(root, 0)
    return SptTree(dest, {s: tuple(bs) for s, bs in sorted(branches.items())})


def _build_tree_job(args: tuple[NormalizedGraph, NodeId, int, int]) -> SptTree:
    g, dest, cutoff, limit = args
    return _build_tree(g, dest, cutoff, _Budget(limit))


def build_spt_forest(g: NormalizedGraph, logic: RoutingLogic, workers: int = 1) -> SptForest:
    """Phase 1: enumerate all simple paths within the cut-off for every ordered pair.

    Per-destination trees are independent; with ``workers > 1`` they are built
    in a process pool and merged in destination order, so the result is
    identical to the sequential build.
    """
    logic.validate()
    if logic.seed_costs:
        g = g.with_costs({k: float(v) for k, v in logic.seed_costs.items() if k in g.costs})
    cutoff = logic.cutoff_diameter or default_cutoff(g)
    dests = list(g.endpoints)
    if workers > 1 and len(dests) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trees = list(
                pool.map(_build_tree_job, [(g, d, cutoff, logic.max_paths) for d in dests])
            )
        total = sum(t.size for t in trees)
        if total > logic.max_paths:
            raise GraphTooLarge(f"{total} enumerated paths exceed {logic.max_paths}")
    else:
        budget = _Budget(logic.max_paths)
        trees = [_build_tree(g, d, cutoff, budget) for d in dests]
    return SptForest(graph=g, cutoff=cutoff, trees={t.destination: t for t in trees})


@dataclass(frozen=True)
class RankedRoute:
    path: tuple[NodeId, ...]
    cost: float
    rank: int
    hops: int
    links: tuple[str, ...] = ()
    reliability: Reliability | None = None
    path_key: tuple[str, ...] = field(default=(), compare=False, repr=False)

    @property
    def path_str(self) -> tuple[str, ...]:
        return self.path_key or tuple(str(n) for n in self.path)

    def to_document(self) -> dict[str, Any]:
        return {
            "path": list(self.path_str),
            "cost": self.cost,
            "rank": self.rank,
            "hops": self.hops,
            "links": list(self.links),
            "reliability": None if self.reliability is None else self.reliability.score,
        }


Pair = tuple[NodeId, NodeId]


@dataclass(frozen=True)
class RankedRouteTable:
    routes: Mapping[Pair, tuple[RankedRoute, ...]]
    k: int
    ranking: str
    pair_mode: Mapping[Pair, str]
    nodes: frozenset[NodeId]
    link_ids: frozenset[str]
    forest_counter: int = 0
    failed_links: frozenset[str] = frozenset()

    @property
    def unreachable(self) -> list[Pair]:
        return sorted(
            p for p, rs in self.routes.items() if not rs or math.isinf(rs[0].cost)
        )

    def active(self, source: NodeId, destination: NodeId) -> RankedRoute | None:
        rs = self.routes.get((source, destination), ())
        return rs[0] if rs and not math.isinf(rs[0].cost) else None

    def top(self, source: NodeId, destination: NodeId) -> tuple[RankedRoute, ...]:
        return self.routes.get((source, destination), ())[: self.k]


def _sort_key(route: RankedRoute, mode: str) -> tuple:
    if mode == "by-reliability":
        score = route.reliability.score if route.reliability else -math.inf
        return (math.isinf(route.cost), -score, route.cost, route.hops, route.path_str)
    return (route.cost, route.hops, route.path_str)


def _rerank(routes: Iterable[RankedRoute], mode: str) -> tuple[RankedRoute, ...]:
    ordered = sorted(routes, key=lambda r: _sort_key(r, mode))
    return tuple(
        RankedRoute(r.path, r.cost, i, r.hops, r.links, r.reliability, r.path_key)
        for i, r in enumerate(ordered, 1)
    )


def path_cost(link_ids: Sequence[str], costs: Mapping[str, float], dead: frozenset[str] = frozenset()) -> float:
    """Left-to-right sum of link costs from source to destination."""
    total = 0.0
    for lid in link_ids:
        if lid in dead:
            return math.inf
        total += costs[lid]
    return total


def rank_routes(
    forest: SptForest,
    g: NormalizedGraph,
    ranking: str = "by-cost",
    k: int = DEFAULT_K,
    history: CostHistory | None = None,
    risk_free: float = 0.0,
    epsilon: float = 1e-12,
    predictor: str | None = None,
    alpha: float = 0.3,
) -> RankedRouteTable:
    """Phase 2: price every branch with ``g``'s costs and order each pair's paths.

    Every branch is retained so failures can switch over without enumeration;
    ``k`` bounds what is published. Reliability ranking needs a cost history
    with at least two ticks, otherwise the pair falls back to cost ranking.
    """
    if ranking not in RANKINGS:
        raise UnknownAlgorithm(f"ranking {ranking!r}")
    if k < 1:
        raise BadCutoff(f"k={k}")
    if set(forest.graph.original_nodes) != set(g.original_nodes):
        raise ForestGraphMismatch("forest and graph node sets differ")
    missing = forest.graph.link_ids - g.link_ids
    if missing:
        raise ForestGraphMismatch(f"graph lacks links {sorted(missing)[:5]}")
    dead = forest.effective_dead_links
    costs = g.costs
    use_rel = ranking == "by-reliability" and history is not None and len(history) >= 2
    routes: dict[Pair, tuple[RankedRoute, ...]] = {}
    modes: dict[Pair, str] = {}
    for dest in sorted(forest.trees):
        tree = forest.trees[dest]
        for src in sorted(set(g.endpoints) - {dest}):
            if not use_rel:
                keyed = sorted(
                    (path_cost(br.links, costs, dead), br.hops, br.route_str, br)
                    for br in tree.branches.get(src, ())
                )
                routes[(src, dest)] = tuple(
                    RankedRoute(br.route, c, i, br.hops, br.links, None, br.route_str)
                    for i, (c, _, _, br) in enumerate(keyed, 1)
                )
                modes[(src, dest)] = "by-cost"
                continue
            entries = []
            for br in tree.branches.get(src, ()):
                cost = path_cost(br.links, costs, dead)
                series = history.path_series(br.links, costs)
                if predictor == "smoothing" and len(series) >= 3:
                    scores = per_step_scores(series, risk_free, epsilon)
                    rel = predict_reliability(scores, 1, alpha)
                else:
                    rel = reliability_of_costs(series, risk_free, epsilon)
                entries.append(RankedRoute(br.route, cost, 0, br.hops, br.links, rel, br.route_str))
            routes[(src, dest)] = _rerank(entries, "by-reliability")
            modes[(src, dest)] = "by-reliability"
    return RankedRouteTable(
        routes=routes,
        k=k,
        ranking=ranking,
        pair_mode=modes,
        nodes=frozenset(g.original_nodes),
        link_ids=frozenset(g.link_ids),
        forest_counter=forest.recompute_counter,
        failed_links=dead,
    )


def switchover_on_failure(table: RankedRouteTable, failed_link: str) -> RankedRouteTable:
    """Sink every precomputed route crossing ``failed_link``; no path enumeration."""
    if failed_link not in table.link_ids:
        raise UnknownLink(failed_link)
    routes: dict[Pair, tuple[RankedRoute, ...]] = {}
    for pair, rs in table.routes.items():
        if any(failed_link in r.links for r in rs):
            updated = [
                replace(r, cost=math.inf) if failed_link in r.links else r for r in rs
            ]
            routes[pair] = _rerank(updated, table.pair_mode.get(pair, "by-cost"))
        else:
            routes[pair] = rs
    return replace(table, routes=routes, failed_links=table.failed_links | {failed_link})


def query_routes(
    table: RankedRouteTable, s: NodeId | str, d: NodeId | str, k: int | None = None
) -> list[RankedRoute]:
    """First ``k`` usable routes in rank order, with pseudo-nodes elided."""
    s = NodeId.parse(s) if isinstance(s, str) else s
    d = NodeId.parse(d) if isinstance(d, str) else d
    if s == d:
        raise PreconditionViolation("source equals destination")
    for n in (s, d):
        if n not in table.nodes or n.is_pseudo:
            raise UnknownNode(str(n))
    k = table.k if k is None else k
    usable = [r for r in table.routes.get((s, d), ()) if not math.isinf(r.cost)]
    if not usable:
        raise NoRoute(f"{s} -> {d}")
    return [
        replace(
            r,
            path=tuple(n for n in r.path if not n.is_pseudo),
            path_key=tuple(x for x in r.path_str if not x.startswith("pseudo:")),
        )
        for r in usable[:k]
    ]


# ---------------------------------------------------------------- DUAL


@dataclass(frozen=True)
class NeighborEntry:
    neighbor: NodeId
    reported_distance: float
    via_cost: float
    path: tuple[NodeId, ...]


@dataclass(frozen=True)
class DualClassification:
    destination: NodeId
    node: NodeId
    feasible_distance: float
    successor: NeighborEntry | None = None
    feasible_successors: tuple[NeighborEntry, ...] = ()
    non_feasible_alternates: tuple[NeighborEntry, ...] = ()

    @property
    def unreachable(self) -> bool:
        return math.isinf(self.feasible_distance)


def _reverse_dijkstra(
    g: NormalizedGraph, dest: NodeId, dead: frozenset[str] = frozenset()
) -> tuple[dict[NodeId, float], dict[NodeId, NodeId]]:
    """Distances from every normalized node to ``in(dest)`` and the next node on that path."""
    root = g.in_form(dest)
    dist: dict[NodeId, float] = {root: 0.0}
    nxt: dict[NodeId, NodeId] = {}
    heap: list[tuple[float, str, NodeId]] = [(0.0, str(root), root)]
    done: set[NodeId] = set()
    blocked = g.out_form(dest)
    while heap:
        du, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for arc in g.predecessors.get(u, ()):
            t = arc.tail
            if t == blocked or arc.link_id in dead:
                continue
            c = g.costs[arc.link_id]
            if math.isinf(c):
                continue
            alt = c + du
            if alt < dist.get(t, math.inf):
                dist[t] = alt
                nxt[t] = u
                heapq.heappush(heap, (alt, str(t), t))
    return dist, nxt


def _walk(start: NodeId, nxt: Mapping[NodeId, NodeId], root: NodeId) -> tuple[NodeId, ...]:
    out = [start.base]
    cur = start
    while cur != root:
        cur = nxt[cur]
        if cur.base != out[-1]:
            out.append(cur.base)
    return tuple(out)


def dual_classify(
    g: NormalizedGraph, destination: NodeId, dead: frozenset[str] = frozenset()
) -> dict[NodeId, DualClassification]:
    """Successor / feasible-successor classification of every node toward ``destination``.

    A neighbour is a feasible successor when its reported distance is strictly
    below the node's feasible distance. Neighbours failing the criterion are
    still listed as alternates; with a global view they remain usable.
    """
    if destination not in g.original_nodes:
        raise UnknownNode(str(destination))
    dist, nxt = _reverse_dijkstra(g, destination, dead)
    root = g.in_form(destination)
    result: dict[NodeId, DualClassification] = {}
    for n in g.original_nodes:
        if n == destination:
            result[n] = DualClassification(destination, n, 0.0)
            continue
        fd = dist.get(g.out_form(n), math.inf)
        entries: list[NeighborEntry] = []
        for m, lk in g.neighbors(n):
            if lk.link_id in dead:
                continue
            c = g.costs[lk.link_id]
            head = g.in_form(m)
            if math.isinf(c) or head not in dist:
                continue
            rd = 0.0 if m == destination else dist.get(g.out_form(m), math.inf)
            via = c + dist[head]
            path = (n,) + _walk(head, nxt, root)
            entries.append(NeighborEntry(m, rd, via, path))
        if math.isinf(fd) or not entries:
            result[n] = DualClassification(destination, n, math.inf)
            continue
        entries.sort(key=lambda e: (e.via_cost, len(e.path), tuple(map(str, e.path))))
        succ = entries[0]
        fs = tuple(e for e in entries[1:] if e.reported_distance < fd)
        alt = tuple(e for e in entries[1:] if e.reported_distance >= fd)
        result[n] = DualClassification(destination, n, fd, succ, fs, alt)
    return result


# ---------------------------------------------------------------- deltas


@dataclass(frozen=True)
class LinkAdded:
    link: Link


@dataclass(frozen=True)
class LinkRemoved:
    link_id: str


@dataclass(frozen=True)
class NodeAdded:
    node: NodeId
    links: tuple[Link, ...] = ()
    node_cost: float = 0.0
    controller_id: str = ""


@dataclass(frozen=True)
class NodeRemoved:
    node: NodeId


TopologyDelta = LinkAdded | LinkRemoved | NodeAdded | NodeRemoved


def _backward_paths(g: NormalizedGraph, end: NodeId, max_hops: int):
    """Simple paths ending at ``end``: yields (nodes, links, hops), start first."""
    nodes = [end]
    links: list[str] = []
    visited = {end}
    yield (end,), (), 0

    def visit(node: NodeId, hops: int):
        for arc in g.predecessors.get(node, ()):
            t = arc.tail
            h = hops + arc.hop
            if t in visited or h > max_hops:
                continue
            visited.add(t)
            nodes.append(t)
            links.append(arc.link_id)
            yield tuple(reversed(nodes)), tuple(reversed(links)), h
            yield from visit(t, h)
            links.pop()
            nodes.pop()
            visited.discard(t)

    yield from visit(end, 0)


def _forward_paths(g: NormalizedGraph, start: NodeId, max_hops: int):
    nodes = [start]
    links: list[str] = []
    visited = {start}
    yield (start,), (), 0

    def visit(node: NodeId, hops: int):
        for arc in g.successors.get(node, ()):
            h = hops + arc.hop
            if arc.head in visited or h > max_hops:
                continue
            visited.add(arc.head)
            nodes.append(arc.head)
            links.append(arc.link_id)
            yield tuple(nodes), tuple(links), h
            yield from visit(arc.head, h)
            links.pop()
            nodes.pop()
            visited.discard(arc.head)

    yield from visit(start, 0)


def _paths_through_link(g: NormalizedGraph, link: Link, cutoff: int) -> list[Branch]:
    """Every simple path within ``cutoff`` hops that crosses ``link`` (either direction)."""
    out: list[Branch] = []
    endpoints = set(g.endpoints)
    for x, y in ((link.a, link.b), (link.b, link.a)):
        prefixes = [
            p
            for p in _backward_paths(g, g.out_form(x), cutoff - 1)
            if _is_source_form(p[0][0]) and p[0][0].base in endpoints
        ]
        suffixes = [
            s
            for s in _forward_paths(g, g.in_form(y), cutoff - 1)
            if _is_dest_form(s[0][-1]) and s[0][-1].base in endpoints
        ]
        for p_nodes, p_links, p_hops in prefixes:
            p_bases = {n.base for n in p_nodes}
            for s_nodes, s_links, s_hops in suffixes:
                if p_hops + 1 + s_hops > cutoff:
                    continue
                if any(n.base in p_bases for n in s_nodes):
                    continue
                out.append(
                    Branch(p_nodes + s_nodes, p_links + (link.link_id,) + s_links, p_hops + 1 + s_hops)
                )
    return out


def _graft(forest: SptForest, g: NormalizedGraph, link: Link) -> tuple[dict[NodeId, SptTree], int]:
    trees = dict(forest.trees)
    new_branches: dict[NodeId, dict[NodeId, list[Branch]]] = defaultdict(lambda: defaultdict(list))
    for br in _paths_through_link(g, link, forest.cutoff):
        route = br.route
        new_branches[route[-1]][route[0]].append(br)
    for dest, by_src in new_branches.items():
        tree = trees.get(dest) or SptTree(dest, {})
        merged = dict(tree.branches)
        for src, brs in by_src.items():
            merged[src] = tuple(merged.get(src, ())) + tuple(brs)
        trees[dest] = SptTree(dest, dict(sorted(merged.items())))
    return trees, len(new_branches)


def apply_topology_delta(forest: SptForest, delta: TopologyDelta) -> SptForest:
    """Apply one topology change.

    Removals mark elements dead (+inf cost) without deleting branches and
    leave ``recompute_counter`` unchanged. Additions enumerate only branches
    through the new element and bump the counter by the number of trees grafted.
    Re-adding a dead element resurrects it in O(1).
    """
    g = forest.graph
    if isinstance(delta, LinkRemoved):
        if delta.link_id not in g.costs or delta.link_id.startswith("split:"):
            raise UnknownLink(delta.link_id)
        return replace(forest, dead_links=forest.dead_links | {delta.link_id})
    if isinstance(delta, NodeRemoved):
        if delta.node not in g.original_nodes:
            raise UnknownNode(str(delta.node))
        return replace(forest, dead_nodes=forest.dead_nodes | {delta.node})
    if isinstance(delta, LinkAdded):
        link = delta.link
        if link.link_id in g.costs:
            if link.link_id in forest.dead_links:
                return replace(forest, dead_links=forest.dead_links - {link.link_id})
            return forest
        for n in (link.a, link.b):
            if n not in g.original_nodes:
                raise UnknownNode(str(n))
        g2 = g.with_link(link)
        trees, grafted = _graft(forest, g2, link)
        return replace(
            forest,
            graph=g2,
            trees=trees,
            recompute_counter=forest.recompute_counter + grafted,
        )
    if isinstance(delta, NodeAdded):
        if delta.node in g.original_nodes:
            out = replace(forest, dead_nodes=forest.dead_nodes - {delta.node})
            for lk in delta.links:
                out = apply_topology_delta(out, LinkAdded(lk))
            return out
        g2 = g.with_node(delta.node, delta.node_cost, delta.controller_id)
        trees = dict(forest.trees)
        trees[delta.node] = SptTree(delta.node, {})
        out = replace(forest, graph=g2, trees=dict(sorted(trees.items())))
        for lk in delta.links:
            out = apply_topology_delta(out, LinkAdded(lk))
        return out
    raise TypeError(f"unsupported delta {delta!r}")
