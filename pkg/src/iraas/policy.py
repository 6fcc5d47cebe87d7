"""Policy packages: the checksummed unit the client ships to the route server."""

from __future__ import annotations

import hmac
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ChecksumMismatch, MalformedIntent, NotSimpleGraph
from .graph import NormalizedGraph, graph_from_document, graph_to_document, validate_simple
from .metric import validate_metric_spec
from .routing import RoutingLogic
from .wire import canonical_bytes, checksum, unframe


@dataclass(frozen=True)
class PolicyPackage:
    intent_id: str
    graph: NormalizedGraph
    logic: RoutingLogic
    checksum: str = ""

    def body_document(self) -> dict[str, Any]:
        return {
            "intent_id": self.intent_id,
            "graph": graph_to_document(self.graph),
            "logic": self.logic.to_document(),
        }

    def body_bytes(self) -> bytes:
        return canonical_bytes(self.body_document())

    @classmethod
    def build(cls, intent_id: str, graph: NormalizedGraph, logic: RoutingLogic) -> PolicyPackage:
        pkg = cls(intent_id, graph, logic)
        return cls(intent_id, graph, logic, checksum(pkg.body_bytes()))

    def to_bytes(self) -> bytes:
        """Wire form: ``<sha256 hex>\\n<canonical body>``."""
        return self.checksum.encode("ascii") + b"\n" + self.body_bytes()


@dataclass(frozen=True)
class IntegrityResult:
    intent_id: str
    graph: NormalizedGraph
    logic: RoutingLogic
    warnings: tuple[str, ...] = field(default=())


def _verify(declared: str, body: bytes) -> None:
    if not hmac.compare_digest(declared.encode("ascii", "replace"), checksum(body).encode("ascii")):
        raise ChecksumMismatch("policy body does not match its checksum")


def check_integrity(policy: PolicyPackage | bytes) -> IntegrityResult:
    """Server-side validation of a policy package (object or framed bytes).

    Disconnected components are reported as warnings, not rejected.
    """
    if isinstance(policy, (bytes, bytearray)):
        declared, body = unframe(bytes(policy))
        _verify(declared, body)
        try:
            doc = json.loads(body.decode("utf-8"))
            intent_id = str(doc["intent_id"])
            graph = graph_from_document(doc["graph"])
            logic = RoutingLogic.from_document(doc["logic"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedIntent(f"policy body unreadable: {exc}") from exc
    else:
        _verify(policy.checksum, policy.body_bytes())
        intent_id, graph, logic = policy.intent_id, policy.graph, policy.logic

    originals = set(graph.original_nodes)
    for lk in graph.links:
        if lk.a not in originals or lk.b not in originals:
            raise NotSimpleGraph(f"link {lk.link_id} references unknown node")
    violations = validate_simple([(lk.a, lk.b) for lk in graph.links])
    if violations:
        raise NotSimpleGraph(", ".join(map(str, violations)))
    validate_metric_spec(logic.metric)
    logic.validate()

    warnings = []
    comps = sorted(graph.components(), key=lambda c: (-len(c), [str(n) for n in c]))
    for comp in comps[1:]:
        warnings.append("DisconnectedComponent: " + ",".join(str(n) for n in comp))
    return IntegrityResult(intent_id, graph, logic, tuple(warnings))
