"""Canonical JSON encoding and checksummed framing for wire documents."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any

INF_TOKEN = "inf"
NEG_INF_TOKEN = "-inf"


def encode_float(x: float) -> float | str:
    if math.isinf(x):
        return INF_TOKEN if x > 0 else NEG_INF_TOKEN
    if math.isnan(x):
        raise ValueError("NaN is not representable on the wire")
    return x


def decode_float(x: Any) -> float:
    if x == INF_TOKEN:
        return math.inf
    if x == NEG_INF_TOKEN:
        return -math.inf
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValueError(f"expected a number, got {x!r}")
    return float(x)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, float):
        return encode_float(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def canonical_dumps(obj: Any) -> str:
    """Sorted keys, no whitespace, repr floats; infinities become string tokens."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_dumps(obj).encode("utf-8")


def pretty_dumps(obj: Any) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def checksum(body: bytes) -> str:
    return hashlib.sha256(body).hexdigest()


def frame(body: bytes) -> bytes:
    """Prefix ``body`` with its hex SHA-256 and a newline."""
    return checksum(body).encode("ascii") + b"\n" + body


def unframe(data: bytes) -> tuple[str, bytes]:
    """Split a framed payload into (declared checksum, body) without verifying."""
    head, sep, body = data.partition(b"\n")
    if not sep:
        return "", data
    try:
        return head.decode("ascii"), body
    except UnicodeDecodeError:
        return "", body
