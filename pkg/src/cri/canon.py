"""Canonical serialization helpers.

Every machine-readable artifact the engine writes goes through these so
that two runs over identical inputs produce byte-identical files.
"""

import hashlib
import json


def canonical_json(obj) -> str:
    """Serialize to deterministic, human-readable JSON (trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def compact_json(obj) -> str:
    """Single-line JSON with a fixed key order (insertion order preserved)."""
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()
