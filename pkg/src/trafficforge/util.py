"""Shared helpers: stable seeding and canonical JSON."""

import hashlib
import json


def derive_seed(*parts):
    """Stable 64-bit seed from arbitrary parts.

    Uses a keyed-less BLAKE2b digest of the reprs, so the value is
    independent of process, platform and PYTHONHASHSEED; adding new parts
    elsewhere never perturbs existing streams.
    """
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def canonical_json(doc):
    """Deterministic JSON serialization (sorted keys, stable floats)."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def digest(doc):
    """Short hex digest of a JSON-serializable document."""
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()[:16]
