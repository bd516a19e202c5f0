"""Shared low-level helpers: timestamps, canonical JSON, hashing."""

from __future__ import annotations

import hashlib
import json
import re
from datetime import datetime, timezone

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

_NUMERIC = re.compile(r"[+-]?\d+(\.\d+)?")


def parse_timestamp(value) -> datetime:
    """Parse an RFC 3339 string or epoch seconds into an aware UTC datetime."""
    if isinstance(value, datetime):
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, float)):
        return datetime.fromtimestamp(float(value), tz=timezone.utc)
    if isinstance(value, str):
        s = value.strip()
        if _NUMERIC.fullmatch(s):
            return datetime.fromtimestamp(float(s), tz=timezone.utc)
        # datetime.fromisoformat on 3.10 does not accept a trailing Z
        s = re.sub(r"[Zz]$", "+00:00", s.replace(" ", "T", 1))
        dt = datetime.fromisoformat(s)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return dt.astimezone(timezone.utc)
    raise ValueError(f"not a timestamp: {value!r}")


def format_timestamp(dt: datetime) -> str:
    """RFC 3339 UTC string; sub-second digits only when present."""
    dt = parse_timestamp(dt)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def canon_dumps(obj) -> str:
    """Canonical JSON: sorted keys, compact separators, raw unicode."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def short_hash(text: str, n: int = 16) -> str:
    return sha256_hex(text)[:n]
