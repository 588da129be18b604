"""Canonical JSON serialization and strict parsing helpers.

Every document this package writes uses one canonical form so that equal
values serialize to byte-identical files: keys in the documented order
(dicts are emitted in insertion order), no whitespace except a single space
after each colon, UTF-8 text, and a single trailing newline.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Any

from ransprof.errors import ParseError

# Deterministic epoch used wherever an artifact needs a timestamp that must
# be reproducible across runs (simulated sessions, generated corpora).
SIM_EPOCH = "2000-01-01T00:00:00Z"


def canonical_dumps(obj: Any) -> str:
    """Serialize to the canonical JSON text form (with trailing newline)."""
    return json.dumps(obj, separators=(",", ": "), ensure_ascii=False) + "\n"


def canonical_loads(text: str, *, where: str = "document") -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{where}: invalid JSON: {exc}") from exc


def utc_now_rfc3339() -> str:
    """Current wall-clock time as an RFC 3339 UTC string (second precision)."""
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def sim_time_rfc3339(offset_s: float) -> str:
    """Deterministic RFC 3339 timestamp at SIM_EPOCH + offset seconds."""
    base = datetime(2000, 1, 1, tzinfo=timezone.utc)
    stamped = datetime.fromtimestamp(base.timestamp() + offset_s, tz=timezone.utc)
    return stamped.strftime("%Y-%m-%dT%H:%M:%SZ")


class FieldReader:
    """Strict reader over one parsed JSON object.

    Tracks which fields were consumed so callers can reject (strict mode) or
    collect (lenient mode) unknown fields, and raises ParseError messages
    that name the offending field.
    """

    def __init__(self, obj: Any, *, where: str):
        if not isinstance(obj, dict):
            raise ParseError(f"{where}: expected a JSON object, got {type(obj).__name__}")
        self._obj = obj
        self._where = where
        self._seen: set[str] = set()

    def take(self, field: str, kind: type | tuple[type, ...], *, required: bool = True, default: Any = None) -> Any:
        if field not in self._obj:
            if required:
                raise ParseError(f"{self._where}: missing required field '{field}'")
            return default
        self._seen.add(field)
        value = self._obj[field]
        if isinstance(value, bool):
            # bool subclasses int; only accept it where bool was asked for
            ok = kind is bool or (isinstance(kind, tuple) and bool in kind)
        else:
            ok = isinstance(value, kind)
        if not ok:
            want = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            raise ParseError(
                f"{self._where}: field '{field}' must be {want}, got {type(value).__name__}"
            )
        return value

    def take_optional_str(self, field: str) -> str | None:
        if field not in self._obj:
            return None
        self._seen.add(field)
        value = self._obj[field]
        if value is None or isinstance(value, str):
            return value
        raise ParseError(f"{self._where}: field '{field}' must be string or null")

    def extras(self) -> dict[str, Any]:
        """Fields present in the object that no take() consumed, in input order."""
        return {k: v for k, v in self._obj.items() if k not in self._seen}

    def reject_extras(self) -> None:
        unknown = [k for k in self._obj if k not in self._seen]
        if unknown:
            raise ParseError(f"{self._where}: unknown field '{unknown[0]}'")
