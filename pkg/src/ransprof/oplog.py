"""Operation logs: ordered mutation events, one JSON object per line.

Event wire format: {"t": seconds, "op": kind, "src": path, "dst": path|null}.
For delete the operand is src and dst is null.  flood_write follows the same
convention: copy-sourced decoys log src=source and dst=decoy, content-free
random decoys log src=decoy and dst=null (the decoy is the operand).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from ransprof import jsonio
from ransprof.errors import ParseError

OP_COPY = "copy"
OP_ENCRYPT = "encrypt"
OP_DELETE = "delete"
OP_RENAME = "rename"
OP_FLOOD_WRITE = "flood_write"

ALL_OPS = (OP_COPY, OP_ENCRYPT, OP_DELETE, OP_RENAME, OP_FLOOD_WRITE)


@dataclass(frozen=True)
class OpEvent:
    """One applied mutation on the simulated tree."""

    t: float
    op: str
    src: str
    dst: str | None

    def to_dict(self) -> dict[str, Any]:
        return {"t": float(self.t), "op": self.op, "src": self.src, "dst": self.dst}


def event_from_obj(obj: Any, *, where: str) -> OpEvent:
    reader = jsonio.FieldReader(obj, where=where)
    t = reader.take("t", (int, float))
    op = reader.take("op", str)
    src = reader.take("src", str)
    dst = reader.take_optional_str("dst")
    reader.reject_extras()
    if op not in ALL_OPS:
        raise ParseError(f"{where}: unknown op '{op}'")
    return OpEvent(float(t), op, src, dst)


def write_oplog(events: Sequence[OpEvent], dest: str | Path) -> Path:
    dest = Path(dest)
    lines = [json.dumps(e.to_dict(), separators=(",", ": "), ensure_ascii=False) for e in events]
    dest.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return dest


def read_oplog(source: str | Path) -> tuple[OpEvent, ...]:
    events = []
    for i, line in enumerate(Path(source).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        obj = jsonio.canonical_loads(line, where=f"{source}:{i + 1}")
        events.append(event_from_obj(obj, where=f"{source}:{i + 1}"))
    return tuple(events)


def events_to_dicts(events: Iterable[OpEvent]) -> list[dict[str, Any]]:
    return [e.to_dict() for e in events]
