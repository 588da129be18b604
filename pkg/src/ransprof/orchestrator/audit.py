"""Session audit trails and the air-gap verifier built on them.

Every backend call an orchestrated session makes is recorded before the
backend is invoked, so refused attempts still leave evidence.  Phase
transitions are events too (call "phase.enter"), which is what lets the
verifier reconstruct the isolation window from a log alone.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from ransprof import jsonio
from ransprof.errors import ParseError

PHASE_ENTER = "phase.enter"
GUEST_ATTACK_START = "guest.attack_start"

# calls that can move data in or out of a guest
NETWORK_CALLS = frozenset({"push_files", "push_tasks"})

ISOLATION_OPENS = "Isolated"
ISOLATION_CLOSES = "TestStopped"


def args_digest(args: Mapping[str, Any]) -> str:
    """sha256 over the canonical JSON of the call arguments."""
    text = json.dumps(args, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AuditEvent:
    t: str  # RFC 3339
    session: str
    phase: str
    call: str
    args_digest: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "session": self.session,
            "phase": self.phase,
            "call": self.call,
            "args_digest": self.args_digest,
        }


def event_from_obj(obj: Any, *, where: str) -> AuditEvent:
    reader = jsonio.FieldReader(obj, where=where)
    event = AuditEvent(
        t=reader.take("t", str),
        session=reader.take("session", str),
        phase=reader.take("phase", str),
        call=reader.take("call", str),
        args_digest=reader.take("args_digest", str),
    )
    reader.reject_extras()
    return event


class SimClock:
    """Deterministic RFC 3339 clock: SIM_EPOCH + k * step."""

    def __init__(self, *, start_offset_s: float = 0.0, step_s: float = 1.0) -> None:
        self._offset = start_offset_s
        self._step = step_s
        self._ticks = 0
        self._lock = threading.Lock()

    def __call__(self) -> str:
        with self._lock:
            stamp = jsonio.sim_time_rfc3339(self._offset + self._ticks * self._step)
            self._ticks += 1
            return stamp


class AuditLog:
    """Append-only, thread-safe event recorder for one session or battery."""

    def __init__(self, clock: Callable[[], str] | None = None) -> None:
        self._clock = clock or jsonio.utc_now_rfc3339
        self._events: list[AuditEvent] = []
        self._lock = threading.Lock()

    def record(self, session: str, phase: str, call: str, args: Mapping[str, Any]) -> AuditEvent:
        with self._lock:
            event = AuditEvent(self._clock(), session, phase, call, args_digest(args))
            self._events.append(event)
            return event

    @property
    def events(self) -> tuple[AuditEvent, ...]:
        with self._lock:
            return tuple(self._events)

    def to_lines(self) -> list[str]:
        return [
            json.dumps(e.to_dict(), separators=(",", ": "), ensure_ascii=False)
            for e in self.events
        ]


def write_audit(events: Iterable[AuditEvent], dest: str | Path) -> Path:
    dest = Path(dest)
    lines = [json.dumps(e.to_dict(), separators=(",", ": "), ensure_ascii=False) for e in events]
    dest.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return dest


def read_audit(source: str | Path) -> tuple[AuditEvent, ...]:
    events = []
    for i, line in enumerate(Path(source).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        where = f"{source}:{i + 1}"
        events.append(event_from_obj(jsonio.canonical_loads(line, where=where), where=where))
    return tuple(events)


def find_air_gap_violations(
    events: Sequence[AuditEvent],
    *,
    network_calls: frozenset[str] = NETWORK_CALLS,
) -> tuple[AuditEvent, ...]:
    """Network-capable calls attempted inside any session's isolation window.

    The window opens when a session enters Isolated and closes when it
    enters TestStopped.  Interleaved sessions are tracked independently.
    """
    in_window: dict[str, bool] = {}
    violations: list[AuditEvent] = []
    for event in events:
        if event.call == PHASE_ENTER:
            if event.phase == ISOLATION_OPENS:
                in_window[event.session] = True
            elif event.phase == ISOLATION_CLOSES:
                in_window[event.session] = False
        elif event.call in network_calls and in_window.get(event.session, False):
            violations.append(event)
    return tuple(violations)


def phase_sequence(events: Sequence[AuditEvent], session: str) -> tuple[str, ...]:
    """Phases the session entered, in log order."""
    return tuple(
        e.phase for e in events if e.session == session and e.call == PHASE_ENTER
    )


def audit_from_lines(lines: Iterable[str], *, where: str = "audit") -> tuple[AuditEvent, ...]:
    events = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        spot = f"{where}:{i + 1}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{spot}: {exc}") from exc
        events.append(event_from_obj(obj, where=spot))
    return tuple(events)
