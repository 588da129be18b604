"""Durable result store: battery dirs, session artifact dirs, one index.

Layout under the base directory:

    <battery_id>/spec.json                the experiment spec, written first
    <battery_id>/<session_id>/            exactly the five session artifacts
    <battery_id>/manifest.json            validity + timing for every session
    <battery_id>/aggregate.json           optional, over the valid sessions
    index.json                            catalog, always written last
    quarantine/                           where rebuild_index moves wreckage

Every file lands via temp-file-plus-rename, and index.json is only touched
under the file lock, so readers never observe a torn artifact.  Only valid
sessions get a directory; invalid ones exist solely as manifest entries.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import shutil
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping

from filelock import FileLock

from ransprof import jsonio
from ransprof.errors import ParseError, StorageError, ValidationError
from ransprof.profiler import SummaryProfile, read_summary
from ransprof.report import read_report

ARTIFACT_NAMES = (
    "report_pre.json",
    "report_post.json",
    "profile_hier.json",
    "profile_summary.json",
    "audit.log",
)

_RESERVED = {"index.json", "index.lock", "quarantine"}


@dataclass(frozen=True)
class SessionArtifacts:
    """The five per-session files, already serialized."""

    report_pre: str
    report_post: str
    hierarchy: str
    summary: str
    audit: str

    @classmethod
    def from_result(cls, result: Any) -> "SessionArtifacts":
        if (
            result.report_pre is None
            or result.report_post is None
            or result.hierarchy is None
            or result.summary is None
        ):
            raise ValidationError("cannot persist a session with incomplete artifacts")
        return cls(
            report_pre=result.report_pre.to_json_text(),
            report_post=result.report_post.to_json_text(),
            hierarchy=result.hierarchy.to_json_text(),
            summary=result.summary.to_json_text(),
            audit="".join(line + "\n" for line in result.audit.to_lines()),
        )

    def as_files(self) -> dict[str, str]:
        return {
            "report_pre.json": self.report_pre,
            "report_post.json": self.report_post,
            "profile_hier.json": self.hierarchy,
            "profile_summary.json": self.summary,
            "audit.log": self.audit,
        }


class ResultStore:
    """All writes are atomic; the index is the last thing updated.

    _fault_hook, when set, is called with a stage label before and after
    every durable step; tests raise from it to simulate crashes at each
    point and then prove rebuild_index restores consistency.
    """

    def __init__(self, base: str | Path) -> None:
        self.base = Path(base)
        self.base.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.base / "index.lock"), timeout=30)
        self._fault_hook: Callable[[str], None] | None = None

    # -- primitives --------------------------------------------------------

    def _fault(self, stage: str) -> None:
        if self._fault_hook is not None:
            self._fault_hook(stage)

    def _atomic_write(self, path: Path, text: str, stage: str) -> None:
        self._fault(f"pre:{stage}")
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self._fault(f"post:{stage}")

    def _load_index_unlocked(self) -> dict[str, Any]:
        path = self.base / "index.json"
        if not path.is_file():
            return {"version": 1, "generated_at": "", "batteries": {}}
        return jsonio.canonical_loads(path.read_text(encoding="utf-8"), where=str(path))

    def _write_index_unlocked(self, index: dict[str, Any]) -> None:
        index["generated_at"] = jsonio.utc_now_rfc3339()
        self._atomic_write(self.base / "index.json", jsonio.canonical_dumps(index), "index")

    def _update_index(self, mutate: Callable[[dict[str, Any]], None]) -> None:
        with self._lock:
            index = self._load_index_unlocked()
            mutate(index)
            self._write_index_unlocked(index)

    def load_index(self) -> dict[str, Any]:
        with self._lock:
            return self._load_index_unlocked()

    # -- battery lifecycle ---------------------------------------------------

    def begin_battery(self, spec_obj: Mapping[str, Any]) -> str:
        """Create the battery dir, persist its spec, return the new id."""
        digest = jsonio.canonical_dumps(dict(spec_obj))
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        battery_id = (
            f"{hashlib.sha256(digest.encode('utf-8')).hexdigest()[:12]}"
            f"-{stamp}-{secrets.token_hex(2)}"
        )
        bdir = self.base / battery_id
        if bdir.exists():
            raise StorageError(f"battery id collision: {battery_id}")
        bdir.mkdir(parents=True)
        self._atomic_write(bdir / "spec.json", digest, "spec")
        return battery_id

    def store_session(self, battery_id: str, session_id: str, artifacts: SessionArtifacts) -> Path:
        """Write the five artifacts then index the session; atomic per file."""
        bdir = self.base / battery_id
        if not bdir.is_dir():
            raise StorageError(f"unknown battery '{battery_id}'")
        sdir = bdir / session_id
        if sdir.exists():
            raise StorageError(f"session '{session_id}' already stored in '{battery_id}'")
        self._fault("pre:session-dir")
        sdir.mkdir()
        for name, text in artifacts.as_files().items():
            self._atomic_write(sdir / name, text, name)

        def mutate(index: dict[str, Any]) -> None:
            battery = index["batteries"].setdefault(
                battery_id, {"completed": False, "sessions": {}}
            )
            battery["sessions"][session_id] = {"valid": True, "reason": None}

        self._update_index(mutate)
        return sdir

    def finish_battery(
        self,
        battery_id: str,
        manifest_obj: Mapping[str, Any],
        *,
        aggregate_text: str | None = None,
    ) -> None:
        bdir = self.base / battery_id
        if not bdir.is_dir():
            raise StorageError(f"unknown battery '{battery_id}'")
        if aggregate_text is not None:
            self._atomic_write(bdir / "aggregate.json", aggregate_text, "aggregate")
        self._atomic_write(bdir / "manifest.json", jsonio.canonical_dumps(dict(manifest_obj)), "manifest")

        def mutate(index: dict[str, Any]) -> None:
            battery = index["batteries"].setdefault(
                battery_id, {"completed": False, "sessions": {}}
            )
            for row in manifest_obj.get("sessions", []):
                battery["sessions"][row["session_id"]] = {
                    "valid": bool(row["valid"]),
                    "reason": row.get("reason"),
                }
            battery["completed"] = True

        self._update_index(mutate)

    # -- readers ---------------------------------------------------------------

    def battery_ids(self) -> list[str]:
        return sorted(
            p.name for p in self.base.iterdir() if p.is_dir() and p.name not in _RESERVED
        )

    def session_dir(self, battery_id: str, session_id: str) -> Path:
        return self.base / battery_id / session_id

    def load_spec(self, battery_id: str) -> dict[str, Any]:
        path = self.base / battery_id / "spec.json"
        if not path.is_file():
            raise StorageError(f"battery '{battery_id}' has no spec")
        return jsonio.canonical_loads(path.read_text(encoding="utf-8"), where=str(path))

    def load_manifest(self, battery_id: str) -> dict[str, Any]:
        path = self.base / battery_id / "manifest.json"
        if not path.is_file():
            raise StorageError(f"battery '{battery_id}' has no manifest (still running?)")
        return jsonio.canonical_loads(path.read_text(encoding="utf-8"), where=str(path))

    def load_summaries(
        self, battery_id: str, *, valid_only: bool = True
    ) -> list[SummaryProfile]:
        manifest = self.load_manifest(battery_id)
        summaries = []
        for row in manifest.get("sessions", []):
            if valid_only and not row["valid"]:
                continue
            path = self.session_dir(battery_id, row["session_id"]) / "profile_summary.json"
            if not path.is_file():
                if row["valid"]:
                    raise StorageError(f"valid session '{row['session_id']}' lost its summary")
                continue
            summaries.append(read_summary(path))
        return summaries

    # -- recovery ------------------------------------------------------------

    def _quarantine(self, path: Path, moved: list[str]) -> None:
        qdir = self.base / "quarantine"
        qdir.mkdir(exist_ok=True)
        dest = qdir / f"{path.parent.name}-{path.name}"
        n = 1
        while dest.exists():
            dest = qdir / f"{path.parent.name}-{path.name}.{n}"
            n += 1
        shutil.move(str(path), str(dest))
        moved.append(str(dest))

    def _session_parses(self, sdir: Path) -> bool:
        # deferred: the orchestrator package imports this module at load time
        from ransprof.orchestrator.audit import audit_from_lines

        try:
            read_report(sdir / "report_pre.json")
            read_report(sdir / "report_post.json")
            json.loads((sdir / "profile_hier.json").read_text(encoding="utf-8"))
            read_summary(sdir / "profile_summary.json")
            audit_from_lines(
                (sdir / "audit.log").read_text(encoding="utf-8").splitlines(),
                where=str(sdir / "audit.log"),
            )
        except (ParseError, ValidationError, OSError, json.JSONDecodeError):
            return False
        return True

    def rebuild_index(self) -> dict[str, Any]:
        """Walk the store, quarantine anything broken, write a fresh index.

        A session dir survives only with exactly the five artifacts, all
        parseable.  Validity comes from the battery manifest when one
        exists; complete sessions of an unfinished battery count as valid.
        """
        moved: list[str] = []
        batteries: dict[str, Any] = {}
        for bdir in sorted(self.base.iterdir()):
            if not bdir.is_dir() or bdir.name in _RESERVED:
                continue
            try:
                self.load_spec(bdir.name)
            except (StorageError, ParseError):
                self._quarantine(bdir, moved)
                continue
            validity: dict[str, dict[str, Any]] = {}
            completed = False
            manifest_path = bdir / "manifest.json"
            if manifest_path.is_file():
                try:
                    manifest = jsonio.canonical_loads(
                        manifest_path.read_text(encoding="utf-8"), where=str(manifest_path)
                    )
                    completed = True
                    for row in manifest.get("sessions", []):
                        validity[row["session_id"]] = {
                            "valid": bool(row["valid"]),
                            "reason": row.get("reason"),
                        }
                except (ParseError, KeyError, TypeError):
                    self._quarantine(manifest_path, moved)
            sessions: dict[str, Any] = {}
            for sdir in sorted(p for p in bdir.iterdir() if p.is_dir()):
                names = {p.name for p in sdir.iterdir()}
                if names != set(ARTIFACT_NAMES) or not self._session_parses(sdir):
                    self._quarantine(sdir, moved)
                    continue
                sessions[sdir.name] = validity.get(sdir.name, {"valid": True, "reason": None})
            # manifest rows for invalid sessions have no dir, keep them
            for sid, row in validity.items():
                sessions.setdefault(sid, row)
            batteries[bdir.name] = {"completed": completed, "sessions": sessions}

        with self._lock:
            self._write_index_unlocked(
                {"version": 1, "generated_at": "", "batteries": batteries}
            )
        return {
            "batteries": len(batteries),
            "sessions": sum(len(b["sessions"]) for b in batteries.values()),
            "quarantined": moved,
        }
