"""Hypervisor backends: the driver contract and an in-process mock.

The mock models each guest as a directory: disk/users holds the data the
experiment measures, disk/sys holds what the guest itself writes (start
marker, operation log, shadow backup).  Scheduled tasks run when the VM
is stopped, entirely on the simulated clock, so a full session costs
milliseconds of wall time.
"""

from __future__ import annotations

import hashlib
import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Mapping

from ransprof import jsonio
from ransprof.attack import attack_from_obj
from ransprof.corpus import corpus_spec_from_obj, generate_corpus
from ransprof.errors import OrchestrationError
from ransprof.flood import build_backup_archive, flood_from_obj
from ransprof.oplog import read_oplog, write_oplog
from ransprof.orchestrator.audit import NETWORK_CALLS  # noqa: F401  (re-export)
from ransprof.report import Report, ScanOptions, scan_directory
from ransprof.scenario import run_attack_scenario, timeline_from_obj

SENTINEL_NAME = "attack_started.json"
GUEST_LOG_NAME = "guest_ops.log"
BACKUP_NAME = "backup.zip"


class HypervisorBackend(ABC):
    """Driver for one virtualization substrate.

    Callers must route every invocation through the session's audited
    wrapper; the air-gap verifier works off that audit trail.  push_files
    and push_tasks are the only calls that may move data into a guest,
    and both must fail once the guest's network is disconnected.
    """

    name: str = "abstract"

    @abstractmethod
    def create_vm(self, session_id: str) -> str: ...

    @abstractmethod
    def start_vm(self, vm: str) -> None: ...

    @abstractmethod
    def push_files(self, vm: str, payload: Mapping[str, Any]) -> Report | None: ...

    @abstractmethod
    def push_tasks(self, vm: str, tasks: Mapping[str, Any]) -> None: ...

    @abstractmethod
    def disconnect_network(self, vm: str) -> None: ...

    @abstractmethod
    def verify_isolated(self, vm: str) -> str: ...

    @abstractmethod
    def stop_vm(self, vm: str) -> None: ...

    @abstractmethod
    def disk_dir(self, vm: str) -> Path: ...

    @abstractmethod
    def create_analysis_vm(self, session_id: str) -> str: ...

    @abstractmethod
    def attach_disk(self, vm: str, disk: str, *, read_only: bool) -> None: ...

    @abstractmethod
    def run_analysis(self, vm: str) -> Mapping[str, Any]: ...

    @abstractmethod
    def destroy(self, handle: str) -> None: ...


class MockBackend(HypervisorBackend):
    """Directory-per-guest backend that really runs the attack engine.

    failure_plan maps session_id -> call name; the named call raises
    OrchestrationError for that session, which is how tests and batteries
    force cleanup paths and invalid sessions.
    """

    name = "mock"

    def __init__(
        self,
        base_dir: str | Path,
        *,
        failure_plan: Mapping[str, str] | None = None,
    ) -> None:
        self._base = Path(base_dir)
        self._base.mkdir(parents=True, exist_ok=True)
        self._failure_plan = dict(failure_plan or {})
        self._vms: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()

    # -- registry helpers ------------------------------------------------

    def _entry(self, handle: str) -> dict[str, Any]:
        with self._lock:
            entry = self._vms.get(handle)
        if entry is None:
            raise OrchestrationError(f"unknown vm handle '{handle}'")
        if entry["state"] == "destroyed":
            raise OrchestrationError(f"vm '{handle}' is destroyed")
        return entry

    def _maybe_fail(self, session_id: str, call: str) -> None:
        if self._failure_plan.get(session_id) == call:
            raise OrchestrationError(f"injected fault in {call}")

    def states(self) -> dict[str, str]:
        """Handle -> lifecycle state snapshot (test observability)."""
        with self._lock:
            return {h: e["state"] for h, e in self._vms.items()}

    def disk_dir(self, vm: str) -> Path:
        return self._entry(vm)["dir"]

    # -- test vm lifecycle -----------------------------------------------

    def create_vm(self, session_id: str) -> str:
        self._maybe_fail(session_id, "create_vm")
        handle = f"vm-{session_id}"
        disk = self._base / session_id / "disk"
        (disk / "users").mkdir(parents=True, exist_ok=True)
        (disk / "sys").mkdir(parents=True, exist_ok=True)
        with self._lock:
            if handle in self._vms:
                raise OrchestrationError(f"vm '{handle}' already exists")
            self._vms[handle] = {
                "session": session_id,
                "dir": disk,
                "state": "created",
                "network": True,
                "tasks": None,
                "pristine": None,
                "attached": [],
            }
        return handle

    def start_vm(self, vm: str) -> None:
        entry = self._entry(vm)
        self._maybe_fail(entry["session"], "start_vm")
        entry["state"] = "running"

    def push_files(self, vm: str, payload: Mapping[str, Any]) -> Report | None:
        entry = self._entry(vm)
        self._maybe_fail(entry["session"], "push_files")
        if not entry["network"]:
            raise OrchestrationError("network unavailable: guest is isolated")
        kind = payload.get("kind")
        if kind == "noop":
            return None
        if kind != "corpus":
            raise OrchestrationError(f"unsupported payload kind '{kind}'")
        spec = corpus_spec_from_obj(payload["spec"], where="payload: spec")
        report = generate_corpus(spec, entry["dir"] / "users")
        entry["pristine"] = report
        return report

    def push_tasks(self, vm: str, tasks: Mapping[str, Any]) -> None:
        entry = self._entry(vm)
        self._maybe_fail(entry["session"], "push_tasks")
        if not entry["network"]:
            raise OrchestrationError("network unavailable: guest is isolated")
        entry["tasks"] = dict(tasks)
        flood = tasks.get("flood")
        if flood is not None and flood.get("kind") == "shadow":
            # the shadow writer snapshots the pristine tree before the test
            build_backup_archive(entry["dir"] / "users", entry["dir"] / "sys" / BACKUP_NAME)

    def disconnect_network(self, vm: str) -> None:
        entry = self._entry(vm)
        self._maybe_fail(entry["session"], "disconnect_network")
        entry["network"] = False

    def verify_isolated(self, vm: str) -> str:
        entry = self._entry(vm)
        self._maybe_fail(entry["session"], "verify_isolated")
        if entry["network"]:
            raise OrchestrationError("isolation check failed: network still connected")
        return hashlib.sha256(f"{vm}:isolated".encode("utf-8")).hexdigest()[:16]

    def stop_vm(self, vm: str) -> None:
        entry = self._entry(vm)
        self._maybe_fail(entry["session"], "stop_vm")
        if entry["tasks"] is not None:
            self._run_guest_tasks(entry)
        entry["state"] = "stopped"

    def _run_guest_tasks(self, entry: dict[str, Any]) -> None:
        tasks = entry["tasks"]
        pristine: Report | None = entry["pristine"]
        if pristine is None:
            raise OrchestrationError("tasks scheduled but no payload was pushed")
        timeline = timeline_from_obj(tasks.get("timeline") or {}, where="tasks: timeline")
        attack = attack_from_obj(tasks["attack"], where="tasks: attack") if tasks.get("attack") else None
        flood = flood_from_obj(tasks["flood"], where="tasks: flood") if tasks.get("flood") else None
        backup = entry["dir"] / "sys" / BACKUP_NAME
        result = run_attack_scenario(
            pristine,
            entry["dir"] / "users",
            attack=attack,
            flood=flood,
            timeline=timeline,
            seed=tasks.get("seed"),
            backup=backup if backup.exists() else None,
            flood_stop_at_s=tasks.get("flood_stop_at_s"),
        )
        entry["scenario_ops"] = len(result.executed)
        sys_dir = entry["dir"] / "sys"
        write_oplog(result.logged, sys_dir / GUEST_LOG_NAME)
        if result.executed:
            sentinel = {
                "started_at": jsonio.sim_time_rfc3339(result.logged[0].t),
                "first_op_t": result.logged[0].t,
                "ops_executed": len(result.executed),
                "seed": result.seed,
            }
            (sys_dir / SENTINEL_NAME).write_text(
                jsonio.canonical_dumps(sentinel), encoding="utf-8"
            )

    # -- analysis vm lifecycle ---------------------------------------------

    def create_analysis_vm(self, session_id: str) -> str:
        self._maybe_fail(session_id, "create_analysis_vm")
        handle = f"avm-{session_id}"
        with self._lock:
            if handle in self._vms:
                raise OrchestrationError(f"vm '{handle}' already exists")
            self._vms[handle] = {
                "session": session_id,
                "dir": None,
                "state": "running",
                "network": False,
                "tasks": None,
                "pristine": None,
                "attached": [],
            }
        return handle

    def attach_disk(self, vm: str, disk: str, *, read_only: bool) -> None:
        entry = self._entry(vm)
        self._maybe_fail(entry["session"], "attach_disk")
        if not read_only:
            raise OrchestrationError("refusing writable attachment of an evidence disk")
        if not Path(disk).is_dir():
            raise OrchestrationError(f"no such disk: {disk}")
        entry["attached"].append(str(disk))

    def run_analysis(self, vm: str) -> Mapping[str, Any]:
        entry = self._entry(vm)
        self._maybe_fail(entry["session"], "run_analysis")
        if not entry["attached"]:
            raise OrchestrationError("run_analysis before any disk was attached")
        disk = Path(entry["attached"][0])
        test_vm = f"vm-{entry['session']}"
        tasks = self._entry(test_vm)["tasks"] or {}
        timeline = timeline_from_obj(tasks.get("timeline") or {}, where="tasks: timeline")
        # the post scan is evidence, so it never reuses engine bookkeeping
        scanned_at = jsonio.sim_time_rfc3339(timeline.timeout_s / timeline.time_compression)
        report_post = scan_directory(disk / "users", ScanOptions(created_at=scanned_at))

        sentinel = None
        sentinel_path = disk / "sys" / SENTINEL_NAME
        if sentinel_path.is_file():
            sentinel = jsonio.canonical_loads(
                sentinel_path.read_text(encoding="utf-8"), where=str(sentinel_path)
            )
        guest_log = ()
        log_path = disk / "sys" / GUEST_LOG_NAME
        if log_path.is_file():
            guest_log = read_oplog(log_path)
        return {"report_post": report_post, "sentinel": sentinel, "guest_log": guest_log}

    def destroy(self, handle: str) -> None:
        with self._lock:
            entry = self._vms.get(handle)
            if entry is None:
                raise OrchestrationError(f"unknown vm handle '{handle}'")
            entry["state"] = "destroyed"


class ShellBackend(HypervisorBackend):
    """Integration seam for a real hypervisor driven by shell tooling.

    Not wired in this build: each method documents the contract it would
    fulfil and raises.  A deployment supplies the command plumbing and
    keeps the signatures (and the audited-call discipline) intact.
    """

    name = "shell"

    def _unwired(self, call: str) -> OrchestrationError:
        return OrchestrationError(f"shell backend is not configured (call: {call})")

    def create_vm(self, session_id: str) -> str:
        raise self._unwired("create_vm")

    def start_vm(self, vm: str) -> None:
        raise self._unwired("start_vm")

    def push_files(self, vm: str, payload: Mapping[str, Any]) -> Report | None:
        raise self._unwired("push_files")

    def push_tasks(self, vm: str, tasks: Mapping[str, Any]) -> None:
        raise self._unwired("push_tasks")

    def disconnect_network(self, vm: str) -> None:
        raise self._unwired("disconnect_network")

    def verify_isolated(self, vm: str) -> str:
        raise self._unwired("verify_isolated")

    def stop_vm(self, vm: str) -> None:
        raise self._unwired("stop_vm")

    def disk_dir(self, vm: str) -> Path:
        raise self._unwired("disk_dir")

    def create_analysis_vm(self, session_id: str) -> str:
        raise self._unwired("create_analysis_vm")

    def attach_disk(self, vm: str, disk: str, *, read_only: bool) -> None:
        raise self._unwired("attach_disk")

    def run_analysis(self, vm: str) -> Mapping[str, Any]:
        raise self._unwired("run_analysis")

    def destroy(self, handle: str) -> None:
        raise self._unwired("destroy")
