"""One experiment session: phase machine, audited backend calls, validity.

A session drives a guest through a fixed phase progression, records every
backend call into its audit log before invoking it, and derives the four
analysis artifacts from the pre/post reports.  Stored artifacts carry
virtual roots (vm://users) instead of host paths, so identical runs
produce identical bytes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from ransprof.attack import AttackStrategy
from ransprof.corpus import CorpusSpec
from ransprof.flood import FloodStrategy
from ransprof.orchestrator.audit import (
    GUEST_ATTACK_START,
    PHASE_ENTER,
    AuditEvent,
    AuditLog,
    SimClock,
    find_air_gap_violations,
    phase_sequence,
)
from ransprof.orchestrator.backends import HypervisorBackend
from ransprof.profiler import (
    ExperimentContext,
    HierarchicalProfile,
    SummaryProfile,
    build_hierarchy,
    classify,
    summarize,
)
from ransprof.report import Report
from ransprof.scenario import SimTimeline

PHASE_ORDER = (
    "Created",
    "Started",
    "PayloadInjected",
    "TasksInjected",
    "Isolated",
    "AttackRunning",
    "CountermeasureRunning",
    "TimedOut",
    "TestStopped",
    "AnalysisCreated",
    "DisksMounted",
    "Analyzed",
    "Persisted",
)
INIT_PHASE = "Init"
FAILED_PHASE = "Failed"

# stored artifacts use this instead of the backend's host paths
VIRTUAL_ROOT = "vm://users"
VIRTUAL_DISK = "vm://disk"


@dataclass(frozen=True)
class SessionSpec:
    session_id: str
    corpus: CorpusSpec
    attack: AttackStrategy
    flood: FloodStrategy | None
    timeline: SimTimeline
    seed: int  # scenario content seed; strategies carry their own
    experiment: str = "adhoc"


@dataclass
class SessionResult:
    session_id: str
    phase: str
    error: str | None
    report_pre: Report | None
    report_post: Report | None
    hierarchy: HierarchicalProfile | None
    summary: SummaryProfile | None
    sentinel: Mapping[str, Any] | None
    audit: AuditLog
    valid: bool = False
    invalid_reason: str | None = None

    @property
    def audit_events(self) -> tuple[AuditEvent, ...]:
        return self.audit.events


class SessionHandle:
    """Hook surface: lets phase hooks issue audited backend calls."""

    def __init__(self, session_id: str, caller: Callable[..., Any]) -> None:
        self.session_id = session_id
        self.vm: str | None = None
        self._caller = caller

    def call(self, name: str, *args: Any, audit_args: Mapping[str, Any], **kwargs: Any) -> Any:
        return self._caller(name, *args, audit_args=audit_args, **kwargs)


PhaseHook = Callable[[str, SessionHandle], None]


def run_session(
    spec: SessionSpec,
    backend: HypervisorBackend,
    *,
    audit: AuditLog | None = None,
    phase_hook: PhaseHook | None = None,
) -> SessionResult:
    """Drive one session end to end; never raises, failures land in phase.

    The test disk is attached read-only to a separate analysis guest; the
    attack-start marker the guest dropped is harvested into the audit log.
    Both guests are destroyed no matter where the session stops.
    """
    audit = audit if audit is not None else AuditLog(SimClock())
    sid = spec.session_id
    phase = [INIT_PHASE]

    def call(name: str, *args: Any, audit_args: Mapping[str, Any], **kwargs: Any) -> Any:
        # record first: refused attempts must still leave evidence
        audit.record(sid, phase[0], name, audit_args)
        return getattr(backend, name)(*args, **kwargs)

    handle = SessionHandle(sid, call)

    def enter(name: str) -> None:
        phase[0] = name
        audit.record(sid, name, PHASE_ENTER, {"phase": name})
        if phase_hook is not None:
            phase_hook(name, handle)

    vm: str | None = None
    avm: str | None = None
    error: str | None = None
    report_pre: Report | None = None
    report_post: Report | None = None
    hierarchy: HierarchicalProfile | None = None
    summary: SummaryProfile | None = None
    sentinel: Mapping[str, Any] | None = None

    try:
        vm = call("create_vm", sid, audit_args={"session": sid})
        handle.vm = vm
        enter("Created")

        call("start_vm", vm, audit_args={"vm": vm})
        enter("Started")

        payload = {"kind": "corpus", "spec": spec.corpus.to_dict()}
        report_pre = call("push_files", vm, payload, audit_args={"vm": vm, "payload": payload})
        enter("PayloadInjected")

        tasks = {
            "attack": spec.attack.to_dict(),
            "flood": spec.flood.to_dict() if spec.flood is not None else None,
            "timeline": spec.timeline.to_dict(),
            "seed": spec.seed,
        }
        call("push_tasks", vm, tasks, audit_args={"vm": vm, "tasks": tasks})
        enter("TasksInjected")

        call("disconnect_network", vm, audit_args={"vm": vm})
        token = call("verify_isolated", vm, audit_args={"vm": vm})
        audit.record(sid, phase[0], "isolation.token", {"token": token})
        enter("Isolated")

        enter("AttackRunning")
        if spec.flood is not None:
            enter("CountermeasureRunning")
        enter("TimedOut")  # the guest's simulated clock hit the timeout

        call("stop_vm", vm, audit_args={"vm": vm})
        enter("TestStopped")

        avm = call("create_analysis_vm", sid, audit_args={"session": sid})
        enter("AnalysisCreated")

        disk = str(backend.disk_dir(vm))
        call(
            "attach_disk",
            avm,
            disk,
            read_only=True,
            audit_args={"vm": avm, "disk": VIRTUAL_DISK, "read_only": True},
        )
        enter("DisksMounted")

        analysis = call("run_analysis", avm, audit_args={"vm": avm})
        report_post = analysis["report_post"]
        sentinel = analysis.get("sentinel")
        if sentinel is not None:
            audit.record(sid, phase[0], GUEST_ATTACK_START, dict(sentinel))
        enter("Analyzed")

        if report_pre is None:
            raise ValueError("payload injection produced no pristine report")
        diff = classify(report_pre, report_post)
        context = ExperimentContext(
            experiment=spec.experiment,
            ransomware=spec.attack.kind,
            countermeasure=spec.flood.kind if spec.flood is not None else None,
            root=VIRTUAL_ROOT,
            timestamp=report_post.created_at,
        )
        hierarchy = build_hierarchy(diff, context)
        summary = summarize(hierarchy)
        report_pre = dataclasses.replace(report_pre, root=VIRTUAL_ROOT)
        report_post = dataclasses.replace(report_post, root=VIRTUAL_ROOT)
    except Exception as exc:  # noqa: BLE001  any failure fails the session
        error = f"{type(exc).__name__}: {exc}"
        phase[0] = FAILED_PHASE
        audit.record(sid, FAILED_PHASE, PHASE_ENTER, {"phase": FAILED_PHASE, "reason": error})
    finally:
        for doomed in (avm, vm):
            if doomed is None:
                continue
            try:
                call("destroy", doomed, audit_args={"handle": doomed})
            except Exception:  # noqa: BLE001  cleanup must reach every guest
                audit.record(sid, phase[0], "destroy.failed", {"handle": doomed})

    return SessionResult(
        session_id=sid,
        phase=phase[0],
        error=error,
        report_pre=report_pre,
        report_post=report_post,
        hierarchy=hierarchy,
        summary=summary,
        sentinel=sentinel,
        audit=audit,
    )


def expected_phases(*, with_countermeasure: bool) -> tuple[str, ...]:
    phases = [p for p in PHASE_ORDER if p != "Persisted"]
    if not with_countermeasure:
        phases = [p for p in phases if p != "CountermeasureRunning"]
    return tuple(phases)


def validate_session(result: SessionResult) -> tuple[bool, str | None]:
    """Session validity per the acceptance rules; reason names the first failure.

    Checks, in order: the session completed, its phase progression is the
    canonical one, the guest's attack-start marker was harvested, all four
    analysis artifacts exist, and no network-capable call was attempted
    inside the isolation window.
    """
    events = result.audit.events
    if result.phase == FAILED_PHASE or result.error is not None:
        return False, f"session failed: {result.error}"

    seq = phase_sequence(events, result.session_id)
    if seq and seq[-1] == "Persisted":
        seq = seq[:-1]
    if seq not in (
        expected_phases(with_countermeasure=True),
        expected_phases(with_countermeasure=False),
    ):
        return False, "phase order violated"

    if not any(e.call == GUEST_ATTACK_START and e.session == result.session_id for e in events):
        return False, "attack start marker missing"

    if (
        result.report_pre is None
        or result.report_post is None
        or result.hierarchy is None
        or result.summary is None
    ):
        return False, "artifacts incomplete"

    violations = find_air_gap_violations(events)
    if any(v.session == result.session_id for v in violations):
        return False, "air-gap violation"
    return True, None
