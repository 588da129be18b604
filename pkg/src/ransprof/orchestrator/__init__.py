"""Experiment orchestration: isolated sessions, audit trails, batteries."""

from ransprof.orchestrator.audit import (
    AuditEvent,
    AuditLog,
    SimClock,
    find_air_gap_violations,
    read_audit,
    write_audit,
)
from ransprof.orchestrator.backends import (
    NETWORK_CALLS,
    HypervisorBackend,
    MockBackend,
)
from ransprof.orchestrator.battery import (
    BatteryResult,
    ExperimentSpec,
    experiment_spec_from_obj,
    run_battery,
)
from ransprof.orchestrator.session import (
    PHASE_ORDER,
    SessionResult,
    SessionSpec,
    run_session,
    validate_session,
)

__all__ = [
    "AuditEvent",
    "AuditLog",
    "BatteryResult",
    "ExperimentSpec",
    "HypervisorBackend",
    "MockBackend",
    "NETWORK_CALLS",
    "PHASE_ORDER",
    "SessionResult",
    "SessionSpec",
    "SimClock",
    "experiment_spec_from_obj",
    "find_air_gap_violations",
    "read_audit",
    "run_battery",
    "run_session",
    "validate_session",
    "write_audit",
]
