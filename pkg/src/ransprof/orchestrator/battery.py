"""Batteries: repeated sessions of one experiment, bounded parallelism.

A battery runs N repetitions of the same experiment spec, each with seeds
derived from seed_base + run index, validates every session, persists the
valid ones, and finishes by writing a manifest that records validity,
failure reasons and wall-clock intervals (the evidence that parallelism
stayed within bounds).
"""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from threading import Lock
from typing import Any, Collection

from ransprof import jsonio
from ransprof.attack import AttackStrategy, attack_from_obj
from ransprof.corpus import CorpusSpec, corpus_spec_from_obj
from ransprof.errors import OrchestrationError, StorageError
from ransprof.flood import FloodStrategy, flood_from_obj
from ransprof.orchestrator.audit import PHASE_ENTER, AuditLog, SimClock
from ransprof.orchestrator.backends import HypervisorBackend
from ransprof.orchestrator.session import (
    PhaseHook,
    SessionResult,
    SessionSpec,
    run_session,
    validate_session,
)
from ransprof.profiler import AggregateProfile, aggregate
from ransprof.scenario import SimTimeline, derive_seed, timeline_from_obj
from ransprof.storage import ResultStore, SessionArtifacts


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    corpus: CorpusSpec
    attack: AttackStrategy
    flood: FloodStrategy | None = None
    timeline: SimTimeline = SimTimeline()
    repetitions: int = 32
    parallelism: int = 2
    seed_base: int = 0

    def validate(self) -> None:
        if not self.name:
            raise OrchestrationError("experiment needs a name")
        if self.repetitions < 1:
            raise OrchestrationError("repetitions must be >= 1")
        if self.parallelism < 1:
            raise OrchestrationError("parallelism must be >= 1")
        self.corpus.validate()
        self.attack.validate()
        if self.flood is not None:
            self.flood.validate()
        self.timeline.validate()

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "corpus": self.corpus.to_dict(),
            "attack": self.attack.to_dict(),
            "flood": self.flood.to_dict() if self.flood is not None else None,
            "timeline": self.timeline.to_dict(),
            "repetitions": self.repetitions,
            "parallelism": self.parallelism,
            "seed_base": self.seed_base,
        }


def experiment_spec_from_obj(obj: Any, *, where: str = "experiment") -> ExperimentSpec:
    reader = jsonio.FieldReader(obj, where=where)
    flood_obj = reader.take("flood", (dict, type(None)), required=False, default=None)
    timeline_obj = reader.take("timeline", dict, required=False, default=None)
    spec = ExperimentSpec(
        name=reader.take("name", str),
        corpus=corpus_spec_from_obj(reader.take("corpus", dict), where=f"{where}: corpus"),
        attack=attack_from_obj(reader.take("attack", dict), where=f"{where}: attack"),
        flood=flood_from_obj(flood_obj, where=f"{where}: flood") if flood_obj else None,
        timeline=timeline_from_obj(timeline_obj or {}, where=f"{where}: timeline"),
        repetitions=reader.take("repetitions", int, required=False, default=32),
        parallelism=reader.take("parallelism", int, required=False, default=2),
        seed_base=reader.take("seed_base", int, required=False, default=0),
    )
    reader.reject_extras()
    spec.validate()
    return spec


def session_spec_for(spec: ExperimentSpec, run_index: int) -> SessionSpec:
    """Per-repetition spec: session seed is seed_base + index, the rest derive."""
    session_seed = spec.seed_base + run_index
    corpus = dataclasses.replace(spec.corpus, seed=derive_seed(session_seed, "corpus"))
    attack = dataclasses.replace(spec.attack, seed=derive_seed(session_seed, "attack"))
    flood = (
        dataclasses.replace(spec.flood, seed=derive_seed(session_seed, "flood"))
        if spec.flood is not None
        else None
    )
    return SessionSpec(
        session_id=f"r{run_index:02d}",
        corpus=corpus,
        attack=attack,
        flood=flood,
        timeline=spec.timeline,
        seed=session_seed,
        experiment=spec.name,
    )


@dataclass
class SessionOutcome:
    session_id: str
    run_index: int
    valid: bool
    reason: str | None
    phase: str
    wall_started: float
    wall_ended: float
    result: SessionResult

    def manifest_row(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "run_index": self.run_index,
            "valid": self.valid,
            "reason": self.reason,
            "phase": self.phase,
            "wall_started": self.wall_started,
            "wall_ended": self.wall_ended,
        }


@dataclass
class BatteryResult:
    battery_id: str
    outcomes: tuple[SessionOutcome, ...]
    aggregate: AggregateProfile | None
    peak_parallel: int
    wall_s: float

    @property
    def valid_count(self) -> int:
        return sum(1 for o in self.outcomes if o.valid)


class _ParallelMeter:
    def __init__(self) -> None:
        self._lock = Lock()
        self._active = 0
        self.peak = 0

    def __enter__(self) -> "_ParallelMeter":
        with self._lock:
            self._active += 1
            self.peak = max(self.peak, self._active)
        return self

    def __exit__(self, *exc: Any) -> None:
        with self._lock:
            self._active -= 1


def run_battery(
    spec: ExperimentSpec,
    store: ResultStore,
    backend: HypervisorBackend,
    *,
    force_invalid: Collection[int] = (),
    phase_hook: PhaseHook | None = None,
    phase_hook_for: Collection[int] = (),
) -> BatteryResult:
    """Run every repetition, persist the valid sessions, finish the manifest.

    force_invalid names run indices that are deliberately broken (their
    TasksInjected phase raises), which exercises the failure path without
    touching the backend.  phase_hook applies to the runs in
    phase_hook_for, or to all runs when that collection is empty.
    """
    spec.validate()
    started = time.monotonic()
    battery_id = store.begin_battery(spec.to_dict())
    forced = frozenset(force_invalid)
    hooked = frozenset(phase_hook_for)
    meter = _ParallelMeter()

    def hook_for(run_index: int) -> PhaseHook | None:
        hooks: list[PhaseHook] = []
        if run_index in forced:

            def sabotage(phase: str, handle: Any) -> None:
                if phase == "TasksInjected":
                    raise OrchestrationError("forced invalid run")

            hooks.append(sabotage)
        if phase_hook is not None and (not hooked or run_index in hooked):
            hooks.append(phase_hook)
        if not hooks:
            return None
        if len(hooks) == 1:
            return hooks[0]

        def chained(phase: str, handle: Any) -> None:
            for h in hooks:
                h(phase, handle)

        return chained

    def run_one(run_index: int) -> SessionOutcome:
        with meter:
            wall_started = time.monotonic()
            session_spec = session_spec_for(spec, run_index)
            audit = AuditLog(SimClock())
            result = run_session(
                session_spec, backend, audit=audit, phase_hook=hook_for(run_index)
            )
            valid, reason = validate_session(result)
            if valid:
                # the stored audit must carry the full phase history
                audit.record(
                    result.session_id, "Persisted", PHASE_ENTER, {"phase": "Persisted"}
                )
                result.phase = "Persisted"
                try:
                    store.store_session(
                        battery_id, result.session_id, SessionArtifacts.from_result(result)
                    )
                except StorageError as exc:
                    valid, reason = False, f"storage failed: {exc}"
            result.valid = valid
            result.invalid_reason = reason
            return SessionOutcome(
                session_id=result.session_id,
                run_index=run_index,
                valid=valid,
                reason=reason,
                phase=result.phase,
                wall_started=wall_started,
                wall_ended=time.monotonic(),
                result=result,
            )

    if spec.parallelism == 1:
        outcomes = [run_one(i) for i in range(spec.repetitions)]
    else:
        with ThreadPoolExecutor(max_workers=spec.parallelism) as pool:
            outcomes = list(pool.map(run_one, range(spec.repetitions)))

    summaries = [o.result.summary for o in outcomes if o.valid and o.result.summary]
    combined = aggregate(summaries) if summaries else None

    manifest = {
        "battery_id": battery_id,
        "experiment": spec.name,
        "created_at": jsonio.utc_now_rfc3339(),
        "parallelism": spec.parallelism,
        "peak_parallel": meter.peak,
        "repetitions": spec.repetitions,
        "valid_count": sum(1 for o in outcomes if o.valid),
        "sessions": [o.manifest_row() for o in outcomes],
    }
    store.finish_battery(
        battery_id,
        manifest,
        aggregate_text=combined.to_json_text() if combined is not None else None,
    )
    return BatteryResult(
        battery_id=battery_id,
        outcomes=tuple(outcomes),
        aggregate=combined,
        peak_parallel=meter.peak,
        wall_s=time.monotonic() - started,
    )
