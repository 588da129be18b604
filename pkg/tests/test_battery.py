"""Battery runner: seed derivation, parallel execution, persistence."""

from __future__ import annotations

import json

import pytest

from ransprof.attack import AttackStrategy
from ransprof.corpus import default_corpus_spec
from ransprof.errors import OrchestrationError, ParseError, StorageError
from ransprof.flood import FloodStrategy
from ransprof.orchestrator import ExperimentSpec, MockBackend, run_battery
from ransprof.orchestrator.battery import experiment_spec_from_obj, session_spec_for
from ransprof.scenario import SimTimeline, derive_seed
from ransprof.storage import ARTIFACT_NAMES, ResultStore


def small_experiment(*, repetitions: int = 4, parallelism: int = 2, flood: bool = False) -> ExperimentSpec:
    return ExperimentSpec(
        name="smoke",
        corpus=default_corpus_spec(seed=0, files_per_folder=2, total_bytes=1 << 14),
        attack=AttackStrategy(kind="copy_then_encrypt", io_budget=9, seed=0),
        flood=FloodStrategy(
            kind="random", target_folders=("Documents",), start_delay_s=25.0,
            rate_per_s=1.0, instances=1,
        )
        if flood
        else None,
        timeline=SimTimeline(timeout_s=30.0),
        repetitions=repetitions,
        parallelism=parallelism,
        seed_base=100,
    )


class TestSessionDerivation:
    def test_ids_and_seeds_follow_run_index(self) -> None:
        spec = small_experiment()
        s0 = session_spec_for(spec, 0)
        s7 = session_spec_for(spec, 7)
        assert (s0.session_id, s7.session_id) == ("r00", "r07")
        assert s0.seed == 100 and s7.seed == 107
        assert s7.corpus.seed == derive_seed(107, "corpus")
        assert s7.attack.seed == derive_seed(107, "attack")

    def test_repetitions_differ_only_in_seeds(self) -> None:
        spec = small_experiment()
        a, b = session_spec_for(spec, 0), session_spec_for(spec, 1)
        assert a.corpus.seed != b.corpus.seed
        assert a.timeline == b.timeline
        assert a.experiment == b.experiment == "smoke"

    def test_flood_seed_derived_when_present(self) -> None:
        spec = small_experiment(flood=True)
        s3 = session_spec_for(spec, 3)
        assert s3.flood.seed == derive_seed(103, "flood")


class TestExperimentSpecJson:
    def test_round_trip(self) -> None:
        spec = small_experiment(flood=True)
        assert experiment_spec_from_obj(spec.to_dict()) == spec

    def test_round_trip_without_flood(self) -> None:
        spec = small_experiment()
        assert experiment_spec_from_obj(spec.to_dict()) == spec

    def test_unknown_field_rejected(self) -> None:
        obj = small_experiment().to_dict()
        obj["surprise"] = 1
        with pytest.raises(ParseError, match="surprise"):
            experiment_spec_from_obj(obj)

    @pytest.mark.parametrize("field,value", [("repetitions", 0), ("parallelism", 0), ("name", "")])
    def test_invalid_values_rejected(self, field, value) -> None:
        obj = small_experiment().to_dict()
        obj[field] = value
        with pytest.raises(OrchestrationError):
            experiment_spec_from_obj(obj)


class TestRunBattery:
    def test_all_valid_battery(self, tmp_path) -> None:
        spec = small_experiment()
        result = run_battery(spec, ResultStore(tmp_path / "store"), MockBackend(tmp_path / "vms"))
        assert result.valid_count == 4
        assert [o.session_id for o in result.outcomes] == ["r00", "r01", "r02", "r03"]
        assert all(o.phase == "Persisted" for o in result.outcomes)
        assert result.aggregate is not None
        assert result.peak_parallel <= 2

    def test_forced_invalid_runs_are_skipped_from_storage(self, tmp_path) -> None:
        spec = small_experiment()
        store = ResultStore(tmp_path / "store")
        result = run_battery(spec, store, MockBackend(tmp_path / "vms"), force_invalid=(1, 3))
        assert result.valid_count == 2
        bad = {o.session_id: o.reason for o in result.outcomes if not o.valid}
        assert bad == {
            "r01": "session failed: OrchestrationError: forced invalid run",
            "r03": "session failed: OrchestrationError: forced invalid run",
        }
        bdir = tmp_path / "store" / result.battery_id
        assert (bdir / "r00").is_dir() and (bdir / "r02").is_dir()
        assert not (bdir / "r01").exists() and not (bdir / "r03").exists()

    def test_stored_sessions_have_exactly_the_artifacts(self, tmp_path) -> None:
        spec = small_experiment(repetitions=2)
        store = ResultStore(tmp_path / "store")
        result = run_battery(spec, store, MockBackend(tmp_path / "vms"))
        sdir = store.session_dir(result.battery_id, "r00")
        assert sorted(p.name for p in sdir.iterdir()) == sorted(ARTIFACT_NAMES)

    def test_manifest_matches_outcomes(self, tmp_path) -> None:
        spec = small_experiment()
        store = ResultStore(tmp_path / "store")
        result = run_battery(spec, store, MockBackend(tmp_path / "vms"), force_invalid=(2,))
        manifest = store.load_manifest(result.battery_id)
        assert manifest["valid_count"] == 3
        assert manifest["repetitions"] == 4
        assert manifest["peak_parallel"] == result.peak_parallel
        rows = {row["session_id"]: row for row in manifest["sessions"]}
        assert set(rows) == {"r00", "r01", "r02", "r03"}
        assert rows["r02"]["valid"] is False
        for row in rows.values():
            assert row["wall_started"] <= row["wall_ended"]

    def test_index_completed_after_battery(self, tmp_path) -> None:
        spec = small_experiment(repetitions=2)
        store = ResultStore(tmp_path / "store")
        result = run_battery(spec, store, MockBackend(tmp_path / "vms"))
        index = store.load_index()
        battery = index["batteries"][result.battery_id]
        assert battery["completed"] is True
        assert set(battery["sessions"]) == {"r00", "r01"}

    def test_serial_battery_peaks_at_one(self, tmp_path) -> None:
        spec = small_experiment(repetitions=3, parallelism=1)
        result = run_battery(spec, ResultStore(tmp_path / "store"), MockBackend(tmp_path / "vms"))
        assert result.peak_parallel == 1
        assert result.valid_count == 3

    def test_all_invalid_battery_has_no_aggregate(self, tmp_path) -> None:
        spec = small_experiment(repetitions=2)
        store = ResultStore(tmp_path / "store")
        result = run_battery(
            spec, store, MockBackend(tmp_path / "vms"), force_invalid=(0, 1)
        )
        assert result.valid_count == 0
        assert result.aggregate is None
        assert not (tmp_path / "store" / result.battery_id / "aggregate.json").exists()
        assert store.load_manifest(result.battery_id)["valid_count"] == 0

    def test_aggregate_covers_only_valid_sessions(self, tmp_path) -> None:
        spec = small_experiment()
        store = ResultStore(tmp_path / "store")
        result = run_battery(spec, store, MockBackend(tmp_path / "vms"), force_invalid=(0,))
        assert result.aggregate is not None
        assert result.aggregate.n == 3
        text = (tmp_path / "store" / result.battery_id / "aggregate.json").read_text(encoding="utf-8")
        assert json.loads(text) == json.loads(result.aggregate.to_json_text())

    def test_flooded_battery_runs_countermeasure_phases(self, tmp_path) -> None:
        spec = small_experiment(repetitions=2, flood=True)
        result = run_battery(spec, ResultStore(tmp_path / "store"), MockBackend(tmp_path / "vms"))
        assert result.valid_count == 2
        phases = [e.phase for e in result.outcomes[0].result.audit_events]
        assert "CountermeasureRunning" in phases

    def test_targeted_hook_invalidates_only_its_run(self, tmp_path) -> None:
        def adversary(phase: str, handle) -> None:
            if phase != "AttackRunning":
                return
            try:
                handle.call(
                    "push_files",
                    handle.vm,
                    {"kind": "noop"},
                    audit_args={"vm": handle.vm, "payload": {"kind": "noop"}},
                )
            except OrchestrationError:
                pass

        spec = small_experiment(repetitions=3, parallelism=1)
        result = run_battery(
            spec,
            ResultStore(tmp_path / "store"),
            MockBackend(tmp_path / "vms"),
            phase_hook=adversary,
            phase_hook_for=(1,),
        )
        reasons = {o.session_id: o.reason for o in result.outcomes}
        assert reasons == {"r00": None, "r01": "air-gap violation", "r02": None}

    def test_storage_failure_marks_session_invalid(self, tmp_path) -> None:
        spec = small_experiment(repetitions=2, parallelism=1)
        store = ResultStore(tmp_path / "store")
        seen: list[str] = []

        def crash_once(stage: str) -> None:
            if stage == "pre:session-dir" and not seen:
                seen.append(stage)
                raise StorageError("disk full")

        store._fault_hook = crash_once
        result = run_battery(spec, store, MockBackend(tmp_path / "vms"))
        assert [o.valid for o in result.outcomes] == [False, True]
        assert result.outcomes[0].reason == "storage failed: disk full"
        manifest = store.load_manifest(result.battery_id)
        assert manifest["valid_count"] == 1

    def test_batteries_are_byte_deterministic(self, tmp_path) -> None:
        spec = small_experiment(repetitions=2)
        first = run_battery(spec, ResultStore(tmp_path / "a"), MockBackend(tmp_path / "va"))
        second = run_battery(spec, ResultStore(tmp_path / "b"), MockBackend(tmp_path / "vb"))
        assert first.battery_id != second.battery_id  # ids are unique by design
        for sid in ("r00", "r01"):
            for name in ARTIFACT_NAMES:
                a = (tmp_path / "a" / first.battery_id / sid / name).read_bytes()
                b = (tmp_path / "b" / second.battery_id / sid / name).read_bytes()
                assert a == b, f"{sid}/{name} differs between identical batteries"

    def test_wall_clock_is_tracked(self, tmp_path) -> None:
        spec = small_experiment(repetitions=2)
        result = run_battery(spec, ResultStore(tmp_path / "s"), MockBackend(tmp_path / "v"))
        assert result.wall_s > 0
        for outcome in result.outcomes:
            assert outcome.wall_ended >= outcome.wall_started
