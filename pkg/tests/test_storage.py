"""Result store: atomic writes, index-last ordering, crash recovery."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from conftest import cs, report_of

from ransprof.errors import StorageError, ValidationError
from ransprof.orchestrator.audit import PHASE_ENTER, AuditLog, SimClock
from ransprof.profiler import ExperimentContext, build_hierarchy, classify, summarize
from ransprof.storage import ARTIFACT_NAMES, ResultStore, SessionArtifacts


def make_artifacts(victim: str = "Docs/b.txt") -> SessionArtifacts:
    ref = report_of(
        [("Docs/a.txt", cs("a")), (victim, cs("b"))], root="vm://users"
    )
    post = report_of(
        [("Docs/a.txt", cs("a")), (f"{victim}.enc", cs("junk"))], root="vm://users"
    )
    diff = classify(ref, post)
    context = ExperimentContext(
        experiment="t",
        ransomware="copy_then_encrypt",
        countermeasure=None,
        root="vm://users",
        timestamp=post.created_at,
    )
    hierarchy = build_hierarchy(diff, context)
    summary = summarize(hierarchy)
    audit = AuditLog(SimClock())
    audit.record("r00", "Init", "create_vm", {"session": "r00"})
    audit.record("r00", "Created", PHASE_ENTER, {"phase": "Created"})
    return SessionArtifacts(
        report_pre=ref.to_json_text(),
        report_post=post.to_json_text(),
        hierarchy=hierarchy.to_json_text(),
        summary=summary.to_json_text(),
        audit="".join(line + "\n" for line in audit.to_lines()),
    )


def manifest_obj(battery_id: str, rows: list[tuple[str, bool, str | None]]) -> dict:
    return {
        "battery_id": battery_id,
        "experiment": "t",
        "created_at": "2000-01-01T00:00:00Z",
        "parallelism": 2,
        "peak_parallel": 1,
        "repetitions": len(rows),
        "valid_count": sum(1 for _, valid, _ in rows if valid),
        "sessions": [
            {"session_id": sid, "valid": valid, "reason": reason}
            for sid, valid, reason in rows
        ],
    }


@pytest.fixture
def store(tmp_path: Path) -> ResultStore:
    return ResultStore(tmp_path / "results")


class TestBatteryLifecycle:
    def test_begin_store_finish_round_trip(self, store: ResultStore) -> None:
        bid = store.begin_battery({"name": "t"})
        store.store_session(bid, "r00", make_artifacts())
        store.finish_battery(bid, manifest_obj(bid, [("r00", True, None)]))
        assert store.battery_ids() == [bid]
        assert store.load_spec(bid) == {"name": "t"}
        assert store.load_manifest(bid)["valid_count"] == 1
        sdir = store.session_dir(bid, "r00")
        assert sorted(p.name for p in sdir.iterdir()) == sorted(ARTIFACT_NAMES)

    def test_battery_ids_are_unique_per_begin(self, store: ResultStore) -> None:
        first = store.begin_battery({"name": "t"})
        second = store.begin_battery({"name": "t"})
        assert first != second

    def test_store_into_unknown_battery_rejected(self, store: ResultStore) -> None:
        with pytest.raises(StorageError, match="unknown battery"):
            store.store_session("nope", "r00", make_artifacts())

    def test_duplicate_session_rejected(self, store: ResultStore) -> None:
        bid = store.begin_battery({"name": "t"})
        store.store_session(bid, "r00", make_artifacts())
        with pytest.raises(StorageError, match="already stored"):
            store.store_session(bid, "r00", make_artifacts())

    def test_manifest_missing_before_finish(self, store: ResultStore) -> None:
        bid = store.begin_battery({"name": "t"})
        with pytest.raises(StorageError, match="still running"):
            store.load_manifest(bid)

    def test_index_tracks_progress(self, store: ResultStore) -> None:
        bid = store.begin_battery({"name": "t"})
        store.store_session(bid, "r00", make_artifacts())
        assert store.load_index()["batteries"][bid]["completed"] is False
        store.finish_battery(
            bid, manifest_obj(bid, [("r00", True, None), ("r01", False, "boom")])
        )
        battery = store.load_index()["batteries"][bid]
        assert battery["completed"] is True
        assert battery["sessions"]["r01"] == {"valid": False, "reason": "boom"}

    def test_aggregate_is_optional(self, store: ResultStore, tmp_path: Path) -> None:
        bid = store.begin_battery({"name": "t"})
        store.finish_battery(bid, manifest_obj(bid, []), aggregate_text='{"n": 0}')
        assert (tmp_path / "results" / bid / "aggregate.json").read_text() == '{"n": 0}'

    def test_stored_artifacts_round_trip_bytes(self, store: ResultStore) -> None:
        artifacts = make_artifacts()
        bid = store.begin_battery({"name": "t"})
        sdir = store.store_session(bid, "r00", artifacts)
        for name, text in artifacts.as_files().items():
            assert (sdir / name).read_text(encoding="utf-8") == text


class TestSummaries:
    def build(self, store: ResultStore) -> str:
        bid = store.begin_battery({"name": "t"})
        store.store_session(bid, "r00", make_artifacts("Docs/b.txt"))
        store.store_session(bid, "r01", make_artifacts("Docs/c.txt"))
        store.finish_battery(
            bid,
            manifest_obj(
                bid,
                [("r00", True, None), ("r01", True, None), ("r02", False, "failed")],
            ),
        )
        return bid

    def test_load_summaries_skips_invalid_rows(self, store: ResultStore) -> None:
        bid = self.build(store)
        summaries = store.load_summaries(bid)
        assert len(summaries) == 2
        assert all(s.totals.lost == 1 for s in summaries)

    def test_valid_row_without_summary_is_an_error(self, store: ResultStore) -> None:
        bid = self.build(store)
        (store.session_dir(bid, "r01") / "profile_summary.json").unlink()
        with pytest.raises(StorageError, match="lost its summary"):
            store.load_summaries(bid)

    def test_from_result_requires_complete_artifacts(self) -> None:
        class Hollow:
            report_pre = None
            report_post = None
            hierarchy = None
            summary = None
            audit = AuditLog()

        with pytest.raises(ValidationError, match="incomplete"):
            SessionArtifacts.from_result(Hollow())


class _Crash(BaseException):
    """Raised by the fault hook; BaseException so except Exception cannot eat it."""


class TestCrashConsistency:
    def everything(self, store: ResultStore) -> str:
        bid = store.begin_battery({"name": "t"})
        store.store_session(bid, "r00", make_artifacts())
        store.finish_battery(
            bid, manifest_obj(bid, [("r00", True, None)]), aggregate_text='{"n": 1}'
        )
        return bid

    def stage_labels(self, store: ResultStore) -> list[str]:
        seen: list[str] = []
        store._fault_hook = seen.append
        self.everything(store)
        store._fault_hook = None
        return seen

    def test_every_stage_is_instrumented(self, store: ResultStore) -> None:
        stages = self.stage_labels(store)
        assert "pre:spec" in stages and "post:spec" in stages
        assert "pre:session-dir" in stages
        assert "pre:manifest" in stages and "pre:aggregate" in stages
        assert stages.count("pre:index") >= 2  # store and finish both index

    def test_crash_at_every_stage_leaves_parseable_store(self, tmp_path: Path) -> None:
        """No torn JSON and no stray temp files, wherever the crash lands."""
        stages = self.stage_labels(ResultStore(tmp_path / "probe"))
        for k, stage in enumerate(stages):
            base = tmp_path / f"crash{k}"
            store = ResultStore(base)
            countdown = [k]

            def bomb(label: str) -> None:
                if countdown[0] == 0:
                    raise _Crash(label)
                countdown[0] -= 1

            store._fault_hook = bomb
            with pytest.raises(_Crash):
                self.everything(store)
            store._fault_hook = None

            for path in base.rglob("*"):
                assert not path.name.startswith("."), f"temp file left at stage {stage}"
                if path.suffix == ".json":
                    json.loads(path.read_text(encoding="utf-8"))

    def test_rebuild_restores_consistency_after_any_crash(self, tmp_path: Path) -> None:
        stages = self.stage_labels(ResultStore(tmp_path / "probe"))
        for k in range(len(stages)):
            base = tmp_path / f"crash{k}"
            store = ResultStore(base)
            countdown = [k]

            def bomb(label: str) -> None:
                if countdown[0] == 0:
                    raise _Crash(label)
                countdown[0] -= 1

            store._fault_hook = bomb
            with pytest.raises(_Crash):
                self.everything(store)
            store._fault_hook = None

            report = store.rebuild_index()
            index = store.load_index()
            for bid, battery in index["batteries"].items():
                for sid, row in battery["sessions"].items():
                    sdir = store.session_dir(bid, sid)
                    if sdir.is_dir():
                        names = sorted(p.name for p in sdir.iterdir())
                        assert names == sorted(ARTIFACT_NAMES)
            assert isinstance(report["quarantined"], list)


class TestRebuildIndex:
    def test_clean_store_rebuilds_unchanged(self, store: ResultStore) -> None:
        bid = store.begin_battery({"name": "t"})
        store.store_session(bid, "r00", make_artifacts())
        store.finish_battery(bid, manifest_obj(bid, [("r00", True, None)]))
        before = store.load_index()["batteries"]
        report = store.rebuild_index()
        assert report["quarantined"] == []
        assert store.load_index()["batteries"] == before

    def test_battery_without_spec_is_quarantined(self, store: ResultStore, tmp_path: Path) -> None:
        rogue = tmp_path / "results" / "rogue-battery"
        rogue.mkdir()
        (rogue / "junk.txt").write_text("not a battery")
        report = store.rebuild_index()
        assert not rogue.exists()
        assert len(report["quarantined"]) == 1
        assert (tmp_path / "results" / "quarantine").is_dir()

    def test_corrupt_spec_quarantines_battery(self, store: ResultStore, tmp_path: Path) -> None:
        bid = store.begin_battery({"name": "t"})
        (tmp_path / "results" / bid / "spec.json").write_text("{broken", encoding="utf-8")
        report = store.rebuild_index()
        assert bid not in store.load_index()["batteries"]
        assert len(report["quarantined"]) == 1

    def test_incomplete_session_dir_is_quarantined(self, store: ResultStore) -> None:
        bid = store.begin_battery({"name": "t"})
        sdir = store.store_session(bid, "r00", make_artifacts())
        (sdir / "profile_hier.json").unlink()
        report = store.rebuild_index()
        assert not sdir.exists()
        assert report["quarantined"] != []
        assert store.load_index()["batteries"][bid]["sessions"] == {}

    def test_extra_file_in_session_dir_is_quarantined(self, store: ResultStore) -> None:
        bid = store.begin_battery({"name": "t"})
        sdir = store.store_session(bid, "r00", make_artifacts())
        (sdir / "notes.txt").write_text("tamper")
        store.rebuild_index()
        assert not sdir.exists()

    def test_unparseable_artifact_quarantines_session(self, store: ResultStore) -> None:
        bid = store.begin_battery({"name": "t"})
        sdir = store.store_session(bid, "r00", make_artifacts())
        (sdir / "report_pre.json").write_text('{"not": "a report"}', encoding="utf-8")
        store.rebuild_index()
        assert not sdir.exists()

    def test_corrupt_manifest_is_quarantined_sessions_survive(self, store: ResultStore, tmp_path: Path) -> None:
        bid = store.begin_battery({"name": "t"})
        store.store_session(bid, "r00", make_artifacts())
        store.finish_battery(bid, manifest_obj(bid, [("r00", True, None)]))
        (tmp_path / "results" / bid / "manifest.json").write_text("{broken", encoding="utf-8")
        store.rebuild_index()
        battery = store.load_index()["batteries"][bid]
        assert battery["completed"] is False
        assert battery["sessions"]["r00"] == {"valid": True, "reason": None}
        assert store.session_dir(bid, "r00").is_dir()

    def test_manifest_rows_for_invalid_sessions_survive_rebuild(self, store: ResultStore) -> None:
        bid = store.begin_battery({"name": "t"})
        store.store_session(bid, "r00", make_artifacts())
        store.finish_battery(
            bid, manifest_obj(bid, [("r00", True, None), ("r01", False, "nope")])
        )
        store.rebuild_index()
        sessions = store.load_index()["batteries"][bid]["sessions"]
        assert sessions["r01"] == {"valid": False, "reason": "nope"}

    def test_quarantine_names_do_not_collide(self, store: ResultStore, tmp_path: Path) -> None:
        for _ in range(2):
            rogue = tmp_path / "results" / "rogue"
            rogue.mkdir()
            (rogue / "junk").write_text("x")
            store.rebuild_index()
        names = sorted(p.name for p in (tmp_path / "results" / "quarantine").iterdir())
        assert len(names) == 2 and len(set(names)) == 2
