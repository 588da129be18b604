from __future__ import annotations

import builtins
import hashlib
import json
import os
from pathlib import Path

import pytest

from ransprof.errors import AlgorithmMismatchError, ParseError, ValidationError
from ransprof.report import (
    FileRecord,
    Report,
    ScanOptions,
    checksum_file,
    read_report,
    report_from_obj,
    scan_directory,
    write_report,
)

from conftest import build_tree, cs, md5_hex

# Digest values confirmed against coreutils md5sum before being frozen here.
MD5_EMPTY = "d41d8cd98f00b204e9800998ecf8427e"
MD5_ABC = "900150983cd24fb0d6963f7d28e17f72"


class TestChecksumFile:
    def test_known_vectors(self, tmp_path: Path):
        empty = tmp_path / "empty.bin"
        empty.write_bytes(b"")
        abc = tmp_path / "abc.bin"
        abc.write_bytes(b"abc")
        assert checksum_file(empty) == MD5_EMPTY
        assert checksum_file(abc) == MD5_ABC

    def test_streaming_matches_whole_file_for_any_chunk_size(self, tmp_path: Path):
        data = bytes(range(256)) * 37  # 9472 bytes, larger than small chunks
        f = tmp_path / "blob.bin"
        f.write_bytes(data)
        expected = hashlib.md5(data).hexdigest()
        for chunk in (1, 7, 1024, 1 << 20):
            assert checksum_file(f, chunk_size=chunk) == expected

    def test_missing_file_raises_file_not_found(self, tmp_path: Path):
        with pytest.raises(FileNotFoundError):
            checksum_file(tmp_path / "nope.bin")

    def test_unreadable_file_error_distinguishable_from_missing(self, tmp_path: Path, monkeypatch):
        f = tmp_path / "secret.bin"
        f.write_bytes(b"x")
        real_open = builtins.open

        def deny(path, *a, **kw):
            if str(path).endswith("secret.bin"):
                raise PermissionError(13, "denied", str(path))
            return real_open(path, *a, **kw)

        monkeypatch.setattr(builtins, "open", deny)
        with pytest.raises(PermissionError):
            checksum_file(f)

    def test_other_algorithms(self, tmp_path: Path):
        f = tmp_path / "abc.bin"
        f.write_bytes(b"abc")
        assert checksum_file(f, "sha256") == hashlib.sha256(b"abc").hexdigest()

    def test_bad_chunk_size(self, tmp_path: Path):
        f = tmp_path / "x"
        f.write_bytes(b"")
        with pytest.raises(ValidationError):
            checksum_file(f, chunk_size=0)


class TestScanDirectory:
    def test_basic_tree_sorted_and_relative(self, tree: Path):
        build_tree(tree, {"docs/x.txt": b"abc", "docs/sub/y.txt": b"", "top.bin": b"zz"})
        report = scan_directory(tree)
        paths = [r.path for r in report.entries]
        # bytewise order confirmed against LC_ALL=C sort
        assert paths == ["docs/sub/y.txt", "docs/x.txt", "top.bin"]
        by_path = {r.path: r for r in report.entries}
        assert by_path["docs/x.txt"].checksum == MD5_ABC
        assert by_path["docs/sub/y.txt"].checksum == MD5_EMPTY
        assert by_path["docs/sub/y.txt"].size == 0
        assert report.root == str(tree.resolve())

    def test_hidden_and_zero_byte_included(self, tree: Path):
        build_tree(tree, {".hidden": b"", "visible.txt": b"v"})
        report = scan_directory(tree)
        assert [r.path for r in report.entries] == [".hidden", "visible.txt"]

    def test_empty_root_gives_empty_entries(self, tree: Path):
        report = scan_directory(tree)
        assert report.entries == ()

    def test_missing_root_is_hard_error(self, tmp_path: Path):
        with pytest.raises(ValidationError):
            scan_directory(tmp_path / "absent")

    def test_file_root_is_hard_error(self, tmp_path: Path):
        f = tmp_path / "f"
        f.write_bytes(b"")
        with pytest.raises(ValidationError):
            scan_directory(f)

    def test_symlinks_skipped_by_default(self, tree: Path):
        build_tree(tree, {"real/a.txt": b"abc"})
        os.symlink(tree / "real", tree / "linkdir")
        os.symlink(tree / "real" / "a.txt", tree / "linkfile.txt")
        report = scan_directory(tree)
        assert [r.path for r in report.entries] == ["real/a.txt"]
        assert report.scan_stats is not None
        assert report.scan_stats.skipped_symlinks == 2

    def test_follow_symlinks_with_cycle_guard(self, tree: Path):
        build_tree(tree, {"real/a.txt": b"abc"})
        os.symlink(tree / "real", tree / "linkdir")
        os.symlink(tree, tree / "real" / "loop")  # cycle back to root
        report = scan_directory(tree, ScanOptions(follow_symlinks=True))
        paths = [r.path for r in report.entries]
        assert "real/a.txt" in paths
        assert "linkdir/a.txt" in paths
        assert len(paths) == len(set(paths))

    def test_special_files_skipped_with_warning_count(self, tree: Path):
        build_tree(tree, {"a.txt": b"x"})
        os.mkfifo(tree / "pipe")
        report = scan_directory(tree)
        assert [r.path for r in report.entries] == ["a.txt"]
        assert report.scan_stats is not None
        assert report.scan_stats.skipped_special == 1

    def test_unreadable_file_recorded_not_dropped(self, tree: Path, monkeypatch):
        build_tree(tree, {"ok.txt": b"abc", "locked.txt": b"secret"})
        real_open = builtins.open

        def deny(path, *a, **kw):
            if str(path).endswith("locked.txt"):
                raise PermissionError(13, "denied", str(path))
            return real_open(path, *a, **kw)

        monkeypatch.setattr(builtins, "open", deny)
        report = scan_directory(tree)
        by_path = {r.path: r for r in report.entries}
        assert by_path["locked.txt"].status == "unreadable"
        assert by_path["locked.txt"].checksum == ""
        assert by_path["locked.txt"].size == 6  # from stat
        assert by_path["ok.txt"].status == "hashed"
        assert report.scan_stats.files_unreadable == 1

    def test_pinned_timestamp_scans_are_byte_identical(self, tree: Path):
        build_tree(tree, {"a/x.txt": b"1", "b/y.txt": b"2", "z.txt": b"3"})
        opts = ScanOptions(created_at="2000-01-01T00:00:00Z")
        r1 = scan_directory(tree, opts)
        r2 = scan_directory(tree, opts)
        assert r1.to_json_text() == r2.to_json_text()

    def test_worker_count_does_not_change_result(self, tree: Path):
        build_tree(tree, {f"d{i % 5}/f{i:03d}.dat": bytes([i]) * (i + 1) for i in range(60)})
        opts1 = ScanOptions(created_at="2000-01-01T00:00:00Z", workers=1)
        opts4 = ScanOptions(created_at="2000-01-01T00:00:00Z", workers=4)
        assert scan_directory(tree, opts1).to_json_text() == scan_directory(tree, opts4).to_json_text()

    def test_completeness_against_independent_walk(self, tree: Path):
        build_tree(tree, {f"f{i:04d}/x{j}.bin": b"c" for i in range(25) for j in range(8)})
        report = scan_directory(tree)
        walked = sum(len(files) for _, _, files in os.walk(tree))
        assert len(report.entries) == walked == 200

    def test_normalize_case_option(self, tree: Path):
        build_tree(tree, {"Docs/A.TXT": b"abc"})
        report = scan_directory(tree, ScanOptions(normalize_case=True))
        assert [r.path for r in report.entries] == ["docs/a.txt"]
        default = scan_directory(tree)
        assert [r.path for r in default.entries] == ["Docs/A.TXT"]

    def test_algorithm_option(self, tree: Path):
        build_tree(tree, {"a.txt": b"abc"})
        report = scan_directory(tree, ScanOptions(algorithm="sha256"))
        assert report.algorithm == "sha256"
        assert report.entries[0].checksum == hashlib.sha256(b"abc").hexdigest()


class TestSerialization:
    def test_canonical_text_frozen(self):
        report = Report(
            root="/corpus",
            algorithm="md5",
            created_at="2000-01-01T00:00:00Z",
            tool_version="0.1.0",
            entries=(FileRecord("a.txt", MD5_ABC, 3, "hashed"),),
        )
        expected = (
            '{"root": "/corpus","algorithm": "md5","created_at": "2000-01-01T00:00:00Z",'
            '"tool_version": "0.1.0","entries": [{"path": "a.txt",'
            '"checksum": "900150983cd24fb0d6963f7d28e17f72","size": 3,"status": "hashed"}]}\n'
        )
        assert report.to_json_text() == expected

    def test_write_then_read_is_identity(self, tmp_path: Path, tree: Path):
        build_tree(tree, {"docs/x.txt": b"abc", "docs/sub/y.txt": b""})
        report = scan_directory(tree, ScanOptions(created_at="2000-01-01T00:00:00Z"))
        out = tmp_path / "report.json"
        write_report(report, out)
        parsed = read_report(out)
        assert parsed == report
        assert parsed.to_json_text() == report.to_json_text()

    def test_strict_rejects_unknown_fields_naming_them(self, tmp_path: Path):
        doc = {
            "root": "/r",
            "algorithm": "md5",
            "created_at": "t",
            "tool_version": "v",
            "entries": [],
            "surprise": 1,
        }
        out = tmp_path / "r.json"
        out.write_text(json.dumps(doc))
        with pytest.raises(ParseError, match="surprise"):
            read_report(out)

    def test_lenient_preserves_unknown_fields_verbatim(self, tmp_path: Path):
        doc = {
            "root": "/r",
            "algorithm": "md5",
            "created_at": "t",
            "tool_version": "v",
            "entries": [
                {"path": "a", "checksum": MD5_ABC, "size": 1, "status": "hashed", "note": "keep"}
            ],
            "surprise": [1, 2],
        }
        out = tmp_path / "r.json"
        out.write_text(json.dumps(doc))
        report = read_report(out, strict=False)
        assert report.extras == {"surprise": [1, 2]}
        assert report.entries[0].extras == {"note": "keep"}
        round_tripped = json.loads(report.to_json_text())
        assert round_tripped == doc

    def test_parse_error_names_missing_field(self, tmp_path: Path):
        out = tmp_path / "r.json"
        out.write_text('{"root": "/r"}')
        with pytest.raises(ParseError, match="algorithm"):
            read_report(out)

    def test_parse_error_on_malformed_json(self, tmp_path: Path):
        out = tmp_path / "r.json"
        out.write_text("{nope")
        with pytest.raises(ParseError):
            read_report(out)

    def test_algorithm_expectation_enforced(self, tmp_path: Path):
        report = Report("/r", "sha256", "t", "v", ())
        out = tmp_path / "r.json"
        write_report(report, out)
        with pytest.raises(AlgorithmMismatchError, match="sha256.*md5|md5.*sha256"):
            read_report(out, expect_algorithm="md5")

    def test_duplicate_paths_rejected(self):
        with pytest.raises(ValidationError, match="duplicate"):
            Report(
                "/r", "md5", "t", "v",
                (FileRecord("a", cs("1"), 1), FileRecord("a", cs("2"), 1)),
            ).validate()

    def test_unsorted_entries_rejected(self):
        with pytest.raises(ValidationError, match="order"):
            Report(
                "/r", "md5", "t", "v",
                (FileRecord("docs/x.txt", cs("1"), 1), FileRecord("docs/sub/y.txt", cs("2"), 1)),
            ).validate()

    def test_record_invariants(self):
        with pytest.raises(ValidationError, match="checksum"):
            FileRecord("a", "zz", 1, "hashed").validate(32)
        with pytest.raises(ValidationError, match="no checksum"):
            FileRecord("a", cs("x"), 1, "unreadable").validate(32)
        with pytest.raises(ValidationError, match="status"):
            FileRecord("a", cs("x"), 1, "weird").validate(32)
        with pytest.raises(ValidationError, match="size"):
            FileRecord("a", cs("x"), -1, "hashed").validate(32)
        for bad_path in ("", "/abs", "a//b", "a/./b", "../up"):
            with pytest.raises(ValidationError):
                FileRecord(bad_path, cs("x"), 1, "hashed").validate(32)

    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ValidationError, match="algorithm"):
            Report("/r", "not-a-hash", "t", "v", ()).validate()

    def test_bytewise_sorting_of_non_ascii_paths(self):
        paths = ["z.txt", "é.txt", "a.txt"]
        report = report_from_obj(
            {
                "root": "/r",
                "algorithm": "md5",
                "created_at": "t",
                "tool_version": "v",
                "entries": [
                    {"path": p, "checksum": cs(p), "size": 1, "status": "hashed"}
                    for p in sorted(paths, key=lambda s: s.encode("utf-8"))
                ],
            }
        )
        assert [r.path for r in report.entries] == ["a.txt", "z.txt", "é.txt"]
