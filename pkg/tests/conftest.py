from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

from ransprof.report import FileRecord, Report, path_sort_key


def md5_hex(data: bytes) -> str:
    return hashlib.md5(data).hexdigest()


def cs(token: str) -> str:
    """A stable, valid-looking md5 checksum derived from a short token."""
    return hashlib.md5(token.encode("utf-8")).hexdigest()


def build_tree(base: Path, files: dict[str, bytes]) -> None:
    """Materialize {relpath: content} under base."""
    for rel, data in files.items():
        p = base / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(data)


def report_of(
    entries: list[tuple],
    *,
    root: str = "/corpus",
    algorithm: str = "md5",
    created_at: str = "2000-01-01T00:00:00Z",
) -> Report:
    """Build a valid Report from (path, checksum[, size[, status]]) tuples."""
    records = []
    for item in entries:
        path, checksum = item[0], item[1]
        size = item[2] if len(item) > 2 else 1
        status = item[3] if len(item) > 3 else ("hashed" if checksum else "unreadable")
        records.append(FileRecord(path, checksum, size, status))
    records.sort(key=lambda r: path_sort_key(r.path))
    report = Report(root, algorithm, created_at, "0.1.0", tuple(records))
    report.validate()
    return report


@pytest.fixture
def tree(tmp_path: Path) -> Path:
    d = tmp_path / "tree"
    d.mkdir()
    return d


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    """One visible PASS/FAIL line per acceptance criterion."""
    lines: list[tuple[str, str]] = []
    for outcome, tag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            if getattr(report, "when", "call") not in ("call", "setup"):
                continue
            if outcome == "passed" and report.when != "call":
                continue
            lines.append((tag, nodeid.split("::", 1)[1]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for tag, name in sorted(lines, key=lambda item: item[1]):
            terminalreporter.write_line(f"{tag}  {name}")
