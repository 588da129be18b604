"""Checksum reports: scan a file tree, hash every file, serialize the result.

A report is the before/after unit of comparison for impact profiling: one
entry per regular file, carrying the root-relative path, a content digest,
the size in bytes and a status.  Files that exist but cannot be read are
kept with status "unreadable" and an empty checksum so the diff can count
them instead of silently dropping them.

Canonical serialized form: top-level keys in the order root, algorithm,
created_at, tool_version, entries; entries sorted bytewise by path; each
entry with keys path, checksum, size, status; single space after colons,
no other insignificant whitespace; trailing newline.  Two scans of an
unchanged tree with a pinned timestamp are byte-identical.
"""

from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from ransprof import jsonio
from ransprof.errors import AlgorithmMismatchError, ParseError, ValidationError

logger = logging.getLogger(__name__)

STATUS_HASHED = "hashed"
STATUS_UNREADABLE = "unreadable"

DEFAULT_ALGORITHM = "md5"
DEFAULT_CHUNK_SIZE = 1 << 20


def _tool_version() -> str:
    from ransprof import __version__

    return __version__


def algorithm_digest_len(algorithm: str) -> int:
    """Hex digest length for a registered algorithm; raises on unknown names."""
    try:
        return hashlib.new(algorithm).digest_size * 2
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"unknown checksum algorithm '{algorithm}'") from exc


def validate_rel_path(path: str) -> None:
    """Reject paths that are not clean root-relative POSIX paths."""
    if not path:
        raise ValidationError("entry path is empty")
    if path.startswith("/"):
        raise ValidationError(f"entry path is not root-relative: '{path}'")
    for seg in path.split("/"):
        if seg == "":
            raise ValidationError(f"entry path has an empty segment: '{path}'")
        if seg in (".", ".."):
            raise ValidationError(f"entry path has a '{seg}' segment: '{path}'")


def _is_lower_hex(text: str) -> bool:
    return all(c in "0123456789abcdef" for c in text)


@dataclass(frozen=True)
class FileRecord:
    """One file in a report: root-relative path, digest, size, status."""

    path: str
    checksum: str
    size: int
    status: str = STATUS_HASHED
    extras: Any = None  # unknown fields preserved by lenient parsing

    def validate(self, digest_len: int) -> None:
        validate_rel_path(self.path)
        if self.status == STATUS_HASHED:
            if len(self.checksum) != digest_len or not _is_lower_hex(self.checksum):
                raise ValidationError(
                    f"entry '{self.path}': checksum must be {digest_len} lowercase hex chars"
                )
        elif self.status == STATUS_UNREADABLE:
            if self.checksum != "":
                raise ValidationError(f"entry '{self.path}': unreadable entries carry no checksum")
        else:
            raise ValidationError(f"entry '{self.path}': unknown status '{self.status}'")
        if not isinstance(self.size, int) or self.size < 0:
            raise ValidationError(f"entry '{self.path}': size must be a non-negative integer")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "path": self.path,
            "checksum": self.checksum,
            "size": self.size,
            "status": self.status,
        }
        if self.extras:
            out.update(self.extras)
        return out


@dataclass
class ScanStats:
    """Counts of things a scan skipped or could not read (not serialized)."""

    files_hashed: int = 0
    files_unreadable: int = 0
    skipped_symlinks: int = 0
    skipped_special: int = 0
    unreadable_dirs: int = 0


def path_sort_key(path: str) -> bytes:
    return path.encode("utf-8")


@dataclass
class Report:
    """A checksum manifest of one file tree at one point in time."""

    root: str
    algorithm: str
    created_at: str
    tool_version: str
    entries: tuple[FileRecord, ...]
    extras: Any = None
    scan_stats: ScanStats | None = field(default=None, compare=False)

    def validate(self) -> None:
        if not self.root:
            raise ValidationError("report root is empty")
        digest_len = algorithm_digest_len(self.algorithm)
        seen: set[str] = set()
        prev_key: bytes | None = None
        for rec in self.entries:
            rec.validate(digest_len)
            if rec.path in seen:
                raise ValidationError(f"duplicate entry path '{rec.path}'")
            seen.add(rec.path)
            key = path_sort_key(rec.path)
            if prev_key is not None and key < prev_key:
                raise ValidationError(f"entries not in bytewise path order at '{rec.path}'")
            prev_key = key

    def hashed_entries(self) -> tuple[FileRecord, ...]:
        return tuple(r for r in self.entries if r.status == STATUS_HASHED)

    def unreadable_count(self) -> int:
        return sum(1 for r in self.entries if r.status == STATUS_UNREADABLE)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "root": self.root,
            "algorithm": self.algorithm,
            "created_at": self.created_at,
            "tool_version": self.tool_version,
            "entries": [r.to_dict() for r in self.entries],
        }
        if self.extras:
            out.update(self.extras)
        return out

    def to_json_text(self) -> str:
        return jsonio.canonical_dumps(self.to_dict())


_RECORD_FIELDS = ("path", "checksum", "size", "status")
_REPORT_FIELDS = ("root", "algorithm", "created_at", "tool_version", "entries")


def report_from_obj(obj: Any, *, strict: bool = True, where: str = "report") -> Report:
    """Build a Report from parsed JSON, validating shape and invariants.

    strict=True rejects unknown fields; strict=False preserves them verbatim
    so the document round-trips byte-for-byte.
    """
    reader = jsonio.FieldReader(obj, where=where)
    root = reader.take("root", str)
    algorithm = reader.take("algorithm", str)
    created_at = reader.take("created_at", str)
    tool_version = reader.take("tool_version", str)
    raw_entries = reader.take("entries", list)
    extras = None
    if strict:
        reader.reject_extras()
    else:
        extras = reader.extras() or None

    records: list[FileRecord] = []
    for i, raw in enumerate(raw_entries):
        entry_where = f"{where}: entries[{i}]"
        er = jsonio.FieldReader(raw, where=entry_where)
        path = er.take("path", str)
        checksum = er.take("checksum", str)
        size = er.take("size", int)
        status = er.take("status", str)
        entry_extras = None
        if strict:
            er.reject_extras()
        else:
            entry_extras = er.extras() or None
        records.append(FileRecord(path, checksum, size, status, extras=entry_extras))

    report = Report(root, algorithm, created_at, tool_version, tuple(records), extras=extras)
    try:
        report.validate()
    except ValidationError as exc:
        raise ParseError(f"{where}: {exc}") from exc
    return report


def read_report(
    source: str | Path,
    *,
    strict: bool = True,
    expect_algorithm: str | None = None,
) -> Report:
    """Parse a report file; optionally enforce the digest algorithm."""
    text = Path(source).read_text(encoding="utf-8")
    obj = jsonio.canonical_loads(text, where=str(source))
    report = report_from_obj(obj, strict=strict, where=str(source))
    if expect_algorithm is not None and report.algorithm != expect_algorithm:
        raise AlgorithmMismatchError(
            f"{source}: report uses algorithm '{report.algorithm}', expected '{expect_algorithm}'"
        )
    return report


def write_report(report: Report, dest: str | Path) -> Path:
    """Serialize a report to its canonical form; returns the written path."""
    report.validate()
    dest = Path(dest)
    dest.write_text(report.to_json_text(), encoding="utf-8")
    return dest


def checksum_file(
    path: str | Path,
    algorithm: str = DEFAULT_ALGORITHM,
    *,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> str:
    """Stream a file through the digest; memory use is bounded by chunk_size.

    Missing files raise FileNotFoundError; files that exist but cannot be
    read raise the underlying OSError subclass (e.g. PermissionError), so
    the two failure modes stay distinguishable.
    """
    if chunk_size < 1:
        raise ValidationError("chunk_size must be >= 1")
    digest = hashlib.new(algorithm)
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(chunk_size)
            if not chunk:
                break
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class ScanOptions:
    """Knobs for scan_directory.

    follow_symlinks is off by default; when on, a visited-inode guard stops
    directory cycles.  normalize_case lower-folds stored paths (comparison
    stays case-sensitive when it is off, the default).  created_at pins the
    report timestamp for reproducible output.
    """

    algorithm: str = DEFAULT_ALGORITHM
    follow_symlinks: bool = False
    normalize_case: bool = False
    chunk_size: int = DEFAULT_CHUNK_SIZE
    workers: int = 1
    created_at: str | None = None


def _iter_tree(root: Path, opts: ScanOptions, stats: ScanStats) -> Iterator[Path]:
    """Yield regular files under root.

    With follow_symlinks on, directory symlinks are descended unless the
    target is an ancestor of the current traversal path (a cycle); sibling
    duplication via links is allowed and terminates.
    """

    def walk(current: Path, ancestors: frozenset[tuple[int, int]]) -> Iterator[Path]:
        try:
            with os.scandir(current) as it:
                entries = list(it)
        except OSError as exc:
            stats.unreadable_dirs += 1
            logger.warning("cannot list directory %s: %s", current, exc)
            return
        for entry in entries:
            try:
                if entry.is_symlink():
                    if not opts.follow_symlinks:
                        stats.skipped_symlinks += 1
                        continue
                    if entry.is_dir(follow_symlinks=True):
                        st = os.stat(entry.path)
                        key = (st.st_dev, st.st_ino)
                        if key in ancestors:
                            stats.skipped_symlinks += 1  # cycle cut
                            continue
                        yield from walk(Path(entry.path), ancestors | {key})
                    elif entry.is_file(follow_symlinks=True):
                        yield Path(entry.path)
                    else:
                        stats.skipped_special += 1
                elif entry.is_dir(follow_symlinks=False):
                    if opts.follow_symlinks:
                        st = entry.stat(follow_symlinks=False)
                        yield from walk(Path(entry.path), ancestors | {(st.st_dev, st.st_ino)})
                    else:
                        yield from walk(Path(entry.path), ancestors)
                elif entry.is_file(follow_symlinks=False):
                    yield Path(entry.path)
                else:
                    # device nodes, FIFOs, sockets
                    stats.skipped_special += 1
                    logger.warning("skipping special file %s", entry.path)
            except OSError:
                # stat failed; surface the path as an unreadable file
                yield Path(entry.path)

    st = os.stat(root)
    yield from walk(root, frozenset({(st.st_dev, st.st_ino)}))


def _hash_one(abs_path: Path, rel_path: str, opts: ScanOptions) -> FileRecord:
    size = 0
    digest = hashlib.new(opts.algorithm)
    try:
        with open(abs_path, "rb") as fh:
            while True:
                chunk = fh.read(opts.chunk_size)
                if not chunk:
                    break
                size += len(chunk)
                digest.update(chunk)
    except OSError:
        try:
            size = abs_path.stat().st_size
        except OSError:
            size = 0
        return FileRecord(rel_path, "", size, STATUS_UNREADABLE)
    return FileRecord(rel_path, digest.hexdigest(), size, STATUS_HASHED)


def scan_directory(root: str | Path, options: ScanOptions | None = None) -> Report:
    """Hash every regular file under root into a Report.

    The result is deterministic for an unchanged tree (entries sorted
    bytewise by path) and independent of the worker count.  Unreadable
    files are recorded with status "unreadable"; symlinks, device nodes
    and unreadable directories are skipped and counted in scan_stats.
    """
    opts = options or ScanOptions()
    algorithm_digest_len(opts.algorithm)
    if opts.workers < 1:
        raise ValidationError("workers must be >= 1")
    root_path = Path(root).resolve()
    if not root_path.is_dir():
        raise ValidationError(f"scan root is not a directory: {root}")

    stats = ScanStats()
    targets: list[tuple[Path, str]] = []
    for abs_path in _iter_tree(root_path, opts, stats):
        rel = abs_path.relative_to(root_path).as_posix()
        if opts.normalize_case:
            rel = rel.lower()
        targets.append((abs_path, rel))

    if opts.workers > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            records = list(pool.map(lambda t: _hash_one(t[0], t[1], opts), targets))
    else:
        records = [_hash_one(a, r, opts) for a, r in targets]

    records.sort(key=lambda r: path_sort_key(r.path))
    stats.files_hashed = sum(1 for r in records if r.status == STATUS_HASHED)
    stats.files_unreadable = sum(1 for r in records if r.status == STATUS_UNREADABLE)

    report = Report(
        root=str(root_path),
        algorithm=opts.algorithm,
        created_at=opts.created_at or jsonio.utc_now_rfc3339(),
        tool_version=_tool_version(),
        entries=tuple(records),
        scan_stats=stats,
    )
    report.validate()
    return report
