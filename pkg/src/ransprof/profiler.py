"""Impact profiles built from a before/after pair of checksum reports.

Classification rules, applied to the hashed entries of both reports:

* A reference file is pristine when the post report has the same path with
  an equal checksum, otherwise it is lost.
* A post file is a replica when its checksum appears in the reference set
  but its path is not one of the reference paths carrying that checksum
  (reference content found at a different location).  Its sources are all
  reference paths sharing the checksum.
* A post file whose checksum matches nothing is foreign, unless its path is
  a reference path: then it is the encrypted-overwrite carrier of that lost
  reference file and gets no separate entry (tracked in `overwritten`).
* Unreadable entries on either side land in the unknown bucket only.

A reference file is recoverable when its content still exists anywhere on
the post tree (equal checksum at any path), so "lost and not recoverable"
is exactly "content unrecoverable from the post-attack disk".

The hierarchy mirrors the folder structure of the union of both reports;
the summary rolls counts up per folder (counting at-or-below each node,
so nested folders also count into their ancestors) and per extension; the
aggregate computes per-counter mean/stddev/min/max across runs.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from ransprof import jsonio
from ransprof.errors import AlgorithmMismatchError, ParseError, ValidationError
from ransprof.report import Report, path_sort_key

PRISTINE = "pristine"
LOST = "lost"
REPLICA = "replica"
FOREIGN = "foreign"

NO_EXTENSION = "(none)"

# deterministic tiebreak for same-named leaves of different status
_STATUS_ORDER = {PRISTINE: 0, LOST: 1, REPLICA: 2, FOREIGN: 3}


def extension_token(name: str) -> str:
    """Lower-folded substring after the final dot; "(none)" when dotless.

    ".bashrc" yields "bashrc" and a trailing-dot name yields the empty
    token; both follow from the final-dot rule.
    """
    i = name.rfind(".")
    if i == -1:
        return NO_EXTENSION
    return name[i + 1 :].lower()


@dataclass(frozen=True)
class RefFileDiff:
    """Classification of one reference file: pristine/lost + recoverability."""

    status: str
    recoverable: bool
    checksum: str


@dataclass(frozen=True)
class PostFileDiff:
    """Classification of a non-pristine post file: replica (with sources) or foreign."""

    kind: str
    sources: tuple[str, ...]
    checksum: str


@dataclass
class DiffProfile:
    """Full classification of a report pair (in-memory working form)."""

    reference_root: str
    post_root: str
    algorithm: str
    ref_files: dict[str, RefFileDiff]
    post_files: dict[str, PostFileDiff]
    overwritten: tuple[str, ...]
    unknown_paths: tuple[str, ...]
    ref_hashed_count: int
    post_hashed_count: int

    @property
    def unknown_count(self) -> int:
        return len(self.unknown_paths)

    def counts(self) -> dict[str, int]:
        c = {PRISTINE: 0, LOST: 0, REPLICA: 0, FOREIGN: 0}
        for rf in self.ref_files.values():
            c[rf.status] += 1
        for pf in self.post_files.values():
            c[pf.kind] += 1
        return c

    def check_conservation(self) -> None:
        """Every hashed entry lands in exactly one bucket; raise otherwise."""
        c = self.counts()
        if c[PRISTINE] + c[LOST] != self.ref_hashed_count:
            raise ValidationError(
                f"conservation: pristine {c[PRISTINE]} + lost {c[LOST]} "
                f"!= hashed reference entries {self.ref_hashed_count}"
            )
        post_sum = c[REPLICA] + c[FOREIGN] + c[PRISTINE] + len(self.overwritten)
        if post_sum != self.post_hashed_count:
            raise ValidationError(
                f"conservation: post buckets {post_sum} != hashed post entries {self.post_hashed_count}"
            )
        for path, rf in self.ref_files.items():
            if rf.status == PRISTINE and not rf.recoverable:
                raise ValidationError(f"pristine file '{path}' must be recoverable")


def classify(reference: Report, post: Report) -> DiffProfile:
    """Classify every hashed file of the pair; see module docstring for rules."""
    reference.validate()
    post.validate()
    if reference.algorithm != post.algorithm:
        raise AlgorithmMismatchError(
            f"cannot diff reports with different algorithms: "
            f"reference uses '{reference.algorithm}', post uses '{post.algorithm}'"
        )

    ref_hashed = {r.path: r for r in reference.entries if r.status == "hashed"}
    post_hashed = {r.path: r for r in post.entries if r.status == "hashed"}

    ref_by_cs: dict[str, list[str]] = {}
    for r in ref_hashed.values():  # entry order is bytewise, so sources stay sorted
        ref_by_cs.setdefault(r.checksum, []).append(r.path)
    post_cs_set = {r.checksum for r in post_hashed.values()}

    ref_files: dict[str, RefFileDiff] = {}
    for path, rec in ref_hashed.items():
        post_rec = post_hashed.get(path)
        pristine = post_rec is not None and post_rec.checksum == rec.checksum
        ref_files[path] = RefFileDiff(
            status=PRISTINE if pristine else LOST,
            recoverable=rec.checksum in post_cs_set,
            checksum=rec.checksum,
        )

    post_files: dict[str, PostFileDiff] = {}
    overwritten: list[str] = []
    for path, rec in post_hashed.items():
        sources = ref_by_cs.get(rec.checksum)
        if sources is not None:
            if path in sources:
                continue  # the pristine match itself
            post_files[path] = PostFileDiff(REPLICA, tuple(sources), rec.checksum)
        elif path in ref_hashed:
            overwritten.append(path)  # encrypted overwrite carried by the lost status
        else:
            post_files[path] = PostFileDiff(FOREIGN, (), rec.checksum)

    unknown = tuple(
        sorted(
            [r.path for r in reference.entries if r.status == "unreadable"]
            + [r.path for r in post.entries if r.status == "unreadable"],
            key=path_sort_key,
        )
    )

    return DiffProfile(
        reference_root=reference.root,
        post_root=post.root,
        algorithm=reference.algorithm,
        ref_files=ref_files,
        post_files=post_files,
        overwritten=tuple(overwritten),
        unknown_paths=unknown,
        ref_hashed_count=len(ref_hashed),
        post_hashed_count=len(post_hashed),
    )


@dataclass(frozen=True)
class ExperimentContext:
    """Provenance attached to a hierarchical profile."""

    experiment: str
    ransomware: str
    countermeasure: str | None
    root: str
    timestamp: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "ransomware": self.ransomware,
            "countermeasure": self.countermeasure,
            "root": self.root,
            "timestamp": self.timestamp,
        }


@dataclass
class FileLeaf:
    """One classified file in the tree; checksum is working data, not serialized."""

    name: str
    status: str
    checksum: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "status": self.status}


@dataclass
class FolderNode:
    name: str
    files: list[FileLeaf] = field(default_factory=list)
    folders: list["FolderNode"] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "files": [f.to_dict() for f in self.files],
            "folders": [d.to_dict() for d in self.folders],
        }

    def sort(self) -> None:
        self.files.sort(key=lambda f: (path_sort_key(f.name), _STATUS_ORDER.get(f.status, 9)))
        self.folders.sort(key=lambda d: path_sort_key(d.name))
        for sub in self.folders:
            sub.sort()


@dataclass
class HierarchicalProfile:
    """Per-file classification arranged as the scanned folder tree."""

    context: ExperimentContext
    root: FolderNode

    def to_dict(self) -> dict[str, Any]:
        return {"context": self.context.to_dict(), "root": self.root.to_dict()}

    def to_json_text(self) -> str:
        return jsonio.canonical_dumps(self.to_dict())

    def leaf_count(self) -> int:
        total = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            total += len(node.files)
            stack.extend(node.folders)
        return total

    def iter_leaves(self) -> Iterator[tuple[str, FileLeaf]]:
        """Yield (folder path, leaf) pairs; folder path "" is the root."""
        stack: list[tuple[str, FolderNode]] = [("", self.root)]
        while stack:
            prefix, node = stack.pop()
            for leaf in node.files:
                yield prefix, leaf
            for sub in node.folders:
                sub_path = f"{prefix}/{sub.name}" if prefix else sub.name
                stack.append((sub_path, sub))


def build_hierarchy(diff: DiffProfile, context: ExperimentContext) -> HierarchicalProfile:
    """Arrange the diff's classified files as a folder tree.

    The tree mirrors the union of both reports' path structure: folders
    that contain only unknown (unreadable) entries still appear, but only
    classified files become leaves, so the leaf count equals the number of
    classified files in the diff.
    """
    root = FolderNode(name="")
    nodes: dict[str, FolderNode] = {"": root}

    def folder_for(dirpath: str) -> FolderNode:
        node = nodes.get(dirpath)
        if node is not None:
            return node
        parent_path, _, name = dirpath.rpartition("/")
        parent = folder_for(parent_path)
        node = FolderNode(name=name)
        parent.folders.append(node)
        nodes[dirpath] = node
        return node

    def add_leaf(path: str, status: str, checksum: str | None) -> None:
        dirpath, _, name = path.rpartition("/")
        folder_for(dirpath).files.append(FileLeaf(name, status, checksum))

    for path, rf in diff.ref_files.items():
        add_leaf(path, rf.status, rf.checksum)
    for path, pf in diff.post_files.items():
        add_leaf(path, pf.kind, pf.checksum)
    for path in diff.overwritten + diff.unknown_paths:
        dirpath = path.rpartition("/")[0]
        folder_for(dirpath)

    root.sort()
    return HierarchicalProfile(context=context, root=root)


@dataclass
class CounterRecord:
    """Counts for one tree node; ratio absent (None) when it has no replicas."""

    pristine: int = 0
    lost: int = 0
    replica: int = 0
    foreign: int = 0
    replica_distinct_ratio: float | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "pristine": self.pristine,
            "lost": self.lost,
            "replica": self.replica,
            "foreign": self.foreign,
        }
        if self.replica_distinct_ratio is not None:
            out["replica_distinct_ratio"] = self.replica_distinct_ratio
        return out


@dataclass
class ExtensionRecord:
    pristine: int = 0
    lost: int = 0
    replica: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"pristine": self.pristine, "lost": self.lost, "replica": self.replica}


@dataclass
class SummaryProfile:
    """Counts rolled up from a hierarchy: totals, per folder, per extension."""

    totals: CounterRecord
    by_folder: dict[str, CounterRecord]
    by_extension: dict[str, ExtensionRecord]
    root_label: str | None = field(default=None, compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "totals": self.totals.to_dict(),
            "by_folder": {k: self.by_folder[k].to_dict() for k in sorted(self.by_folder, key=path_sort_key)},
            "by_extension": {
                k: self.by_extension[k].to_dict() for k in sorted(self.by_extension, key=path_sort_key)
            },
        }

    def to_json_text(self) -> str:
        return jsonio.canonical_dumps(self.to_dict())


def _distinct_ratio(replica_checksums: Counter) -> float | None:
    total = sum(replica_checksums.values())
    if total == 0:
        return None
    once = sum(1 for n in replica_checksums.values() if n == 1)
    return once / total


def summarize(profile: HierarchicalProfile) -> SummaryProfile:
    """Roll a hierarchy up into totals, per-folder and per-extension counts.

    Folder counts are at-or-below each node, so nested folders also count
    into every ancestor.  The distinct-replica ratio of a node is the share
    of its replicas whose checksum occurs exactly once among that node's
    replicas; it is absent for nodes without replicas.  Extension counts
    bucket pristine/lost by reference name and replicas by post-attack
    name; foreign files appear in totals only.
    """
    by_folder: dict[str, CounterRecord] = {}
    by_extension: dict[str, ExtensionRecord] = {}

    def bump_extension(leaf: FileLeaf) -> None:
        if leaf.status == FOREIGN:
            return
        token = extension_token(leaf.name)
        rec = by_extension.setdefault(token, ExtensionRecord())
        if leaf.status == PRISTINE:
            rec.pristine += 1
        elif leaf.status == LOST:
            rec.lost += 1
        elif leaf.status == REPLICA:
            rec.replica += 1
        else:
            raise ValidationError(f"unknown leaf status '{leaf.status}' for '{leaf.name}'")

    def walk(node: FolderNode, path: str) -> tuple[CounterRecord, Counter]:
        counts = CounterRecord()
        replica_cs: Counter = Counter()
        for leaf in node.files:
            if leaf.status == PRISTINE:
                counts.pristine += 1
            elif leaf.status == LOST:
                counts.lost += 1
            elif leaf.status == REPLICA:
                counts.replica += 1
                if leaf.checksum is None:
                    raise ValidationError(
                        f"replica leaf '{leaf.name}' carries no checksum; "
                        "summarize needs an in-memory hierarchy built by build_hierarchy"
                    )
                replica_cs[leaf.checksum] += 1
            elif leaf.status == FOREIGN:
                counts.foreign += 1
            else:
                raise ValidationError(f"unknown leaf status '{leaf.status}' for '{leaf.name}'")
            bump_extension(leaf)
        for sub in node.folders:
            sub_path = f"{path}/{sub.name}" if path else sub.name
            sub_counts, sub_cs = walk(sub, sub_path)
            counts.pristine += sub_counts.pristine
            counts.lost += sub_counts.lost
            counts.replica += sub_counts.replica
            counts.foreign += sub_counts.foreign
            replica_cs.update(sub_cs)
        counts.replica_distinct_ratio = _distinct_ratio(replica_cs)
        if path:
            by_folder[path] = counts
        return counts, replica_cs

    totals, _ = walk(profile.root, "")
    return SummaryProfile(
        totals=totals,
        by_folder=by_folder,
        by_extension=by_extension,
        root_label=profile.context.root,
    )


@dataclass(frozen=True)
class Stats:
    """Aggregate of one counter across runs; stddev is the sample form (n-1)."""

    mean: float
    stddev: float | None
    min_value: float
    max_value: float
    n: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": self.mean,
            "stddev": self.stddev,
            "min": self.min_value,
            "max": self.max_value,
            "n": self.n,
        }


@dataclass
class AggregateProfile:
    """Per-counter statistics across the valid runs of one battery."""

    n: int
    totals: dict[str, Stats]
    by_folder: dict[str, dict[str, Stats]]
    by_extension: dict[str, dict[str, Stats]]

    def to_dict(self) -> dict[str, Any]:
        def emit(group: Mapping[str, Stats], order: Sequence[str]) -> dict[str, Any]:
            return {k: group[k].to_dict() for k in order if k in group}

        totals_order = ["pristine", "lost", "replica", "foreign", "replica_distinct_ratio"]
        ext_order = ["pristine", "lost", "replica"]
        return {
            "totals": emit(self.totals, totals_order),
            "by_folder": {
                f: emit(self.by_folder[f], totals_order)
                for f in sorted(self.by_folder, key=path_sort_key)
            },
            "by_extension": {
                e: emit(self.by_extension[e], ext_order)
                for e in sorted(self.by_extension, key=path_sort_key)
            },
        }

    def to_json_text(self) -> str:
        return jsonio.canonical_dumps(self.to_dict())


def _stats_of(values: Sequence[float]) -> Stats:
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        stddev = None
    else:
        stddev = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
    return Stats(mean=mean, stddev=stddev, min_value=min(values), max_value=max(values), n=n)


def _counter_values(record: CounterRecord | None, key: str) -> float:
    """A counter key absent in a run counts as 0 for that run."""
    if record is None:
        return 0
    if key == "replica_distinct_ratio":
        return record.replica_distinct_ratio if record.replica_distinct_ratio is not None else 0.0
    return getattr(record, key)


def aggregate(summaries: Sequence[SummaryProfile]) -> AggregateProfile:
    """Aggregate counters across runs (mean, sample stddev, min, max).

    Keys absent in a run (folders or extensions the run never saw, or a
    ratio for a run without replicas) count as 0 for that run.  n = 1
    yields no stddev.  All summaries must share the experiment shape: the
    root label is checked when the summaries carry one.
    """
    if not summaries:
        raise ValidationError("aggregate requires at least one summary")
    labels = {s.root_label for s in summaries if s.root_label is not None}
    if len(labels) > 1:
        raise ValidationError(f"summaries come from different experiment shapes: {sorted(labels)}")

    n = len(summaries)

    def counter_group(records: Sequence[CounterRecord | None]) -> dict[str, Stats]:
        keys = ["pristine", "lost", "replica", "foreign"]
        if any(r is not None and r.replica_distinct_ratio is not None for r in records):
            keys.append("replica_distinct_ratio")
        return {k: _stats_of([_counter_values(r, k) for r in records]) for k in keys}

    totals = counter_group([s.totals for s in summaries])

    folder_keys = sorted({f for s in summaries for f in s.by_folder}, key=path_sort_key)
    by_folder = {
        f: counter_group([s.by_folder.get(f) for s in summaries]) for f in folder_keys
    }

    ext_keys = sorted({e for s in summaries for e in s.by_extension}, key=path_sort_key)
    by_extension: dict[str, dict[str, Stats]] = {}
    for e in ext_keys:
        group: dict[str, Stats] = {}
        for key in ("pristine", "lost", "replica"):
            values = [getattr(s.by_extension[e], key) if e in s.by_extension else 0 for s in summaries]
            group[key] = _stats_of(values)
        by_extension[e] = group

    return AggregateProfile(n=n, totals=totals, by_folder=by_folder, by_extension=by_extension)


# ---------------------------------------------------------------------------
# parsing (summaries and aggregates travel between subcommands as files)

def _counter_from_obj(obj: Any, *, strict: bool, where: str) -> CounterRecord:
    reader = jsonio.FieldReader(obj, where=where)
    rec = CounterRecord(
        pristine=reader.take("pristine", int),
        lost=reader.take("lost", int),
        replica=reader.take("replica", int),
        foreign=reader.take("foreign", int),
    )
    ratio = reader.take("replica_distinct_ratio", (int, float), required=False)
    if ratio is not None:
        if not 0.0 <= float(ratio) <= 1.0:
            raise ParseError(f"{where}: replica_distinct_ratio out of [0, 1]")
        rec.replica_distinct_ratio = float(ratio)
    if strict:
        reader.reject_extras()
    for key in ("pristine", "lost", "replica", "foreign"):
        if getattr(rec, key) < 0:
            raise ParseError(f"{where}: '{key}' must be non-negative")
    return rec


def summary_from_obj(obj: Any, *, strict: bool = True, where: str = "summary") -> SummaryProfile:
    reader = jsonio.FieldReader(obj, where=where)
    totals = _counter_from_obj(reader.take("totals", dict), strict=strict, where=f"{where}: totals")
    raw_folders = reader.take("by_folder", dict)
    raw_exts = reader.take("by_extension", dict)
    if strict:
        reader.reject_extras()

    by_folder = {
        f: _counter_from_obj(v, strict=strict, where=f"{where}: by_folder['{f}']")
        for f, v in raw_folders.items()
    }
    by_extension: dict[str, ExtensionRecord] = {}
    for e, v in raw_exts.items():
        er = jsonio.FieldReader(v, where=f"{where}: by_extension['{e}']")
        rec = ExtensionRecord(
            pristine=er.take("pristine", int),
            lost=er.take("lost", int),
            replica=er.take("replica", int),
        )
        if strict:
            er.reject_extras()
        by_extension[e] = rec
    return SummaryProfile(totals=totals, by_folder=by_folder, by_extension=by_extension)


def read_summary(source: str | Path, *, strict: bool = True) -> SummaryProfile:
    text = Path(source).read_text(encoding="utf-8")
    obj = jsonio.canonical_loads(text, where=str(source))
    return summary_from_obj(obj, strict=strict, where=str(source))


def _stats_from_obj(obj: Any, *, where: str) -> Stats:
    # numeric types preserved verbatim so parse/serialize round-trips bytes
    reader = jsonio.FieldReader(obj, where=where)
    mean = reader.take("mean", (int, float))
    raw_sd = reader.take("stddev", (int, float, type(None)), required=True, default=None)
    minv = reader.take("min", (int, float))
    maxv = reader.take("max", (int, float))
    n = reader.take("n", int)
    reader.reject_extras()
    return Stats(mean=mean, stddev=raw_sd, min_value=minv, max_value=maxv, n=n)


def aggregate_from_obj(obj: Any, *, where: str = "aggregate") -> AggregateProfile:
    reader = jsonio.FieldReader(obj, where=where)
    raw_totals = reader.take("totals", dict)
    raw_folders = reader.take("by_folder", dict)
    raw_exts = reader.take("by_extension", dict)
    reader.reject_extras()

    def group(raw: dict, gwhere: str) -> dict[str, Stats]:
        return {k: _stats_from_obj(v, where=f"{gwhere}['{k}']") for k, v in raw.items()}

    totals = group(raw_totals, f"{where}: totals")
    by_folder = {f: group(v, f"{where}: by_folder['{f}']") for f, v in raw_folders.items()}
    by_extension = {e: group(v, f"{where}: by_extension['{e}']") for e, v in raw_exts.items()}
    ns = {s.n for g in [totals, *by_folder.values(), *by_extension.values()] for s in g.values()}
    if len(ns) > 1:
        raise ParseError(f"{where}: leaves disagree on n: {sorted(ns)}")
    n = ns.pop() if ns else 0
    return AggregateProfile(n=n, totals=totals, by_folder=by_folder, by_extension=by_extension)


def read_aggregate(source: str | Path) -> AggregateProfile:
    text = Path(source).read_text(encoding="utf-8")
    obj = jsonio.canonical_loads(text, where=str(source))
    return aggregate_from_obj(obj, where=str(source))
