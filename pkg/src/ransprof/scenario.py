"""Timed attack scenarios executed against a real directory tree.

The engine merges an attack operation stream with flood decoy events on
one simulated clock, drops everything at or past the timeout, and applies
the survivors to disk while evolving an in-memory state map of expected
path -> (checksum, size).  No wall time passes: event times are plan
arithmetic, and the persisted log divides them by the configured time
compression.  All generated content is seeded per path, so an executed
log can be replayed onto a pristine copy and reproduce the tree byte for
byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import random
import shutil
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from ransprof.attack import AttackStrategy, PlannedOp, fresh_path, plan_attack
from ransprof.errors import ValidationError
from ransprof.flood import KIND_ON_THE_FLY, KIND_SHADOW, FloodStrategy, plan_flood
from ransprof.oplog import (
    OP_COPY,
    OP_DELETE,
    OP_ENCRYPT,
    OP_FLOOD_WRITE,
    OP_RENAME,
    OpEvent,
)
from ransprof.profiler import (
    FOREIGN,
    LOST,
    PRISTINE,
    REPLICA,
    DiffProfile,
    PostFileDiff,
    RefFileDiff,
)
from ransprof.report import Report, checksum_file, path_sort_key, scan_directory

DEFAULT_TIMEOUT_S = 600.0
DEFAULT_TIME_COMPRESSION = 60.0
DEFAULT_ATTACK_OPS_PER_S = 40.0

# random flood decoys draw their size from this range
_DECOY_MIN_BYTES = 1 << 10
_DECOY_MAX_BYTES = 1 << 14

_ATTACK_LANE = 0
_FLOOD_LANE = 1


def derive_seed(base: int, label: str) -> int:
    """Stable child seed; independent of PYTHONHASHSEED."""
    digest = hashlib.sha256(f"{base}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class SimTimeline:
    """Clock parameters shared by every event in one scenario."""

    timeout_s: float = DEFAULT_TIMEOUT_S
    time_compression: float = DEFAULT_TIME_COMPRESSION
    attack_ops_per_s: float = DEFAULT_ATTACK_OPS_PER_S

    def validate(self) -> None:
        if self.timeout_s <= 0:
            raise ValidationError("timeout_s must be positive")
        if self.time_compression <= 0:
            raise ValidationError("time_compression must be positive")
        if self.attack_ops_per_s <= 0:
            raise ValidationError("attack_ops_per_s must be positive")

    def to_dict(self) -> dict[str, float]:
        return {
            "timeout_s": self.timeout_s,
            "time_compression": self.time_compression,
            "attack_ops_per_s": self.attack_ops_per_s,
        }


def timeline_from_obj(obj: object, *, where: str = "timeline") -> SimTimeline:
    from ransprof import jsonio

    reader = jsonio.FieldReader(obj, where=where)
    timeline = SimTimeline(
        timeout_s=float(
            reader.take("timeout_s", (int, float), required=False, default=DEFAULT_TIMEOUT_S)
        ),
        time_compression=float(
            reader.take(
                "time_compression", (int, float), required=False, default=DEFAULT_TIME_COMPRESSION
            )
        ),
        attack_ops_per_s=float(
            reader.take(
                "attack_ops_per_s", (int, float), required=False, default=DEFAULT_ATTACK_OPS_PER_S
            )
        ),
    )
    reader.reject_extras()
    timeline.validate()
    return timeline


def merge_timeline(
    attack_ops: Sequence[PlannedOp],
    flood_events: Sequence[OpEvent],
    timeline: SimTimeline,
) -> tuple[list[OpEvent], int]:
    """Single ordered stream plus the count dropped by the timeout.

    Attack op k runs at k / attack_ops_per_s.  Ties order attack before
    flood, then by position within the lane.
    """
    tagged: list[tuple[float, int, int, OpEvent]] = []
    for k, op in enumerate(attack_ops):
        e = OpEvent(k / timeline.attack_ops_per_s, op.op, op.src, op.dst)
        tagged.append((e.t, _ATTACK_LANE, k, e))
    for j, e in enumerate(flood_events):
        tagged.append((e.t, _FLOOD_LANE, j, e))
    tagged.sort(key=lambda item: (item[0], item[1], item[2]))
    merged = [e for _, _, _, e in tagged]
    kept = [e for e in merged if e.t < timeline.timeout_s]
    return kept, len(merged) - len(kept)


@dataclass
class ScenarioResult:
    reference: Report
    root: str
    state: dict[str, tuple[str, int]]  # expected post tree: path -> (checksum, size)
    executed: tuple[OpEvent, ...]  # plan-time seconds, collision-resolved paths
    logged: tuple[OpEvent, ...]  # same events on the compressed clock
    skipped: tuple[OpEvent, ...]  # e.g. decoy sources that failed verification
    planned_attack_ops: int
    planned_flood_events: int
    truncated: int
    seed: int

    def ground_truth(self) -> DiffProfile:
        return ground_truth_profile(self.reference, self.state, post_root=self.root)


class _Executor:
    """Applies one event stream to disk and to the state map in lockstep."""

    def __init__(
        self,
        root: Path,
        reference: Report,
        *,
        seed: int,
        flood_kind: str | None,
        backup: Path | None,
    ) -> None:
        self.root = root
        self.seed = seed
        self.flood_kind = flood_kind
        self.algorithm = reference.algorithm
        self.state: dict[str, tuple[str, int]] = {
            e.path: (e.checksum, e.size) for e in reference.hashed_entries()
        }
        self.pristine = {e.path: e.checksum for e in reference.hashed_entries()}
        self.executed: list[OpEvent] = []
        self.skipped: list[OpEvent] = []
        self._backup = zipfile.ZipFile(backup) if backup is not None else None
        self._backup_names = set(self._backup.namelist()) if self._backup else set()

    def close(self) -> None:
        if self._backup is not None:
            self._backup.close()

    def _abs(self, rel: str) -> Path:
        return self.root / rel

    def _fresh(self, candidate: str) -> str:
        return fresh_path(candidate, self.state.__contains__)

    def _digest(self, data: bytes) -> str:
        return hashlib.new(self.algorithm, data).hexdigest()

    def _write(self, rel: str, data: bytes) -> None:
        target = self._abs(rel)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        self.state[rel] = (self._digest(data), len(data))

    def run(self, events: Sequence[OpEvent]) -> None:
        for event in events:
            self._dispatch(event)

    def _dispatch(self, event: OpEvent) -> None:
        handler = {
            OP_COPY: self._do_copy,
            OP_ENCRYPT: self._do_encrypt,
            OP_DELETE: self._do_delete,
            OP_RENAME: self._do_rename,
            OP_FLOOD_WRITE: self._do_flood,
        }[event.op]
        handler(event)

    def _do_copy(self, event: OpEvent) -> None:
        if event.src not in self.state or event.dst is None:
            self.skipped.append(event)
            return
        dst = self._fresh(event.dst)
        target = self._abs(dst)
        target.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(self._abs(event.src), target)
        self.state[dst] = self.state[event.src]
        self.executed.append(dataclasses.replace(event, dst=dst))

    def _do_encrypt(self, event: OpEvent) -> None:
        if event.src not in self.state or event.dst is None:
            self.skipped.append(event)
            return
        size = self.state[event.src][1]
        junk = random.Random(f"{self.seed}:enc:{event.src}").randbytes(size)
        self._abs(event.src).write_bytes(junk)
        if event.dst == event.src:
            dst = event.src
        else:
            dst = self._fresh(event.dst)
            self._abs(event.src).replace(self._abs(dst))
            del self.state[event.src]
        self.state[dst] = (self._digest(junk), len(junk))
        self.executed.append(dataclasses.replace(event, dst=dst))

    def _do_delete(self, event: OpEvent) -> None:
        if event.src not in self.state:
            self.skipped.append(event)
            return
        self._abs(event.src).unlink()
        del self.state[event.src]
        self.executed.append(event)

    def _do_rename(self, event: OpEvent) -> None:
        if event.src not in self.state or event.dst is None:
            self.skipped.append(event)
            return
        dst = self._fresh(event.dst)
        self._abs(event.src).replace(self._abs(dst))
        self.state[dst] = self.state.pop(event.src)
        self.executed.append(dataclasses.replace(event, dst=dst))

    def _do_flood(self, event: OpEvent) -> None:
        if event.dst is None:
            # random-content decoy; content keyed on the final path
            decoy = self._fresh(event.src)
            rng = random.Random(f"{self.seed}:fw:{decoy}")
            self._write(decoy, rng.randbytes(rng.randint(_DECOY_MIN_BYTES, _DECOY_MAX_BYTES)))
            self.executed.append(dataclasses.replace(event, src=decoy))
            return
        if self.flood_kind == KIND_SHADOW:
            if event.src not in self._backup_names:
                self.skipped.append(event)
                return
            assert self._backup is not None
            data = self._backup.read(event.src)
        elif self.flood_kind == KIND_ON_THE_FLY:
            source = self._abs(event.src)
            pristine = self.pristine.get(event.src)
            # the live file must still verify, or the decoy is abandoned
            if pristine is None or not source.is_file():
                self.skipped.append(event)
                return
            if checksum_file(source, self.algorithm) != pristine:
                self.skipped.append(event)
                return
            data = source.read_bytes()
        else:
            raise ValidationError(f"copy-sourced decoy without a flood kind: {event}")
        dst = self._fresh(event.dst)
        self._write(dst, data)
        self.executed.append(dataclasses.replace(event, dst=dst))


def ground_truth_profile(
    reference: Report,
    state: Mapping[str, tuple[str, int]],
    *,
    post_root: str,
) -> DiffProfile:
    """DiffProfile derived from the engine's bookkeeping alone.

    Never consults the disk or the classifier, so it can corroborate a
    scan-then-classify pipeline over the mutated tree.
    """
    if reference.unreadable_count():
        raise ValidationError("ground truth needs a fully hashed reference")
    ref_entries = list(reference.hashed_entries())
    ref_cs_of = {e.path: e.checksum for e in ref_entries}
    ref_by_cs: dict[str, list[str]] = {}
    for e in ref_entries:
        ref_by_cs.setdefault(e.checksum, []).append(e.path)
    post_cs_set = {cs for cs, _ in state.values()}

    ref_files = {
        e.path: RefFileDiff(
            status=PRISTINE
            if e.path in state and state[e.path][0] == e.checksum
            else LOST,
            recoverable=e.checksum in post_cs_set,
            checksum=e.checksum,
        )
        for e in ref_entries
    }

    post_files: dict[str, PostFileDiff] = {}
    overwritten: list[str] = []
    for path in sorted(state, key=path_sort_key):
        cs = state[path][0]
        sources = ref_by_cs.get(cs)
        if sources is not None:
            if path in sources:
                continue
            post_files[path] = PostFileDiff(REPLICA, tuple(sources), cs)
        elif path in ref_cs_of:
            overwritten.append(path)
        else:
            post_files[path] = PostFileDiff(FOREIGN, (), cs)

    return DiffProfile(
        reference_root=reference.root,
        post_root=post_root,
        algorithm=reference.algorithm,
        ref_files=ref_files,
        post_files=post_files,
        overwritten=tuple(overwritten),
        unknown_paths=(),
        ref_hashed_count=len(ref_entries),
        post_hashed_count=len(state),
    )


def run_attack_scenario(
    reference: Report,
    root: str | Path,
    *,
    attack: AttackStrategy | None = None,
    flood: FloodStrategy | None = None,
    timeline: SimTimeline | None = None,
    seed: int | None = None,
    backup: str | Path | None = None,
    flood_stop_at_s: float | None = None,
) -> ScenarioResult:
    """Plan, merge, truncate and execute one scenario against root.

    The reference report must describe root's current content.  When
    flood_stop_at_s is omitted the flood plans up to the timeout; events
    from either lane at or past the timeout are dropped before execution.
    """
    if attack is None and flood is None:
        raise ValidationError("scenario needs an attack, a flood, or both")
    timeline = timeline or SimTimeline()
    timeline.validate()
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"scenario root is not a directory: {root}")
    if seed is None:
        seed = attack.seed if attack is not None else flood.seed  # type: ignore[union-attr]
    if flood is not None and flood.needs_backup and backup is None:
        raise ValidationError("shadow flooding needs a backup archive")

    attack_ops = plan_attack(reference, attack) if attack is not None else []
    stop = flood_stop_at_s if flood_stop_at_s is not None else timeline.timeout_s
    flood_events = (
        plan_flood(flood, stop_at_s=stop, manifest=reference) if flood is not None else []
    )
    events, truncated = merge_timeline(attack_ops, flood_events, timeline)

    executor = _Executor(
        root,
        reference,
        seed=seed,
        flood_kind=flood.kind if flood is not None else None,
        backup=Path(backup) if backup is not None else None,
    )
    try:
        executor.run(events)
    finally:
        executor.close()

    executed = tuple(executor.executed)
    logged = tuple(
        dataclasses.replace(e, t=e.t / timeline.time_compression) for e in executed
    )
    return ScenarioResult(
        reference=reference,
        root=str(root.resolve()),
        state=executor.state,
        executed=executed,
        logged=logged,
        skipped=tuple(executor.skipped),
        planned_attack_ops=len(attack_ops),
        planned_flood_events=len(flood_events),
        truncated=truncated,
        seed=seed,
    )


def apply_attack(
    root: str | Path,
    strategy: AttackStrategy,
    *,
    reference: Report | None = None,
    timeline: SimTimeline | None = None,
    seed: int | None = None,
) -> ScenarioResult:
    """Run the whole budgeted attack against root, no timeout cut."""
    if reference is None:
        reference = scan_directory(root)
    timeline = timeline or SimTimeline(timeout_s=math.inf)
    return run_attack_scenario(reference, root, attack=strategy, timeline=timeline, seed=seed)


def apply_flooding(
    root: str | Path,
    strategy: FloodStrategy,
    *,
    stop_at_s: float,
    reference: Report | None = None,
    backup: str | Path | None = None,
    seed: int | None = None,
) -> ScenarioResult:
    """Run flooding alone against root until stop_at_s."""
    if reference is None:
        reference = scan_directory(root)
    timeline = SimTimeline(timeout_s=math.inf)
    return run_attack_scenario(
        reference,
        root,
        flood=strategy,
        timeline=timeline,
        seed=seed,
        backup=backup,
        flood_stop_at_s=stop_at_s,
    )


def replay_operations(
    root: str | Path,
    events: Sequence[OpEvent],
    *,
    seed: int,
    backup: str | Path | None = None,
) -> None:
    """Reapply an executed log onto a pristine copy of the original tree.

    Paths in an executed log are already collision-resolved, so they are
    applied literally.  Copy-sourced decoys take the source's bytes from
    the backup archive when one is given (required to replay shadow
    floods), otherwise from the live tree; a decoy that executed did
    verify at the time, so both give the pristine bytes.
    """
    root = Path(root)
    archive = zipfile.ZipFile(backup) if backup is not None else None
    names = set(archive.namelist()) if archive else set()
    try:
        for event in events:
            src = root / event.src
            if event.op == OP_COPY:
                assert event.dst is not None
                (root / event.dst).parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(src, root / event.dst)
            elif event.op == OP_RENAME:
                assert event.dst is not None
                (root / event.dst).parent.mkdir(parents=True, exist_ok=True)
                src.replace(root / event.dst)
            elif event.op == OP_DELETE:
                src.unlink()
            elif event.op == OP_ENCRYPT:
                size = src.stat().st_size
                junk = random.Random(f"{seed}:enc:{event.src}").randbytes(size)
                src.write_bytes(junk)
                if event.dst is not None and event.dst != event.src:
                    src.replace(root / event.dst)
            elif event.op == OP_FLOOD_WRITE:
                if event.dst is None:
                    rng = random.Random(f"{seed}:fw:{event.src}")
                    data = rng.randbytes(rng.randint(_DECOY_MIN_BYTES, _DECOY_MAX_BYTES))
                    src.parent.mkdir(parents=True, exist_ok=True)
                    src.write_bytes(data)
                else:
                    if archive is not None and event.src in names:
                        data = archive.read(event.src)
                    else:
                        data = src.read_bytes()
                    target = root / event.dst
                    target.parent.mkdir(parents=True, exist_ok=True)
                    target.write_bytes(data)
            else:
                raise ValidationError(f"cannot replay op '{event.op}'")
    finally:
        if archive is not None:
            archive.close()
