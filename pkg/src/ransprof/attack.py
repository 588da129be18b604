"""Attack planners that turn a pristine manifest into an operation stream.

Each behaviour produces a fixed per-file operation sequence; the streams
are concatenated in seeded-shuffle target order and optionally cut after
an I/O budget.  The cut can land mid-sequence, which is what leaves
recoverable temp copies behind.  A larger budget always executes a
superset of a smaller one.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable

from ransprof import jsonio
from ransprof.errors import ValidationError
from ransprof.oplog import OP_COPY, OP_DELETE, OP_ENCRYPT, OP_RENAME
from ransprof.profiler import NO_EXTENSION, extension_token
from ransprof.report import Report, path_sort_key

KIND_COPY_THEN_ENCRYPT = "copy_then_encrypt"
KIND_RENAME_TO_MARKER = "rename_to_marker"
KIND_THREE_STAGE = "three_stage"
KIND_INDISCRIMINATE = "indiscriminate"

ATTACK_KINDS = (
    KIND_COPY_THEN_ENCRYPT,
    KIND_RENAME_TO_MARKER,
    KIND_THREE_STAGE,
    KIND_INDISCRIMINATE,
)

TMP_SUFFIX = ".tmp"


def fresh_path(candidate: str, is_taken: Callable[[str], bool]) -> str:
    """Return candidate, or a numbered variant that keeps the extension."""
    if not is_taken(candidate):
        return candidate
    stem, dot, ext = candidate.rpartition(".")
    k = 1
    while True:
        # counter goes before the extension so breakdowns stay stable
        bumped = f"{stem}.{k}.{ext}" if dot else f"{candidate}~{k}"
        if not is_taken(bumped):
            return bumped
        k += 1


@dataclass(frozen=True)
class PlannedOp:
    """One filesystem operation before any timestamp is assigned."""

    op: str
    src: str
    dst: str | None = None


@dataclass(frozen=True)
class AttackStrategy:
    kind: str
    include: tuple[str, ...] = ()  # empty = every folder
    exclude: tuple[str, ...] = ()
    target_extensions: tuple[str, ...] = ()  # empty = every extension
    skip_no_extension: bool = False
    marker_extension: str = ".ignore"
    encrypt_extension: str = ".enc"  # "" = encrypt in place
    marker_copies: int = 1
    io_budget: int | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ValidationError(f"unknown attack kind '{self.kind}'")
        if not self.marker_extension.startswith(".") or self.marker_extension == ".":
            raise ValidationError("marker_extension must look like '.ignore'")
        if self.encrypt_extension and not self.encrypt_extension.startswith("."):
            raise ValidationError("encrypt_extension must be empty or start with '.'")
        if self.marker_copies < 1:
            raise ValidationError("marker_copies must be >= 1")
        if self.io_budget is not None and self.io_budget < 0:
            raise ValidationError("io_budget must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "target_folders": {"include": list(self.include), "exclude": list(self.exclude)},
            "target_extensions": list(self.target_extensions),
            "skip_no_extension": self.skip_no_extension,
            "marker_extension": self.marker_extension,
            "encrypt_extension": self.encrypt_extension,
            "marker_copies": self.marker_copies,
            "io_budget": self.io_budget,
            "seed": self.seed,
        }


def attack_from_obj(obj: Any, *, where: str = "attack") -> AttackStrategy:
    reader = jsonio.FieldReader(obj, where=where)
    kind = reader.take("kind", str)
    folders = reader.take("target_folders", dict, required=False)
    include: tuple[str, ...] = ()
    exclude: tuple[str, ...] = ()
    if folders is not None:
        fr = jsonio.FieldReader(folders, where=f"{where}: target_folders")
        include = tuple(fr.take("include", list, required=False, default=[]))
        exclude = tuple(fr.take("exclude", list, required=False, default=[]))
        fr.reject_extras()
    strategy = AttackStrategy(
        kind=kind,
        include=include,
        exclude=exclude,
        target_extensions=tuple(
            reader.take("target_extensions", list, required=False, default=[])
        ),
        skip_no_extension=reader.take("skip_no_extension", bool, required=False, default=False),
        marker_extension=reader.take("marker_extension", str, required=False, default=".ignore"),
        encrypt_extension=reader.take("encrypt_extension", str, required=False, default=".enc"),
        marker_copies=reader.take("marker_copies", int, required=False, default=1),
        io_budget=reader.take("io_budget", (int, type(None)), required=False, default=None),
        seed=reader.take("seed", int, required=False, default=0),
    )
    reader.reject_extras()
    strategy.validate()
    return strategy


def _under(path: str, folder: str) -> bool:
    return path == folder or path.startswith(folder + "/")


def eligible_targets(reference: Report, strategy: AttackStrategy) -> list[str]:
    """Hashed reference paths the strategy would touch, in seeded order."""
    strategy.validate()
    targets = []
    wanted = {e.lower() for e in strategy.target_extensions}
    for entry in reference.hashed_entries():
        path = entry.path
        if strategy.include and not any(_under(path, f) for f in strategy.include):
            continue
        if any(_under(path, f) for f in strategy.exclude):
            continue
        if strategy.kind != KIND_INDISCRIMINATE:
            token = extension_token(path)
            if strategy.skip_no_extension and token == NO_EXTENSION:
                continue
            if wanted and token not in wanted:
                continue
        targets.append(path)
    targets.sort(key=path_sort_key)
    random.Random(f"{strategy.seed}:order").shuffle(targets)
    return targets


def _sequence_for(path: str, strategy: AttackStrategy, fresh: Callable[[str], str]) -> list[PlannedOp]:
    if strategy.encrypt_extension:
        enc_dst = fresh(path + strategy.encrypt_extension)
    else:
        enc_dst = path
    encrypt = PlannedOp(OP_ENCRYPT, path, enc_dst)

    if strategy.kind == KIND_INDISCRIMINATE:
        return [encrypt]
    if strategy.kind == KIND_COPY_THEN_ENCRYPT:
        tmp = fresh(path + TMP_SUFFIX)
        return [PlannedOp(OP_COPY, path, tmp), encrypt, PlannedOp(OP_DELETE, tmp)]
    if strategy.kind == KIND_RENAME_TO_MARKER:
        ops = [
            PlannedOp(OP_COPY, path, fresh(path + strategy.marker_extension))
            for _ in range(strategy.marker_copies)
        ]
        ops.append(encrypt)
        return ops
    # three_stage: the temp copy is renamed into a marker, then the
    # original is encrypted
    tmp = fresh(path + TMP_SUFFIX)
    marker = fresh(path + strategy.marker_extension)
    return [PlannedOp(OP_COPY, path, tmp), PlannedOp(OP_RENAME, tmp, marker), encrypt]


def plan_attack(reference: Report, strategy: AttackStrategy) -> list[PlannedOp]:
    """Full operation stream for the strategy, already budget-cut.

    Destination paths are made collision-free against every reference
    path and every earlier planned destination, so the plan can be
    executed literally.
    """
    strategy.validate()
    used = {entry.path for entry in reference.entries}

    def fresh(candidate: str) -> str:
        chosen = fresh_path(candidate, used.__contains__)
        used.add(chosen)
        return chosen

    ops: list[PlannedOp] = []
    for path in eligible_targets(reference, strategy):
        ops.extend(_sequence_for(path, strategy, fresh))
    if strategy.io_budget is not None:
        ops = ops[: strategy.io_budget]
    return ops
