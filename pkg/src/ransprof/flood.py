"""Decoy-flooding countermeasure: planners and the pristine backup archive.

A flooding run starts a fixed number of writer instances after a delay;
instances take target folders round-robin and together emit decoys at a
global rate.  Three content sources exist: seeded random bytes (decoys
read as foreign), live copies of files that still verify against the
pristine manifest, and byte copies pulled from a backup archive made
before the attack.
"""

from __future__ import annotations

import math
import random
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ransprof import jsonio
from ransprof.errors import ValidationError
from ransprof.oplog import OP_FLOOD_WRITE, OpEvent
from ransprof.report import Report

KIND_RANDOM = "random"
KIND_ON_THE_FLY = "on_the_fly"
KIND_SHADOW = "shadow"

FLOOD_KINDS = (KIND_RANDOM, KIND_ON_THE_FLY, KIND_SHADOW)

DEFAULT_START_DELAY_S = 30.0
DEFAULT_INSTANCES = 13


@dataclass(frozen=True)
class FloodStrategy:
    kind: str
    target_folders: tuple[str, ...]
    start_delay_s: float = DEFAULT_START_DELAY_S
    instances: int = DEFAULT_INSTANCES
    rate_per_s: float = 2.0  # decoys per second across all instances
    seed: int = 0

    @property
    def needs_manifest(self) -> bool:
        return self.kind in (KIND_ON_THE_FLY, KIND_SHADOW)

    @property
    def needs_backup(self) -> bool:
        return self.kind == KIND_SHADOW

    def validate(self) -> None:
        if self.kind not in FLOOD_KINDS:
            raise ValidationError(f"unknown flood kind '{self.kind}'")
        if not self.target_folders:
            raise ValidationError("flood needs at least one target folder")
        if self.start_delay_s < 0:
            raise ValidationError("start_delay_s must be >= 0")
        if self.instances < 1:
            raise ValidationError("instances must be >= 1")
        if self.rate_per_s <= 0:
            raise ValidationError("rate_per_s must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "target_folders": list(self.target_folders),
            "start_delay_s": self.start_delay_s,
            "instances": self.instances,
            "rate_per_s": self.rate_per_s,
            "seed": self.seed,
        }


def flood_from_obj(obj: Any, *, where: str = "flood") -> FloodStrategy:
    reader = jsonio.FieldReader(obj, where=where)
    strategy = FloodStrategy(
        kind=reader.take("kind", str),
        target_folders=tuple(reader.take("target_folders", list)),
        start_delay_s=float(
            reader.take("start_delay_s", (int, float), required=False, default=DEFAULT_START_DELAY_S)
        ),
        instances=reader.take("instances", int, required=False, default=DEFAULT_INSTANCES),
        rate_per_s=float(reader.take("rate_per_s", (int, float), required=False, default=2.0)),
        seed=reader.take("seed", int, required=False, default=0),
    )
    reader.reject_extras()
    strategy.validate()
    return strategy


def _folder_pools(manifest: Report, folders: tuple[str, ...]) -> tuple[dict[str, list[str]], list[str]]:
    pools: dict[str, list[str]] = {f: [] for f in folders}
    everything: list[str] = []
    for entry in manifest.hashed_entries():
        everything.append(entry.path)
        for f in folders:
            if entry.path == f or entry.path.startswith(f + "/"):
                pools[f].append(entry.path)
    return pools, everything


def plan_flood(
    strategy: FloodStrategy,
    *,
    stop_at_s: float,
    manifest: Report | None = None,
) -> list[OpEvent]:
    """Timed decoy events from the start delay up to stop_at_s.

    Decoy j lands at delay + (j+1)/rate and belongs to instance
    j mod instances; each instance writes into one folder, round-robin
    over the target list.  Copy-sourced kinds pick a source from the
    instance's folder, falling back to the whole manifest when the
    folder holds no files.
    """
    strategy.validate()
    if strategy.needs_manifest and manifest is None:
        raise ValidationError(f"flood kind '{strategy.kind}' needs a pristine manifest")
    count = math.floor((stop_at_s - strategy.start_delay_s) * strategy.rate_per_s)
    if count <= 0:
        return []

    pools: dict[str, list[str]] = {}
    everything: list[str] = []
    if strategy.needs_manifest:
        assert manifest is not None
        pools, everything = _folder_pools(manifest, strategy.target_folders)
        if not everything:
            raise ValidationError("manifest has no hashed files to source decoys from")

    events: list[OpEvent] = []
    for j in range(count):
        t = strategy.start_delay_s + (j + 1) / strategy.rate_per_s
        instance = j % strategy.instances
        folder = strategy.target_folders[instance % len(strategy.target_folders)]
        decoy = f"{folder}/decoy_{instance:02d}_{j:05d}.dat"
        if strategy.kind == KIND_RANDOM:
            events.append(OpEvent(t, OP_FLOOD_WRITE, decoy, None))
        else:
            pool = pools.get(folder) or everything
            source = random.Random(f"{strategy.seed}:pick:{j}").choice(pool)
            events.append(OpEvent(t, OP_FLOOD_WRITE, source, decoy))
    return events


def build_backup_archive(root: str | Path, archive: str | Path) -> int:
    """Zip every file under root by its relative path; returns file count."""
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"backup source is not a directory: {root}")
    archive = Path(archive)
    archive.parent.mkdir(parents=True, exist_ok=True)
    members = sorted(
        (p for p in root.rglob("*") if p.is_file() and not p.is_symlink()),
        key=lambda p: p.relative_to(root).as_posix().encode("utf-8"),
    )
    with zipfile.ZipFile(archive, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for p in members:
            zf.write(p, arcname=p.relative_to(root).as_posix())
    return len(members)
