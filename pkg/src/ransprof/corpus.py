"""Deterministic user-data corpora for attack experiments.

A corpus spec names top-level folders with file counts, an extension mix,
a byte budget and a seed; generating it twice with the same seed yields a
byte-identical tree.  File content is seeded per path, so any file can be
regenerated independently.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ransprof import jsonio
from ransprof.errors import ValidationError
from ransprof.report import FileRecord, Report, path_sort_key

# stems for generated file names; the trailing index keeps them unique
_NAME_STEMS = (
    "report", "notes", "photo", "invoice", "draft", "backup", "album",
    "budget", "letter", "archive", "slides", "sheet", "memo", "scan",
)

DEFAULT_EXTENSIONS: dict[str, float] = {
    "txt": 3.0, "pdf": 2.0, "docx": 2.0, "jpg": 2.0, "png": 1.0,
    "xlsx": 1.0, "zip": 1.0, "": 1.0,  # "" = no extension
}

# a typical 13-folder user profile
DEFAULT_FOLDERS = (
    "Desktop", "Documents", "Downloads", "Pictures", "Music", "Videos",
    "AppData", "Contacts", "Favorites", "Links", "SavedGames", "Searches",
    "Public",
)


@dataclass(frozen=True)
class FolderSpec:
    """One top-level folder: how many files, how deep, how heavy."""

    name: str
    files: int
    depth: int = 1
    weight: float = 1.0

    def validate(self) -> None:
        if not self.name or "/" in self.name or self.name in (".", ".."):
            raise ValidationError(f"bad folder name '{self.name}'")
        if self.files < 0:
            raise ValidationError(f"folder '{self.name}': files must be >= 0")
        if self.depth < 0:
            raise ValidationError(f"folder '{self.name}': depth must be >= 0")
        if self.weight <= 0:
            raise ValidationError(f"folder '{self.name}': weight must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "files": self.files, "depth": self.depth, "weight": self.weight}


@dataclass
class CorpusSpec:
    folders: tuple[FolderSpec, ...]
    extensions: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_EXTENSIONS))
    total_bytes: int = 1 << 20
    seed: int = 0
    duplicate_weight: float = 0.0

    def validate(self) -> None:
        names = set()
        for f in self.folders:
            f.validate()
            if f.name in names:
                raise ValidationError(f"duplicate folder name '{f.name}'")
            names.add(f.name)
        if not self.extensions:
            raise ValidationError("extension mix is empty")
        for ext, w in self.extensions.items():
            if w <= 0:
                raise ValidationError(f"extension '{ext}': weight must be positive")
        if self.total_bytes < 0:
            raise ValidationError("total_bytes must be >= 0")
        if not 0.0 <= self.duplicate_weight < 1.0:
            raise ValidationError("duplicate_weight must be in [0, 1)")

    def to_dict(self) -> dict[str, Any]:
        return {
            "folders": [f.to_dict() for f in self.folders],
            "extensions": {k: self.extensions[k] for k in sorted(self.extensions)},
            "total_bytes": self.total_bytes,
            "seed": self.seed,
            "duplicate_weight": self.duplicate_weight,
        }


def default_corpus_spec(
    *,
    seed: int = 0,
    files_per_folder: int = 8,
    total_bytes: int = 1 << 20,
    duplicate_weight: float = 0.1,
) -> CorpusSpec:
    return CorpusSpec(
        folders=tuple(FolderSpec(name, files_per_folder) for name in DEFAULT_FOLDERS),
        total_bytes=total_bytes,
        seed=seed,
        duplicate_weight=duplicate_weight,
    )


def corpus_spec_from_obj(obj: Any, *, where: str = "corpus") -> CorpusSpec:
    reader = jsonio.FieldReader(obj, where=where)
    raw_folders = reader.take("folders", list)
    folders = []
    for i, rf in enumerate(raw_folders):
        fr = jsonio.FieldReader(rf, where=f"{where}: folders[{i}]")
        folders.append(
            FolderSpec(
                name=fr.take("name", str),
                files=fr.take("files", int),
                depth=fr.take("depth", int, required=False, default=1),
                weight=float(fr.take("weight", (int, float), required=False, default=1.0)),
            )
        )
        fr.reject_extras()
    extensions = reader.take("extensions", dict, required=False)
    total_bytes = reader.take("total_bytes", int, required=False, default=1 << 20)
    seed = reader.take("seed", int, required=False, default=0)
    duplicate_weight = float(
        reader.take("duplicate_weight", (int, float), required=False, default=0.0)
    )
    reader.reject_extras()
    spec = CorpusSpec(
        folders=tuple(folders),
        extensions=dict(extensions) if extensions is not None else dict(DEFAULT_EXTENSIONS),
        total_bytes=total_bytes,
        seed=seed,
        duplicate_weight=duplicate_weight,
    )
    spec.validate()
    return spec


def _plan_paths(spec: CorpusSpec) -> list[tuple[str, float]]:
    """Plan (relative path, size weight) for every file to create."""
    planned: list[tuple[str, float]] = []
    ext_names = sorted(spec.extensions)
    ext_weights = [spec.extensions[e] for e in ext_names]
    for folder in spec.folders:
        rng = random.Random(f"{spec.seed}:plan:{folder.name}")
        for i in range(folder.files):
            level = rng.randint(0, folder.depth)
            parts = [folder.name] + [f"sub{rng.randint(1, 2)}" for _ in range(level)]
            ext = rng.choices(ext_names, weights=ext_weights)[0]
            stem = f"{rng.choice(_NAME_STEMS)}_{i:04d}"
            name = f"{stem}.{ext}" if ext else stem
            planned.append(("/".join(parts) + "/" + name, folder.weight * rng.uniform(0.5, 1.5)))
    return planned


def generate_corpus(spec: CorpusSpec, destination: str | Path) -> Report:
    """Materialize the corpus and return its pristine checksum report.

    The report matches what scan_directory would produce over the result
    (modulo the pinned deterministic timestamp).  A zero byte budget
    creates the folders but no files.
    """
    spec.validate()
    dest = Path(destination)
    if dest.exists():
        if not dest.is_dir():
            raise ValidationError(f"corpus destination is not a directory: {dest}")
        if any(dest.iterdir()):
            raise ValidationError(f"corpus destination is not empty: {dest}")
    dest.mkdir(parents=True, exist_ok=True)

    for folder in spec.folders:
        (dest / folder.name).mkdir(parents=True, exist_ok=True)

    records: list[FileRecord] = []
    if spec.total_bytes > 0:
        planned = _plan_paths(spec)
        weight_sum = sum(w for _, w in planned)
        dup_rng = random.Random(f"{spec.seed}:dup")
        created: list[tuple[str, bytes]] = []  # (path, content) for duplicate picks
        for rel, weight in planned:
            if created and dup_rng.random() < spec.duplicate_weight:
                data = dup_rng.choice(created)[1]
            else:
                size = int(spec.total_bytes * weight / weight_sum)
                data = random.Random(f"{spec.seed}:data:{rel}").randbytes(size)
            abs_path = dest / rel
            abs_path.parent.mkdir(parents=True, exist_ok=True)
            abs_path.write_bytes(data)
            created.append((rel, data))
            records.append(FileRecord(rel, hashlib.md5(data).hexdigest(), len(data), "hashed"))

    records.sort(key=lambda r: path_sort_key(r.path))
    from ransprof import __version__

    report = Report(
        root=str(dest.resolve()),
        algorithm="md5",
        created_at=jsonio.SIM_EPOCH,
        tool_version=__version__,
        entries=tuple(records),
    )
    report.validate()
    return report
