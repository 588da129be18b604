"""Ransomware impact profiling and air-gapped experiment orchestration.

The package measures what a ransomware detonation did to a file tree by
comparing checksum reports taken before and after the attack, classifying
every file as pristine, lost, replica or foreign, and rolling the result up
into hierarchical, summary and cross-run aggregate profiles.  A simulator
produces attacks with known ground truth, and an orchestrator drives
repeatable batteries of isolated test sessions against a hypervisor backend.
"""

__version__ = "0.1.0"

from ransprof.attack import AttackStrategy
from ransprof.charts import ChartSpec, emit_chart
from ransprof.corpus import CorpusSpec, FolderSpec, default_corpus_spec, generate_corpus
from ransprof.flood import FloodStrategy, build_backup_archive
from ransprof.profiler import (
    AggregateProfile,
    DiffProfile,
    HierarchicalProfile,
    SummaryProfile,
    aggregate,
    build_hierarchy,
    classify,
    summarize,
)
from ransprof.report import (
    FileRecord,
    Report,
    ScanOptions,
    checksum_file,
    read_report,
    scan_directory,
    write_report,
)
from ransprof.scenario import (
    SimTimeline,
    apply_attack,
    apply_flooding,
    run_attack_scenario,
)
from ransprof.storage import ResultStore, SessionArtifacts

__all__ = [
    "__version__",
    "AttackStrategy",
    "ChartSpec",
    "CorpusSpec",
    "FloodStrategy",
    "FolderSpec",
    "SimTimeline",
    "apply_attack",
    "apply_flooding",
    "build_backup_archive",
    "default_corpus_spec",
    "emit_chart",
    "generate_corpus",
    "run_attack_scenario",
    "ResultStore",
    "SessionArtifacts",
    "FileRecord",
    "Report",
    "ScanOptions",
    "checksum_file",
    "read_report",
    "scan_directory",
    "write_report",
    "AggregateProfile",
    "DiffProfile",
    "HierarchicalProfile",
    "SummaryProfile",
    "aggregate",
    "build_hierarchy",
    "classify",
    "summarize",
]
