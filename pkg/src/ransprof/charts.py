"""Chart emission: status pie and breakdown sunburst as SVG plus a CSV sidecar.

Charts are a pure function of the profile document they read.  The SVG is
self-contained vector output; the sidecar carries the same segment values
in tabular form so tests and downstream tooling can assert numbers rather
than pixels.  Labels round to one decimal percentage point.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from ransprof.errors import ParseError, ValidationError
from ransprof.profiler import (
    AggregateProfile,
    SummaryProfile,
    aggregate_from_obj,
    summary_from_obj,
)
from ransprof.report import path_sort_key

KIND_SUMMARY_PIE = "summary_pie"
KIND_BREAKDOWN_SUNBURST = "breakdown_sunburst"
CHART_KINDS = (KIND_SUMMARY_PIE, KIND_BREAKDOWN_SUNBURST)

FACET_STATUSES = ("pristine", "lost", "replica")
FACET_GROUPS = ("folder", "extension")

STATUS_COLORS = {"pristine": "#4caf50", "lost": "#e53935", "replica": "#1e88e5"}
SEGMENT_PALETTE = (
    "#1e88e5", "#43a047", "#fb8c00", "#8e24aa", "#00acc1", "#f4511e",
    "#3949ab", "#c0ca33", "#d81b60", "#6d4c41", "#00897b", "#7cb342", "#5e35b1",
)
DISTINCT_COLOR = "#263238"

CSV_COLUMNS = ("ring", "segment", "value", "share_pct", "pct_of_reference", "label")


@dataclass(frozen=True)
class ChartSpec:
    """What to draw: a chart kind, its data source, and where to write it."""

    kind: str
    source: str
    output: str
    facet: tuple[str, str] | None = None  # (status, grouping), sunburst only

    def validate(self) -> None:
        if self.kind not in CHART_KINDS:
            raise ValidationError(f"unknown chart kind '{self.kind}' (choose from {', '.join(CHART_KINDS)})")
        if not self.source or not self.output:
            raise ValidationError("chart needs both a source and an output path")
        if self.kind == KIND_SUMMARY_PIE:
            if self.facet is not None:
                raise ValidationError("summary_pie takes no facet")
            return
        if self.facet is None:
            raise ValidationError("breakdown_sunburst needs a facet, e.g. replica:folder")
        status, group = self.facet
        if status not in FACET_STATUSES:
            raise ValidationError(f"facet status '{status}' not one of {', '.join(FACET_STATUSES)}")
        if group not in FACET_GROUPS:
            raise ValidationError(f"facet grouping '{group}' not one of {', '.join(FACET_GROUPS)}")


def parse_facet(text: str) -> tuple[str, str]:
    status, sep, group = text.partition(":")
    if not sep:
        raise ValidationError(f"facet '{text}' must look like status:grouping, e.g. replica:folder")
    return status, group


def load_profile_document(source: str | Path) -> SummaryProfile | AggregateProfile:
    """Read a summary or aggregate profile, whichever the file turns out to be."""
    path = Path(source)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{source}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: not valid JSON: {exc}") from exc
    try:
        return summary_from_obj(obj, where=str(source))
    except ParseError:
        pass
    try:
        return aggregate_from_obj(obj, where=str(source))
    except ParseError as exc:
        raise ParseError(
            f"{source}: neither a summary profile nor an aggregate profile ({exc})"
        ) from exc


def _pct(value: float, total: float) -> float:
    return round(100.0 * value / total, 1)


def _mean_and_spread(cell: Any) -> tuple[float, float | None]:
    """Counter value plus stddev when the source is an aggregate."""
    if hasattr(cell, "mean"):
        return float(cell.mean), cell.stddev
    return cell, None  # summary counters stay integers


def _totals_cell(profile: SummaryProfile | AggregateProfile, key: str) -> Any:
    if isinstance(profile, AggregateProfile):
        return profile.totals.get(key, 0)
    return getattr(profile.totals, key)


def _group_mapping(
    profile: SummaryProfile | AggregateProfile, group: str
) -> dict[str, Any]:
    return profile.by_folder if group == "folder" else profile.by_extension


def _group_cell(record: Any, key: str) -> Any:
    if isinstance(record, dict):  # aggregate rows are plain stats mappings
        return record.get(key, 0)
    return getattr(record, key, 0)


def _label(head: str, pct: float, spread: float | None, mean: float | None) -> str:
    text = f"{head} {pct:.1f}%"
    if mean is not None:
        text += f" ({mean:.1f} ± {spread:.1f})" if spread is not None else f" ({mean:.1f})"
    return text


def _reference_total(profile: SummaryProfile | AggregateProfile) -> float:
    pristine, _ = _mean_and_spread(_totals_cell(profile, "pristine"))
    lost, _ = _mean_and_spread(_totals_cell(profile, "lost"))
    return pristine + lost


def available_facets(profile: SummaryProfile | AggregateProfile) -> list[str]:
    found = []
    for group in FACET_GROUPS:
        mapping = _group_mapping(profile, group)
        for status in FACET_STATUSES:
            for record in mapping.values():
                value, _ = _mean_and_spread(_group_cell(record, status))
                if value > 0:
                    found.append(f"{status}:{group}")
                    break
    return sorted(found)


def chart_rows(spec: ChartSpec, profile: SummaryProfile | AggregateProfile) -> list[dict[str, Any]]:
    """The numbers behind the chart; the CSV sidecar is exactly these rows."""
    spec.validate()
    is_aggregate = isinstance(profile, AggregateProfile)
    reference = _reference_total(profile)
    rows: list[dict[str, Any]] = []

    if spec.kind == KIND_SUMMARY_PIE:
        values = {}
        spreads = {}
        for status in FACET_STATUSES:
            value, spread = _mean_and_spread(_totals_cell(profile, status))
            values[status] = value
            spreads[status] = spread
        total = sum(values.values())
        if total <= 0:
            raise ValidationError(f"{spec.source}: summary has no classified files to chart")
        for status in FACET_STATUSES:
            if values[status] <= 0:
                continue
            pct = _pct(values[status], total)
            rows.append(
                {
                    "ring": "summary",
                    "segment": status,
                    "value": values[status],
                    "share_pct": pct,
                    "pct_of_reference": _pct(values[status], reference) if reference > 0 else None,
                    "label": _label(
                        status, pct, spreads[status], values[status] if is_aggregate else None
                    ),
                }
            )
        return rows

    status, group = spec.facet
    mapping = _group_mapping(profile, group)
    segments = []
    for name in sorted(mapping, key=path_sort_key):
        value, spread = _mean_and_spread(_group_cell(mapping[name], status))
        if value > 0:
            segments.append((name, value, spread))
    if not segments:
        have = available_facets(profile)
        raise ValidationError(
            f"{spec.source}: facet '{status}:{group}' has no data; "
            f"available facets: {', '.join(have) if have else 'none'}"
        )
    total = sum(value for _, value, _ in segments)
    for name, value, spread in segments:
        head = name if name else "(root)"
        pct = _pct(value, total)
        rows.append(
            {
                "ring": "groups",
                "segment": name,
                "value": value,
                "share_pct": pct,
                "pct_of_reference": _pct(value, reference) if reference > 0 else None,
                "label": _label(head, pct, spread, value if is_aggregate else None),
            }
        )
    if status == "replica" and group == "folder":
        # outer ring: the share of each segment's replicas that are distinct
        for name, _, _ in segments:
            cell = _group_cell(mapping[name], "replica_distinct_ratio")
            if cell is None:
                continue  # a summary row with no replicas carries no ratio
            ratio, _ = _mean_and_spread(cell)
            pct = round(100.0 * ratio, 1)
            rows.append(
                {
                    "ring": "distinct",
                    "segment": name,
                    "value": ratio,
                    "share_pct": pct,
                    "pct_of_reference": None,
                    "label": f"{pct:.1f}%",
                }
            )
    return rows


def render_csv(rows: list[dict[str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row["ring"],
                row["segment"],
                repr(row["value"]) if isinstance(row["value"], float) else row["value"],
                f"{row['share_pct']:.1f}",
                "" if row["pct_of_reference"] is None else f"{row['pct_of_reference']:.1f}",
                row["label"],
            ]
        )
    return buffer.getvalue()


# -- SVG geometry ------------------------------------------------------------

_FULL_SWEEP = 359.99  # a full circle drawn as one arc degenerates


def _polar(cx: float, cy: float, r: float, angle_deg: float) -> tuple[float, float]:
    rad = math.radians(angle_deg)
    return cx + r * math.cos(rad), cy + r * math.sin(rad)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _sector_path(cx: float, cy: float, r: float, a0: float, a1: float) -> str:
    a1 = min(a1, a0 + _FULL_SWEEP)
    x0, y0 = _polar(cx, cy, r, a0)
    x1, y1 = _polar(cx, cy, r, a1)
    large = 1 if a1 - a0 > 180 else 0
    return (
        f"M {_fmt(cx)} {_fmt(cy)} L {_fmt(x0)} {_fmt(y0)} "
        f"A {_fmt(r)} {_fmt(r)} 0 {large} 1 {_fmt(x1)} {_fmt(y1)} Z"
    )


def _annulus_path(cx: float, cy: float, ri: float, ro: float, a0: float, a1: float) -> str:
    a1 = min(a1, a0 + _FULL_SWEEP)
    xo0, yo0 = _polar(cx, cy, ro, a0)
    xo1, yo1 = _polar(cx, cy, ro, a1)
    xi0, yi0 = _polar(cx, cy, ri, a0)
    xi1, yi1 = _polar(cx, cy, ri, a1)
    large = 1 if a1 - a0 > 180 else 0
    return (
        f"M {_fmt(xo0)} {_fmt(yo0)} "
        f"A {_fmt(ro)} {_fmt(ro)} 0 {large} 1 {_fmt(xo1)} {_fmt(yo1)} "
        f"L {_fmt(xi1)} {_fmt(yi1)} "
        f"A {_fmt(ri)} {_fmt(ri)} 0 {large} 0 {_fmt(xi0)} {_fmt(yi0)} Z"
    )


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(spec: ChartSpec, rows: list[dict[str, Any]]) -> str:
    cx, cy = 180.0, 190.0
    parts: list[str] = []
    legend: list[tuple[str, str]] = []  # (color, label)

    if spec.kind == KIND_SUMMARY_PIE:
        title = "File status summary"
        segments = [r for r in rows if r["ring"] == "summary"]
        total = sum(r["value"] for r in segments)
        angle = -90.0
        for row in segments:
            color = STATUS_COLORS[row["segment"]]
            sweep = 360.0 * row["value"] / total
            if len(segments) == 1:
                parts.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="140.00" fill="{color}"/>')
            else:
                parts.append(f'<path d="{_sector_path(cx, cy, 140.0, angle, angle + sweep)}" fill="{color}"/>')
            legend.append((color, row["label"]))
            angle += sweep
    else:
        status, group = spec.facet
        title = f"{status} by {group}"
        segments = [r for r in rows if r["ring"] == "groups"]
        ratios = {r["segment"]: r for r in rows if r["ring"] == "distinct"}
        total = sum(r["value"] for r in segments)
        angle = -90.0
        for i, row in enumerate(segments):
            color = SEGMENT_PALETTE[i % len(SEGMENT_PALETTE)]
            sweep = 360.0 * row["value"] / total
            parts.append(f'<path d="{_annulus_path(cx, cy, 70.0, 110.0, angle, angle + sweep)}" fill="{color}"/>')
            legend.append((color, row["label"]))
            ring = ratios.get(row["segment"])
            if ring is not None and ring["value"] > 0:
                sub = sweep * ring["value"]
                parts.append(
                    f'<path d="{_annulus_path(cx, cy, 112.0, 140.0, angle, angle + sub)}" fill="{DISTINCT_COLOR}"/>'
                )
                legend.append((DISTINCT_COLOR, f"{row['segment'] or '(root)'} distinct {ring['label']}"))
            angle += sweep

    height = max(400, 70 + 22 * len(legend))
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="640" height="{height}" '
        f'viewBox="0 0 640 {height}" font-family="Helvetica, Arial, sans-serif">',
        f'<rect width="640" height="{height}" fill="#ffffff"/>',
        f'<text x="20" y="30" font-size="18" fill="#212121">{_esc(title)}</text>',
    ]
    lines.extend(parts)
    y = 60
    for color, label in legend:
        lines.append(f'<rect x="380" y="{y - 11}" width="14" height="14" fill="{color}"/>')
        lines.append(f'<text x="402" y="{y}" font-size="13" fill="#212121">{_esc(label)}</text>')
        y += 22
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_chart(spec: ChartSpec) -> tuple[Path, Path]:
    """Write the SVG and its CSV sidecar; returns both paths."""
    spec.validate()
    profile = load_profile_document(spec.source)
    rows = chart_rows(spec, profile)
    svg_path = Path(spec.output)
    csv_path = svg_path.with_suffix(".csv")
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    svg_path.write_text(render_svg(spec, rows), encoding="utf-8")
    csv_path.write_text(render_csv(rows), encoding="utf-8")
    return svg_path, csv_path
