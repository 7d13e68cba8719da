"""Report emission: comparison tables (text + CSV) and deterministic plots.

Numeric formatting mirrors the bundled reference table: NME with three
decimals, failure rate as an integer count (plus the fraction where the
table carries one). Emission is a pure function of its inputs so outputs
are golden-testable byte for byte.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .errors import StylemarkError
from .raster import BLACK, GRAY, PALETTE, Canvas, GLYPH_H, nice_max, text_width

PLOT_KINDS = ("bar_nme_fr", "bar_per_region", "line_loss")


@dataclass
class TableRow:
    configuration: str
    nme: float
    fr: int
    delta_pct: Optional[float] = None
    retention_pct: Optional[float] = None


@dataclass
class PlotSpec:
    """Declarative plot description.

    series semantics per kind:
      - bar_nme_fr: {"nme": [...], "fr": [...]} with ``labels`` naming bars
      - bar_per_region: {series name: [value per region]} with ``labels``
        naming regions
      - line_loss: {series name: [(epoch, loss), ...]}
    """

    kind: str
    series: dict[str, list]
    output_path: Path
    labels: list[str] = field(default_factory=list)
    dimensions: tuple[int, int] = (640, 360)
    title: str = ""

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise StylemarkError(f"unknown plot kind {self.kind!r}")
        if not self.series:
            raise StylemarkError("plot spec has no series")
        lengths = {len(v) for v in self.series.values()}
        if 0 in lengths:
            raise StylemarkError("plot spec has an empty series")
        if self.kind in ("bar_nme_fr", "bar_per_region"):
            if len(lengths) != 1:
                raise StylemarkError(f"inconsistent series lengths: {sorted(lengths)}")
            if self.labels and len(self.labels) != lengths.pop():
                raise StylemarkError("labels length does not match series length")
        self.output_path = Path(self.output_path)


def format_fr(row: TableRow) -> str:
    return str(int(row.fr))


def emit_table(rows: Sequence[TableRow], path_prefix: str | Path) -> tuple[Path, Path]:
    """Write ``<prefix>.csv`` and ``<prefix>.txt``; returns both paths.

    Row order is preserved. Optional comparison columns (delta vs baseline,
    retention) appear only when present on every row.
    """
    rows = list(rows)
    if not rows:
        raise StylemarkError("cannot emit an empty table")
    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.with_suffix(".csv")
    txt_path = prefix.with_suffix(".txt")

    with_delta = all(r.delta_pct is not None for r in rows)
    header = ["configuration", "nme", "fr"]
    if with_delta:
        header += ["delta_vs_baseline_pct", "retention_pct"]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        cells = [r.configuration, f"{r.nme:.3f}", format_fr(r)]
        if with_delta:
            cells += [f"{r.delta_pct:+.1f}", f"{r.retention_pct:.1f}"]
        writer.writerow(cells)
    csv_path.write_text(buf.getvalue(), encoding="utf-8")

    name_w = max(len("Training Configuration"), *(len(r.configuration) for r in rows))
    lines = []
    head = f"{'Training Configuration':<{name_w}}  {'NME':>8}  {'FR':>4}"
    if with_delta:
        head += f"  {'dNME%':>8}  {'Ret%':>6}"
    lines.append(head)
    lines.append("-" * len(head))
    for r in rows:
        line = f"{r.configuration:<{name_w}}  {r.nme:>8.3f}  {format_fr(r):>4}"
        if with_delta:
            line += f"  {r.delta_pct:>+8.1f}  {r.retention_pct:>6.1f}"
        lines.append(line)
    txt_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return csv_path, txt_path


def parse_table_csv(path: str | Path) -> list[TableRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            rows.append(TableRow(
                configuration=rec["configuration"],
                nme=float(rec["nme"]),
                fr=int(rec["fr"]),
                delta_pct=float(rec["delta_vs_baseline_pct"])
                if rec.get("delta_vs_baseline_pct") else None,
                retention_pct=float(rec["retention_pct"])
                if rec.get("retention_pct") else None,
            ))
    return rows


def _axes(canvas: Canvas, margin_l: int, margin_b: int, margin_t: int,
          margin_r: int) -> tuple[int, int, int, int]:
    x0, y0 = margin_l, canvas.height - margin_b
    x1, y1 = canvas.width - margin_r, margin_t
    canvas.line(x0, y0, x1, y0, BLACK)
    canvas.line(x0, y0, x0, y1, BLACK)
    return x0, y0, x1, y1


def emit_plot(spec: PlotSpec) -> Path:
    """Render the spec to a PNG; identical specs yield identical bytes."""
    canvas = Canvas(*spec.dimensions)
    if spec.kind == "line_loss":
        _render_line_loss(canvas, spec)
    else:
        _render_bars(canvas, spec)
    if spec.title:
        canvas.text((canvas.width - text_width(spec.title)) // 2, 4, spec.title)
    spec.output_path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(spec.output_path)
    return spec.output_path


def _render_bars(canvas: Canvas, spec: PlotSpec) -> None:
    x0, y0, x1, y1 = _axes(canvas, 46, 58, 18, 10)
    names = list(spec.series)
    n_groups = len(next(iter(spec.series.values())))
    top = nice_max(max(max(float(v) for v in vec) for vec in spec.series.values()))
    span_y = y0 - y1

    def to_y(v: float) -> int:
        return int(round(y0 - (v / top) * span_y))

    canvas.text(2, y1 - 4, f"{top:g}")
    canvas.text(2, y0 - GLYPH_H // 2, "0")
    group_w = (x1 - x0) / max(n_groups, 1)
    bar_w = max(2, int(group_w / (len(names) + 1)))
    for g in range(n_groups):
        gx = x0 + g * group_w
        for s, name in enumerate(names):
            v = float(spec.series[name][g])
            bx0 = int(round(gx + (s + 0.5) * bar_w))
            canvas.fill_rect(bx0, to_y(v), bx0 + bar_w - 1, y0, PALETTE[s % len(PALETTE)])
        if spec.labels:
            label = spec.labels[g]
            # Vertical space is tight, so group labels render stacked in
            # two staggered rows to avoid collisions.
            ly = y0 + 6 + (g % 2) * (GLYPH_H + 2)
            canvas.text(int(gx + 2), ly, label[:max(2, int(group_w) // 6)])
    legend_y = canvas.height - GLYPH_H - 2
    lx = x0
    for s, name in enumerate(names):
        canvas.fill_rect(lx, legend_y, lx + 8, legend_y + GLYPH_H, PALETTE[s % len(PALETTE)])
        canvas.text(lx + 11, legend_y, name)
        lx += 20 + text_width(name)


def _render_line_loss(canvas: Canvas, spec: PlotSpec) -> None:
    x0, y0, x1, y1 = _axes(canvas, 46, 30, 18, 10)
    all_points = [(float(e), float(v)) for vec in spec.series.values() for e, v in vec]
    max_epoch = max(e for e, _ in all_points)
    min_epoch = min(e for e, _ in all_points)
    top = nice_max(max(v for _, v in all_points))
    span_x = max(max_epoch - min_epoch, 1e-12)

    def to_xy(e: float, v: float) -> tuple[int, int]:
        px = x0 + (e - min_epoch) / span_x * (x1 - x0)
        py = y0 - (v / top) * (y0 - y1)
        return int(round(px)), int(round(py))

    canvas.text(2, y1 - 4, f"{top:g}")
    canvas.text(2, y0 - GLYPH_H // 2, "0")
    canvas.text(x0, y0 + 8, f"{min_epoch:g}")
    end_label = f"{max_epoch:g}"
    canvas.text(x1 - text_width(end_label), y0 + 8, end_label)
    for s, (name, vec) in enumerate(spec.series.items()):
        color = PALETTE[s % len(PALETTE)]
        pts = [to_xy(float(e), float(v)) for e, v in vec]
        for (ax, ay), (bx, by) in zip(pts, pts[1:]):
            canvas.line(ax, ay, bx, by, color)
        for px, py in pts:
            canvas.fill_rect(px - 1, py - 1, px + 2, py + 2, color)
        canvas.text(x0 + 6, y1 + 2 + s * (GLYPH_H + 2), name, color)
    canvas.line(x0, y0, x1, y0, GRAY)
