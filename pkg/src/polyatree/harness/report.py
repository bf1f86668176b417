"""Report files: rows CSV, runtime sidecar, summary JSON and an SVG chart.

The rows CSV holds only seeded quantities, so identical configs give
byte-identical files; wall-clock times go to the sidecar.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from statistics import median

from .config import CSV_HEADER, ExperimentConfig, ReportRow


def rows_to_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def runtimes_to_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "density", "n", "seed", "runtime_ms"])
    seen = set()
    for r in rows:
        if r.sort_key not in seen:
            seen.add(r.sort_key)
            w.writerow([r.kind, r.density, r.n, r.seed, f"{r.runtime_ms:.3f}"])
    return buf.getvalue()


def read_rows(path) -> list[ReportRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [ReportRow(d["kind"], d["density"], int(d["n"]), int(d["seed"]), d["statistic"], float(d["value"]))
                for d in reader]


def svg_chart(rows: list[ReportRow], statistics: list[str], title: str,
              width: int = 640, height: int = 400) -> str:
    """Median of each statistic against n, log-scaled x axis."""
    series = {}
    for s in statistics:
        per = {}
        for r in rows:
            if r.statistic == s:
                per.setdefault(r.n, []).append(r.value)
        if per:
            series[s] = sorted((n, median(v)) for n, v in per.items())
    pad = 60
    ns = [n for pts in series.values() for n, _ in pts]
    ys = [y for pts in series.values() for _, y in pts if math.isfinite(y)]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" '
           f'font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2}" y="20" text-anchor="middle">{title}</text>']
    if not ns or not ys:
        out.append("</svg>")
        return "\n".join(out) + "\n"
    x0, x1 = math.log10(min(ns)), math.log10(max(ns))
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    sx = lambda n: pad + (math.log10(n) - x0) / (x1 - x0) * (width - 2 * pad)
    sy = lambda y: height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
    out.append(f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>')
    out.append(f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>')
    for n in sorted(set(ns)):
        out.append(f'<text x="{sx(n):.1f}" y="{height - pad + 18}" text-anchor="middle">{n}</text>')
    for y in (y0, (y0 + y1) / 2, y1):
        out.append(f'<text x="{pad - 6}" y="{sy(y):.1f}" text-anchor="end">{y:.3g}</text>')
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    for i, (s, pts) in enumerate(series.items()):
        c = colours[i % len(colours)]
        path = " ".join(f"{sx(n):.1f},{sy(y):.1f}" for n, y in pts if math.isfinite(y))
        out.append(f'<polyline points="{path}" fill="none" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{width - pad + 4}" y="{pad + 16 * i}" fill="{c}">{s}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


_PLOTTED = {
    "entropy-convergence": ["abs_error"],
    "tv-convergence": ["tv", "expected_kl"],
    "impact-level": ["impact_level", "lower_bound", "spacing_bound"],
    "spacing-law": ["n2_min_spacing"],
    "beta-moments": [],
}


def write_report(cfg: ExperimentConfig, rows: list[ReportRow], summary: dict, out_dir=None) -> dict[str, Path]:
    """Write ``<kind>-<density>.csv``, ``.summary.json``, ``.runtime.csv`` and optionally ``.svg``."""
    out_dir = Path(out_dir) if out_dir is not None else cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.kind}-{cfg.density}" if cfg.kind != "beta-moments" else cfg.kind
    paths = {
        "rows": out_dir / f"{stem}.csv",
        "summary": out_dir / f"{stem}.summary.json",
        "runtime": out_dir / f"{stem}.runtime.csv",
    }
    paths["rows"].write_text(rows_to_csv(rows))
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    paths["runtime"].write_text(runtimes_to_csv(rows))
    if cfg.plot and _PLOTTED[cfg.kind]:
        paths["plot"] = out_dir / f"{stem}.svg"
        paths["plot"].write_text(svg_chart(rows, _PLOTTED[cfg.kind], f"{cfg.kind}: {cfg.density}"))
    return paths
