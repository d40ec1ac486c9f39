"""Minimal deterministic SVG line charts for benchmark reports."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .bench import BenchmarkReport

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=190, top=30, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _series_name(row) -> str:
    parts = [row.strategy]
    if row.feature_subset:
        parts.append(f"[{row.feature_subset}]")
    if row.scheme:
        parts.append(row.scheme)
    if row.deployment not in ("permanent", "temporary"):
        parts.append(row.deployment)
    elif row.deployment == "temporary" and not row.scheme:
        parts.append("temporary")
    return " ".join(parts)


def series(report: BenchmarkReport, metric: str) -> dict[str, list[tuple[float, float]]]:
    """Mean value over seeds per (series, budget); unattainable rows are skipped."""
    acc: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in report.rows:
        if r.metric == metric and r.value is not None:
            acc[_series_name(r)][r.budget].append(r.value)
    return {name: [(float(b), float(np.mean(v))) for b, v in sorted(pts.items())]
            for name, pts in sorted(acc.items())}


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(round(v, 10)) for v in np.arange(start, hi + step * 1e-9, step)]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_svg(data: dict[str, list[tuple[float, float]]], title: str, xlabel: str, ylabel: str) -> str:
    pts = [p for line in data.values() for p in line]
    xs = [p[0] for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(ys)), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y1 = y0 + 1
    y1 *= 1.05
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>']
    left, bottom = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<line x1="{left}" y1="{bottom}" x2="{left + pw}" y2="{bottom}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{MARGIN["top"]}" x2="{left}" y2="{bottom}" stroke="black"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{bottom}" x2="{sx(t):.2f}" y2="{bottom + 4}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{bottom + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{left - 4}" y1="{sy(t):.2f}" x2="{left + pw}" y2="{sy(t):.2f}" '
                   f'stroke="#dddddd"/>')
        out.append(f'<text x="{left - 7}" y="{sy(t) + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>')

    for i, (name, line) in enumerate(data.items()):
        color = PALETTE[i % len(PALETTE)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in line)
        if len(line) > 1:
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in line:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{color}"/>')
        ly = MARGIN["top"] + 10 + 16 * i
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plots(report: BenchmarkReport, out_dir) -> list[Path]:
    """One chart per metric, named ``<experiment>_<metric>.svg``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    xlabel = "number of sensors" if report.experiment == "spatial" else "observations (segment-days)"
    written = []
    for metric in sorted({r.metric for r in report.rows}):
        path = out / f"{report.experiment}_{metric}.svg"
        path.write_text(render_svg(series(report, metric), f"{report.experiment}: {metric}", xlabel, metric))
        written.append(path)
    return written
