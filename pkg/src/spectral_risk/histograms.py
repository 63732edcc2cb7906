"""Deterministic standalone SVG histograms (no plotting library involved)."""
from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Mapping
from xml.sax.saxutils import escape

import numpy as np

N_BINS = 20
WIDTH, HEIGHT = 480, 300
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 50, 15, 30, 40


def histogram(values, bins: int = N_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-count binning; a constant column gets a unit-wide range centred on its value."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot histogram an empty column")
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(arr, bins=bins, range=(lo, hi))
    return counts, edges


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def render_svg(name: str, counts: np.ndarray, edges: np.ndarray,
               markers: Mapping[str, float] | None = None) -> str:
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B
    lo, hi = float(edges[0]), float(edges[-1])
    top = max(int(counts.max()), 1)

    def sx(x):
        return MARGIN_L + (x - lo) / (hi - lo) * plot_w

    def sy(c):
        return MARGIN_T + plot_h - c / top * plot_h

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<title>{escape(name)}</title>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="18" text-anchor="middle" font-family="sans-serif" '
        f'font-size="13">{escape(name)}</text>',
    ]
    for i, c in enumerate(counts):
        x0, x1 = sx(edges[i]), sx(edges[i + 1])
        y = sy(int(c))
        out.append(f'<rect class="bar" x="{_fmt(x0)}" y="{_fmt(y)}" width="{_fmt(x1 - x0)}" '
                   f'height="{_fmt(MARGIN_T + plot_h - y)}" fill="#4c72b0" stroke="white" '
                   f'stroke-width="0.5"><title>{int(c)}</title></rect>')
    base = MARGIN_T + plot_h
    out.append(f'<line x1="{MARGIN_L}" y1="{base}" x2="{MARGIN_L + plot_w}" y2="{base}" stroke="black"/>')
    out.append(f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{base}" stroke="black"/>')
    for x, anchor in ((lo, "start"), (hi, "end")):
        out.append(f'<text x="{_fmt(sx(x))}" y="{base + 15}" text-anchor="{anchor}" '
                   f'font-family="sans-serif" font-size="10">{x:.4g}</text>')
    out.append(f'<text x="{MARGIN_L - 5}" y="{MARGIN_T + 4}" text-anchor="end" '
               f'font-family="sans-serif" font-size="10">{top}</text>')
    for label, value in (markers or {}).items():
        x = sx(min(max(value, lo), hi))
        out.append(f'<line class="threshold" x1="{_fmt(x)}" y1="{MARGIN_T}" x2="{_fmt(x)}" y2="{base}" '
                   f'stroke="#c44e52" stroke-width="1.5" stroke-dasharray="4,3"/>')
        out.append(f'<text x="{_fmt(x + 3)}" y="{MARGIN_T + 10}" font-family="sans-serif" '
                   f'font-size="10" fill="#c44e52">{escape(label)} = {value:.4f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "column"


def export_histograms(columns: Mapping[str, np.ndarray], path,
                      markers: Mapping[str, Mapping[str, float]] | None = None) -> list[Path]:
    """Write one SVG per column plus ``histograms.csv`` of bin edges and counts.

    ``markers`` maps a column name to labelled vertical lines, e.g. the mean
    and mean-plus-std tail thresholds of a similarity distribution.
    """
    if not columns:
        raise ValueError("no columns to plot")
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    markers = markers or {}
    written = []
    rows = []
    for name, values in columns.items():
        counts, edges = histogram(values)
        svg_path = out_dir / f"{_slug(name)}.svg"
        svg_path.write_text(render_svg(name, counts, edges, markers.get(name)), encoding="utf-8")
        written.append(svg_path)
        rows.extend((name, i, f"{edges[i]:.8f}", f"{edges[i + 1]:.8f}", int(c)) for i, c in enumerate(counts))
    csv_path = out_dir / "histograms.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("variable", "bin", "left_edge", "right_edge", "count"))
        writer.writerows(rows)
    written.append(csv_path)
    return written
