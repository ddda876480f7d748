"""Dependency-free SVG charts with byte-stable output.

Numbers are printed with fixed precision and series are drawn in a fixed
order, so identical inputs give identical files.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .harness import RESULTS_HEADER, SUMMARY_HEADER, ResultRow, SummaryRow, aggregate

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
ALGO_ORDER = ("OPEN", "ProWLS", "WIS", "SWIS", "NaiveAR")


class PlotError(ValueError):
    pass


def _n(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _ticks(lo: float, hi: float, k: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo] if math.isfinite(lo) else []
    raw = (hi - lo) / k
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out, v = [], start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def _label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e5 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.6g}"


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    err: Sequence[float] | None = None
    style: str = "line"          # line | scatter
    color: str = ""
    dashed: bool = False


@dataclass
class Panel:
    title: str
    xlabel: str = ""
    ylabel: str = ""
    series: list[Series] = field(default_factory=list)
    vlines: list[float] = field(default_factory=list)

    def bounds(self) -> tuple[float, float, float, float]:
        xs, ys = [], []
        for s in self.series:
            e = s.err if s.err is not None else [0.0] * len(s.y)
            for x, y, d in zip(s.x, s.y, e):
                if math.isfinite(x) and math.isfinite(y):
                    d = d if math.isfinite(d) else 0.0
                    xs.append(x)
                    ys.extend((y - d, y + d))
        xs.extend(self.vlines)
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            pad = abs(y0) * 0.1 or 1.0
            y0, y1 = y0 - pad, y1 + pad
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad


def _panel_svg(panel: Panel, ox: float, oy: float, w: float, h: float) -> list[str]:
    left, right, top, bottom = 70.0, 120.0, 28.0, 42.0
    pw, ph = w - left - right, h - top - bottom
    x0, x1, y0, y1 = panel.bounds()

    def sx(x: float) -> float:
        return ox + left + (x - x0) / (x1 - x0) * pw

    def sy(y: float) -> float:
        return oy + top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<text x="{_n(ox + left + pw / 2)}" y="{_n(oy + 18)}" text-anchor="middle" '
           f'font-size="14">{escape(panel.title)}</text>',
           f'<rect x="{_n(ox + left)}" y="{_n(oy + top)}" width="{_n(pw)}" height="{_n(ph)}" '
           f'fill="none" stroke="#333"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_n(sx(t))}" y1="{_n(oy + top + ph)}" x2="{_n(sx(t))}" '
                   f'y2="{_n(oy + top + ph + 4)}" stroke="#333"/>')
        out.append(f'<text x="{_n(sx(t))}" y="{_n(oy + top + ph + 16)}" text-anchor="middle" '
                   f'font-size="10">{_label(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{_n(ox + left - 4)}" y1="{_n(sy(t))}" x2="{_n(ox + left)}" '
                   f'y2="{_n(sy(t))}" stroke="#333"/>')
        out.append(f'<text x="{_n(ox + left - 6)}" y="{_n(sy(t) + 3)}" text-anchor="end" '
                   f'font-size="10">{_label(t)}</text>')
    if panel.xlabel:
        out.append(f'<text x="{_n(ox + left + pw / 2)}" y="{_n(oy + h - 6)}" text-anchor="middle" '
                   f'font-size="11">{escape(panel.xlabel)}</text>')
    if panel.ylabel:
        cx, cy = ox + 14, oy + top + ph / 2
        out.append(f'<text x="{_n(cx)}" y="{_n(cy)}" text-anchor="middle" font-size="11" '
                   f'transform="rotate(-90 {_n(cx)} {_n(cy)})">{escape(panel.ylabel)}</text>')
    for v in panel.vlines:
        out.append(f'<line x1="{_n(sx(v))}" y1="{_n(oy + top)}" x2="{_n(sx(v))}" y2="{_n(oy + top + ph)}" '
                   f'stroke="#777" stroke-dasharray="4 3"/>')
    for k, s in enumerate(panel.series):
        color = s.color or PALETTE[k % len(PALETTE)]
        pts = [(x, y) for x, y in zip(s.x, s.y) if math.isfinite(x) and math.isfinite(y)]
        if s.style == "scatter":
            out.extend(f'<circle cx="{_n(sx(x))}" cy="{_n(sy(y))}" r="1.5" fill="{color}" fill-opacity="0.5"/>'
                       for x, y in pts)
        else:
            if len(pts) > 1:
                path = " ".join(f"{_n(sx(x))},{_n(sy(y))}" for x, y in pts)
                dash = ' stroke-dasharray="6 3"' if s.dashed else ""
                out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
            if len(pts) <= 30:
                out.extend(f'<circle cx="{_n(sx(x))}" cy="{_n(sy(y))}" r="3" fill="{color}"/>' for x, y in pts)
        if s.err is not None:
            for x, y, d in zip(s.x, s.y, s.err):
                if math.isfinite(x) and math.isfinite(y) and math.isfinite(d) and d > 0:
                    out.append(f'<line x1="{_n(sx(x))}" y1="{_n(sy(y - d))}" x2="{_n(sx(x))}" '
                               f'y2="{_n(sy(y + d))}" stroke="{color}"/>')
        ly = oy + top + 12 + 16 * k
        lx = ox + left + pw + 10
        out.append(f'<line x1="{_n(lx)}" y1="{_n(ly - 4)}" x2="{_n(lx + 18)}" y2="{_n(ly - 4)}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_n(lx + 22)}" y="{_n(ly)}" font-size="10">{escape(s.label)}</text>')
    return out


def render(panels: Sequence[Panel], width: float = 640.0, panel_height: float = 300.0) -> str:
    """Stack ``panels`` vertically into one SVG document."""
    height = panel_height * max(len(panels), 1)
    body: list[str] = []
    for k, panel in enumerate(panels):
        body.extend(_panel_svg(panel, 0.0, k * panel_height, width, panel_height))
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(width)}" height="{_n(height)}" '
            f'viewBox="0 0 {_n(width)} {_n(height)}" font-family="sans-serif">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


# ------------------------------------------------------------- sweep plots

def read_rows(path: str | Path) -> tuple[list[ResultRow], list[SummaryRow]]:
    """Parse a results.csv or summary.csv file; exactly one of the lists is filled."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PlotError(f"{path}:1: empty file (expected a CSV header)")
        kind = "results" if header[:len(RESULTS_HEADER)] == RESULTS_HEADER else \
            "summary" if header[:len(SUMMARY_HEADER)] == SUMMARY_HEADER else None
        if kind is None:
            raise PlotError(f"{path}:1: header {header!r} matches neither results nor summary schema")
        width = len(header)
        results, summary = [], []
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != width:
                raise PlotError(f"{path}:{line}: expected {width} fields, got {len(rec)}")
            try:
                variant = rec[width - 1] if width > (len(RESULTS_HEADER) if kind == "results"
                                                     else len(SUMMARY_HEADER)) else ""
                if kind == "results":
                    results.append(ResultRow(rec[0], float(rec[1]), rec[2], int(rec[3]), float(rec[4]),
                                             float(rec[5]), float(rec[6]), rec[7], variant))
                else:
                    summary.append(SummaryRow(rec[0], float(rec[1]), rec[2], *map(float, rec[3:7]),
                                              int(rec[7]), int(rec[8]), variant))
            except ValueError as exc:
                raise PlotError(f"{path}:{line}: {exc}") from None
    return results, summary


def _algo_key(name: str) -> tuple[int, str]:
    return (ALGO_ORDER.index(name) if name in ALGO_ORDER else len(ALGO_ORDER), name)


def sweep_panels(summary: Iterable[SummaryRow], domain: str) -> list[Panel]:
    cells = [s for s in summary if s.domain == domain]
    labels = sorted({(s.algorithm, s.variant) for s in cells}, key=lambda k: (_algo_key(k[0]), k[1]))
    bias = Panel(f"{domain}: absolute bias", "speed", "|bias|")
    mse = Panel(f"{domain}: mean squared error", "speed", "MSE")
    for algo, variant in labels:
        pts = sorted((s for s in cells if (s.algorithm, s.variant) == (algo, variant)), key=lambda s: s.speed)
        name = f"{algo} {variant}".strip()
        xs = [s.speed for s in pts]
        bias.series.append(Series(name, xs, [s.abs_bias for s in pts], [s.se_bias for s in pts]))
        mse.series.append(Series(name, xs, [s.mse for s in pts], [s.se_mse for s in pts]))
    for panel in (bias, mse):
        for k, s in enumerate(panel.series):
            s.color = PALETTE[k % len(PALETTE)]
    return [bias, mse]


def plot_results(csv_path: str | Path, out_dir: str | Path) -> list[Path]:
    """One SVG per domain (bias panel above MSE panel); an empty CSV gives empty axes."""
    results, summary = read_rows(csv_path)
    if results:
        summary = aggregate(results)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    domains = sorted({s.domain for s in summary})
    written = []
    if not domains:
        path = out / "empty.svg"
        path.write_text(render([Panel("absolute bias", "speed", "|bias|"), Panel("mean squared error", "speed", "MSE")]))
        return [path]
    for domain in domains:
        path = out / f"{domain}.svg"
        path.write_text(render(sweep_panels(summary, domain)))
        written.append(path)
    return written


def line_panel(title: str, x: np.ndarray, y: np.ndarray, label: str, **kw) -> Panel:
    return Panel(title, kw.pop("xlabel", "episode"), kw.pop("ylabel", ""),
                 [Series(label, list(map(float, x)), list(map(float, y)), **kw)])
