"""Minimal deterministic SVG convergence plots (log-scale y axis)."""

import logging
import math
from xml.sax.saxutils import escape

log = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=170, top=30, bottom=45)
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"]


def _fmt(v):
    return f"{v:.2f}"


def emit_plot(traces, bound_lines, path, column="rel_error", title=""):
    """Write an SVG with one polyline per trace and a dashed line per bound.

    Non-positive values cannot be drawn on a log axis and are skipped.  Returns
    the number of polylines written.
    """
    series = []
    for tr in traces:
        pts = [(r.index, getattr(r, column)) for r in tr.records]
        pts = [(x, y) for x, y in pts if y > 0 and math.isfinite(y)]
        if not pts:
            log.warning("trace %s has nothing to plot; skipped", tr.label)
            continue
        series.append((tr.label, pts))
    bounds = [(lab, v) for lab, v in bound_lines if v > 0 and math.isfinite(v)]
    ys = [y for _, pts in series for _, y in pts] + [v for _, v in bounds]
    xs = [x for _, pts in series for x, _ in pts]
    lo = math.floor(math.log10(min(ys))) if ys else -16
    hi = math.ceil(math.log10(max(ys))) if ys else 0
    if hi == lo:
        hi += 1
    xmax = max(xs) if xs else 1
    xmax = max(xmax, 1)
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + pw * x / xmax

    def sy(y):
        return MARGIN["top"] + ph * (hi - math.log10(y)) / (hi - lo)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
           'fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.0f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    step = max(1, (hi - lo) // 8)
    for e in range(lo, hi + 1, step):
        y = sy(10.0 ** e)
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11">1e{e}</text>')
    for k in range(5):
        x = xmax * k / 4
        out.append(f'<text x="{_fmt(sx(x))}" y="{HEIGHT - MARGIN["bottom"] + 16}" text-anchor="middle" '
                   f'font-size="11">{x:g}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.0f}" y="{HEIGHT - 8}" text-anchor="middle" '
               f'font-size="12">iteration</text>')
    out.append(f'<text x="14" y="{MARGIN["top"] + ph / 2:.0f}" font-size="12" '
               f'transform="rotate(-90 14 {MARGIN["top"] + ph / 2:.0f})" text-anchor="middle">{escape(column)}</text>')
    legend_y = MARGIN["top"] + 10
    for i, (label, pts) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{WIDTH - MARGIN["right"] + 8}" y="{legend_y}" font-size="11" fill="{color}">'
                   f'{escape(label)}</text>')
        legend_y += 15
    for label, v in bounds:
        y = _fmt(sy(v))
        out.append(f'<line x1="{MARGIN["left"]}" y1="{y}" x2="{MARGIN["left"] + pw}" y2="{y}" '
                   'stroke="gray" stroke-dasharray="6,4"/>')
        out.append(f'<text x="{WIDTH - MARGIN["right"] + 8}" y="{legend_y}" font-size="11" fill="gray">'
                   f'{escape(label)} = {v:.2e}</text>')
        legend_y += 15
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return len(series)
