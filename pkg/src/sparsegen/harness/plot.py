"""Self-contained SVG plots of reconstruction error against measurement count.

One polyline per algorithm through the per-``m`` mean of the chosen metric,
with whiskers spanning the minimum and maximum over images.  Each marker
carries ``data-algorithm``, ``data-m``, ``data-mean``, ``data-min`` and
``data-max`` attributes holding the plotted values at full precision.
"""

from __future__ import annotations

from collections import defaultdict
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .experiment import read_results_csv

__all__ = ["METRICS", "aggregate", "render_svg", "plot"]

METRICS = {"l1": "l1_err", "l2": "l2_err", "linf": "linf_err", "measurement": "measurement_err"}
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 60


def aggregate(rows, metric: str = "l2") -> dict:
    """``{algorithm: [(m, mean, min, max), ...]}`` with ``m`` ascending."""
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}")
    col = METRICS[metric]
    groups = defaultdict(list)
    for r in rows:
        groups[(r["algorithm"], int(r["m"]))].append(float(r[col]))
    if not groups:
        raise ValueError("no result rows to plot")
    out = defaultdict(list)
    for (alg, m), vals in sorted(groups.items()):
        v = np.asarray(vals)
        out[alg].append((m, float(np.mean(v)), float(np.min(v)), float(np.max(v))))
    return dict(out)


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def render_svg(series: dict, metric: str = "l2", title: str | None = None) -> str:
    ms = sorted({m for pts in series.values() for m, *_ in pts})
    y_hi = max(mx for pts in series.values() for *_, mx in pts)
    y_hi = y_hi * 1.05 if y_hi > 0 else 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    m_lo, m_hi = ms[0], ms[-1]

    def sx(m):
        return LEFT + (pw / 2 if m_hi == m_lo else (m - m_lo) / (m_hi - m_lo) * pw)

    def sy(v):
        return TOP + ph - v / y_hi * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    label = title or f"{metric} error vs measurements"
    out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(label)}</text>')
    # axes
    out.append(f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>')
    out.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>')
    for m in ms:
        x = sx(m)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{m}</text>')
    for v in _ticks(0.0, y_hi):
        y = sy(v)
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">measurements m</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.1f})">mean {escape(metric)} error</text>')

    for i, (alg, pts) in enumerate(sorted(series.items())):
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<g class="series" data-algorithm={quoteattr(alg)}>')
        coords = " ".join(f"{sx(m):.2f},{sy(mean):.2f}" for m, mean, _, _ in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        for m, mean, lo, hi in pts:
            x = sx(m)
            out.append(f'<line class="whisker" x1="{x:.2f}" y1="{sy(lo):.2f}" x2="{x:.2f}" y2="{sy(hi):.2f}" '
                       f'stroke="{color}"/>')
            out.append(f'<circle class="point" cx="{x:.2f}" cy="{sy(mean):.2f}" r="3.5" fill="{color}" '
                       f'data-algorithm={quoteattr(alg)} data-m="{m}" data-mean="{mean!r}" '
                       f'data-min="{lo!r}" data-max="{hi!r}">'
                       f'<title>{escape(alg)} m={m} mean={mean!r}</title></circle>')
        out.append("</g>")
        ly = TOP + 10 + 20 * i
        lx = LEFT + pw + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(alg)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot(csv_path, metric: str, out_svg, title: str | None = None) -> dict:
    """Render ``csv_path`` to ``out_svg``; returns the aggregated series."""
    series = aggregate(read_results_csv(csv_path), metric)
    with open(out_svg, "w", newline="\n") as f:
        f.write(render_svg(series, metric, title))
    return series
