"""Static SVG plots and the report bundle written by the CLI.

The SVG writer is deliberately minimal: scatter and line charts with axes,
ticks and an optional horizontal reference line, as plain XML text.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .evalkit import write_detections, write_embeddings, write_stats_table

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=64, right=20, top=36, bottom=48)
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


class _Axes:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x0, self.x1 = self.x0 - 0.5, self.x1 + 0.5
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 0.5, self.y1 + 0.5
        self.px0, self.px1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.py0, self.py1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def x(self, v):
        return self.px0 + (np.asarray(v, dtype=float) - self.x0) / (self.x1 - self.x0) * (self.px1 - self.px0)

    def y(self, v):
        return self.py0 + (np.asarray(v, dtype=float) - self.y0) / (self.y1 - self.y0) * (self.py1 - self.py0)


def _limits(values, pad=0.05):
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return 0.0, 1.0
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo or 1.0
    return lo - pad * span, hi + pad * span


def _frame(ax: _Axes, title: str, xlabel: str, ylabel: str) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line class="axis" x1="{ax.px0}" y1="{ax.py0}" x2="{ax.px1}" y2="{ax.py0}" stroke="black"/>',
        f'<line class="axis" x1="{ax.px0}" y1="{ax.py0}" x2="{ax.px0}" y2="{ax.py1}" stroke="black"/>',
    ]
    for v in np.linspace(ax.x0, ax.x1, 6):
        px = float(ax.x(v))
        out.append(f'<line x1="{px:.1f}" y1="{ax.py0}" x2="{px:.1f}" y2="{ax.py0 + 4}" stroke="black"/>')
        out.append(f'<text x="{px:.1f}" y="{ax.py0 + 16}" text-anchor="middle">{v:.3g}</text>')
    for v in np.linspace(ax.y0, ax.y1, 6):
        py = float(ax.y(v))
        out.append(f'<line x1="{ax.px0 - 4}" y1="{py:.1f}" x2="{ax.px0}" y2="{py:.1f}" stroke="black"/>')
        out.append(f'<text x="{ax.px0 - 6}" y="{py + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{(ax.px0 + ax.px1) / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{(ax.py0 + ax.py1) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {(ax.py0 + ax.py1) / 2:.1f})">{escape(ylabel)}</text>')
    return out


def embedding_svg(rows, highlight=None) -> str:
    """Scatter of 2-D codes, one colour per cycle; ``highlight`` cells get a label."""
    ax = _Axes((0.0, 1.0), (0.0, 1.0))
    out = _frame(ax, "Startup encodings per cycle", "code x", "code y")
    cycles = sorted({(r["electrolyzer"], r["cycle"]) for r in rows})
    colour = {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(cycles)}
    highlight = set(highlight or ())
    for r in rows:
        px, py = float(ax.x(r["code_x"])), float(ax.y(r["code_y"]))
        col = colour[(r["electrolyzer"], r["cycle"])]
        out.append(f'<circle class="code" cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{col}">'
                   f'<title>{escape(str(r["cell"]))} cycle {r["cycle"]}</title></circle>')
        if r["cell"] in highlight:
            out.append(f'<text x="{px + 5:.2f}" y="{py - 5:.2f}">{escape(str(r["cell"]))}</text>')
    for i, c in enumerate(cycles[:20]):
        y = MARGIN["top"] + 12 * i
        out.append(f'<circle cx="{WIDTH - 90}" cy="{y}" r="3" fill="{colour[c]}"/>')
        out.append(f'<text x="{WIDTH - 82}" y="{y + 4}">{escape(f"{c[0]} c{c[1]}")}</text>')
    out.append("</svg>")
    return "\n".join(out)


def divergence_svg(series: dict, threshold: float | dict, fault_time: float | None = None) -> str:
    """Divergence (mV) against hours, one line per model, with horizontal threshold line(s).

    ``series`` maps a label to ``(minutes, divergence_mV)``. ``threshold`` is
    either one value or a mapping label -> value.
    """
    thresholds = threshold if isinstance(threshold, dict) else {"threshold": threshold}
    all_t = np.concatenate([np.asarray(t, dtype=float) for t, _ in series.values()]) if series else np.zeros(1)
    t_ref = float(fault_time) if fault_time is not None else float(np.nanmin(all_t))
    all_d = [np.asarray(d, dtype=float) for _, d in series.values()] + [np.array(list(thresholds.values()))]
    ax = _Axes(_limits((all_t - t_ref) / 60.0, 0.0), (0.0, _limits(np.concatenate(all_d))[1]))
    xlabel = "hours relative to fault" if fault_time is not None else "hours"
    out = _frame(ax, "Divergence between predicted and measured voltage", xlabel, "|error| [mV]")
    for i, (label, (t, d)) in enumerate(series.items()):
        hours = (np.asarray(t, dtype=float) - t_ref) / 60.0
        d = np.asarray(d, dtype=float)
        ok = np.isfinite(d)
        pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(ax.x(hours[ok]), ax.y(d[ok])))
        col = PALETTE[i % len(PALETTE)]
        out.append(f'<polyline class="series" data-label="{escape(label)}" fill="none" stroke="{col}" '
                   f'stroke-width="1" points="{pts}"/>')
        out.append(f'<text x="{ax.px0 + 8}" y="{MARGIN["top"] + 14 * (i + 1)}" fill="{col}">{escape(label)}</text>')
    for i, (label, value) in enumerate(thresholds.items()):
        py = float(ax.y(value))
        col = PALETTE[i % len(PALETTE)]
        out.append(f'<line class="threshold" data-label="{escape(label)}" data-value="{value:g}" '
                   f'x1="{ax.px0}" y1="{py:.2f}" x2="{ax.px1}" y2="{py:.2f}" stroke="{col}" '
                   f'stroke-dasharray="6,4"/>')
    out.append("</svg>")
    return "\n".join(out)


def emit_report(out_dir, inter: dict, intra: dict, detections, embeddings,
                divergence: dict | None = None, thresholds: dict | None = None,
                fault_time: float | None = None) -> list[Path]:
    """Write the CSV/JSON tables and SVG plots of one evaluation run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "inter_cycle.csv", out / "intra_cycle.csv", out / "detections.json",
               out / "embeddings.csv", out / "embedding.svg", out / "divergence.svg"]
    write_stats_table(inter, written[0])
    write_stats_table(intra, written[1])
    write_detections(detections, written[2])
    write_embeddings(embeddings, written[3])
    written[4].write_text(embedding_svg(embeddings))
    written[5].write_text(divergence_svg(divergence or {}, thresholds or {}, fault_time))
    return written
