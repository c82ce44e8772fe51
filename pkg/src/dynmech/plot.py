"""Self-contained SVG line charts of normalized utility per combo."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .experiment import COMBOS, summarize

Y_MIN, Y_MAX = 0.0, 1.05
WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=60, right=170, top=30, bottom=50)
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")
AXIS_LABELS = {"eta": "eta", "horizon": "T", "state_action_size": "|S| = |A|"}


def _clip(y: float) -> float:
    return min(max(y, Y_MIN), Y_MAX)


def render_svg(rows, x_axis: str, combos=None, normalize_after_mean: bool = False, title: str | None = None) -> str:
    """SVG text for the chart; raises ``ValueError`` when nothing is selected."""
    rows = [r for r in rows if not r.failed and (combos is None or r.combo in combos)]
    if not rows:
        raise ValueError("no rows to plot for the selected combos")
    summary = summarize(rows, x_axis, normalize_after_mean)
    order = [c for c in COMBOS if c in summary] + sorted(c for c in summary if c not in COMBOS)
    xs = sorted({x for pts in summary.values() for x in pts})
    x_lo, x_hi = float(xs[0]), float(xs[-1])
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0

    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - left - MARGIN["right"]
    ph = HEIGHT - top - MARGIN["bottom"]

    def px(x):
        return left + (float(x) - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return top + (Y_MAX - _clip(y)) / (Y_MAX - Y_MIN) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{top - 10}" text-anchor="middle">{escape(title)}</text>')
    for k in range(0, 11, 2):
        y = k / 10
        out.append(f'<line x1="{left - 4}" y1="{py(y):.1f}" x2="{left}" y2="{py(y):.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 7}" y="{py(y) + 4:.1f}" text-anchor="end">{y:g}</text>')
    for x in xs:
        out.append(f'<line x1="{px(x):.1f}" y1="{top + ph}" x2="{px(x):.1f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(x):.1f}" y="{top + ph + 18}" text-anchor="middle">{x:g}</text>')
    out.append(
        f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">'
        f"{escape(AXIS_LABELS.get(x_axis, x_axis))}</text>"
    )
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">normalized utility</text>'
    )

    for n, combo in enumerate(order):
        color = PALETTE[n % len(PALETTE)]
        pts = sorted(summary[combo].items())
        out.append(f'<g class="series" data-combo="{escape(combo)}" stroke="{color}" fill="{color}">')
        if len(pts) > 1:
            path = " ".join(f"{px(x):.1f},{py(p.mean):.1f}" for x, p in pts)
            out.append(f'<polyline points="{path}" fill="none" stroke-width="2"/>')
        for x, p in pts:
            cx = px(x)
            out.append(f'<line x1="{cx:.1f}" y1="{py(p.low):.1f}" x2="{cx:.1f}" y2="{py(p.high):.1f}" stroke-width="1"/>')
            for yy in (p.low, p.high):
                out.append(f'<line x1="{cx - 4:.1f}" y1="{py(yy):.1f}" x2="{cx + 4:.1f}" y2="{py(yy):.1f}" stroke-width="1"/>')
            out.append(f'<circle cx="{cx:.1f}" cy="{py(p.mean):.1f}" r="3"/>')
        out.append("</g>")
        ly = top + 14 + 18 * n
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{lx + 26}" y="{ly}">{escape(combo)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(rows, x_axis: str, path, combos=None, normalize_after_mean: bool = False, title: str | None = None) -> None:
    svg = render_svg(rows, x_axis, combos, normalize_after_mean, title)
    path = Path(path)
    try:
        path.write_text(svg)
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc}") from exc
