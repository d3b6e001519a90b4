"""Static SVG line charts written as plain text (no plotting dependency)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

from .exponents import MomentSeries, mu_formula, reference_lines

WIDTH, HEIGHT, PAD = 640, 420, 60
COLORS = ("#b03a2e", "#1f618d", "#7d3c98", "#117a65")


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def moment_chart(series: MomentSeries, beta: float) -> str:
    """ln E chi_n^2 against ln n, with reference lines of slope 2 nu through the first point.

    Reference lines carry their slope in a ``data-slope`` attribute.
    """
    n, m, _ = series.column("chi2")
    ok = [(math.log(a), math.log(b)) for a, b in zip(n, m) if a > 0 and b > 0]
    refs = [(f"2 x {label} = {2 * v:.4g}", 2 * v) for label, v in reference_lines(series.d)]
    if beta == 0 and float(mu_formula(series.d)) != 0.5:
        refs.append(("2 x 1/2 (simple walk) = 1", 1.0))
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
             f'viewBox="0 0 {WIDTH} {HEIGHT}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
             f'font-size="15">{escape(f"d={series.d}, beta={beta}: ln E chi^2 vs ln n")}</text>']
    if not ok:
        parts.append("</svg>")
        return "\n".join(parts) + "\n"
    xs = [p[0] for p in ok]
    ys = [p[1] for p in ok]
    x0, y0 = xs[0], ys[0]
    x_lo, x_hi = min(xs), max(xs)
    ref_ends = [y0 + s * (x_hi - x0) for _, s in refs]
    y_lo, y_hi = min(ys + ref_ends), max(ys + ref_ends)
    sx = _scale(x_lo, x_hi, PAD, WIDTH - PAD)
    sy = _scale(y_lo, y_hi, HEIGHT - PAD, PAD)
    parts.append(f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" '
                 'stroke="black"/>')
    parts.append(f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>')
    parts.append(f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle" '
                 'font-family="sans-serif" font-size="12">ln n</text>')
    parts.append(f'<text x="18" y="{HEIGHT / 2:.1f}" font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 18 {HEIGHT / 2:.1f})">ln E chi^2</text>')
    for i, ((label, slope), y_end) in enumerate(zip(refs, ref_ends)):
        color = COLORS[(i + 1) % len(COLORS)]
        parts.append(f'<line class="reference" data-slope="{slope:.6f}" x1="{sx(x0):.2f}" '
                     f'y1="{sy(y0):.2f}" x2="{sx(x_hi):.2f}" y2="{sy(y_end):.2f}" '
                     f'stroke="{color}" stroke-dasharray="6 4"/>')
        parts.append(f'<text x="{WIDTH - PAD - 4}" y="{PAD + 16 * (i + 1)}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11" fill="{color}">'
                     f'{escape(label)}</text>')
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in ok)
    parts.append(f'<polyline class="data" points="{pts}" fill="none" stroke="{COLORS[0]}"/>')
    for x, y in ok:
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{COLORS[0]}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
