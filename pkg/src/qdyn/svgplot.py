"""Deterministic SVG line plots of CSV columns (fixed 800x500 viewport)."""

import csv
import math

__all__ = ["read_columns", "line_plot_svg", "emit_plot"]

WIDTH, HEIGHT = 800, 500
_MARGIN = dict(left=70, right=150, top=30, bottom=50)
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def read_columns(path):
    """Read a headered CSV into ``{name: [float, ...]}`` preserving column order."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    cols = {name: [] for name in header}
    for row in body:
        for name, cell in zip(header, row):
            cols[name].append(float(cell))
    return cols


def _fmt(v):
    return f"{v:.2f}"


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def line_plot_svg(x, series, *, x_label="", title=""):
    """Return SVG text for ``series`` (``{label: ys}``) against ``x``."""
    if not x or not series or any(len(ys) != len(x) for ys in series.values()):
        raise ValueError("need non-empty, equal-length data to plot")
    ys_all = [y for ys in series.values() for y in ys if math.isfinite(y)]
    if not ys_all:
        raise ValueError("no finite values to plot")
    x0, x1 = min(x), max(x)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    left, top = _MARGIN["left"], _MARGIN["top"]
    pw = WIDTH - left - _MARGIN["right"]
    ph = HEIGHT - top - _MARGIN["bottom"]

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for tx in _ticks(x0, x1):
        px = _fmt(sx(tx))
        out.append(f'<line x1="{px}" y1="{top + ph}" x2="{px}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px}" y="{top + ph + 20}" font-size="12" text-anchor="middle">{tx:g}</text>')
    for ty in _ticks(y0, y1):
        py = _fmt(sy(ty))
        out.append(f'<line x1="{left - 5}" y1="{py}" x2="{left}" y2="{py}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py}" font-size="12" text-anchor="end" '
                   f'dominant-baseline="middle">{ty:g}</text>')
    for i, (label, ys) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, ys) if math.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 15 + 20 * i
        out.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 40}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 45}" y="{ly}" font-size="12" '
                   f'dominant-baseline="middle">{_escape(label)}</text>')
    if x_label:
        out.append(f'<text x="{left + pw / 2:.2f}" y="{HEIGHT - 10}" font-size="13" '
                   f'text-anchor="middle">{_escape(x_label)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2:.2f}" y="20" font-size="14" '
                   f'text-anchor="middle">{_escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_plot(csv_path, columns, svg_path, *, x_column=None, title=""):
    """Plot ``columns`` of ``csv_path`` against its first (or ``x_column``) column.

    Raises ``KeyError`` for a missing column and ``ValueError`` for empty data;
    no file is written in either case.
    """
    cols = read_columns(csv_path)
    names = list(cols)
    x_name = x_column or names[0]
    for name in [x_name, *columns]:
        if name not in cols:
            raise KeyError(f"column {name!r} not in {csv_path} (have {names})")
    svg = line_plot_svg(cols[x_name], {c: cols[c] for c in columns}, x_label=x_name, title=title)
    with open(svg_path, "w", newline="\n") as fh:
        fh.write(svg)
    return svg_path
