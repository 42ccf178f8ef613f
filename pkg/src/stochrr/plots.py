"""Minimal SVG line plots rendered from already computed columns."""
from xml.sax.saxutils import escape

import numpy as np

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
_W, _H = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 20, 40, 50


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _fmt(v):
    return f"{v:.3g}"


def line_plot(path, series, title="", xlabel="", ylabel="", logx=False, logy=False):
    """Write an SVG with one polyline per ``(x, y, label)`` entry of ``series``.

    Non-finite points (and non-positive ones on log axes) are dropped.
    """
    cleaned = []
    for x, y, label in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        x, y = x[ok], y[ok]
        cleaned.append((np.log10(x) if logx else x, np.log10(y) if logy else y, label))
    xs = np.concatenate([c[0] for c in cleaned]) if cleaned else np.array([0.0])
    ys = np.concatenate([c[1] for c in cleaned]) if cleaned else np.array([0.0])
    if xs.size == 0:
        xs = ys = np.array([0.0])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1, y_hi + 1
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def px(v):
        return _LEFT + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return _TOP + ph - (v - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_LEFT}" y="{_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{_W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{_LEFT + pw / 2}" y="{_H - 10}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="16" y="{_TOP + ph / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {_TOP + ph / 2})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(x_lo, x_hi):
        label = _fmt(10**t) if logx else _fmt(t)
        out.append(f'<text x="{px(t):.1f}" y="{_TOP + ph + 18}" text-anchor="middle" font-size="11">{label}</text>')
    for t in _ticks(y_lo, y_hi):
        label = _fmt(10**t) if logy else _fmt(t)
        out.append(f'<text x="{_LEFT - 6}" y="{py(t) + 4:.1f}" text-anchor="end" font-size="11">{label}</text>')
    for i, (x, y, label) in enumerate(cleaned):
        colour = _COLOURS[i % len(_COLOURS)]
        if x.size:
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        ly = _TOP + 16 + 16 * i
        out.append(f'<text x="{_LEFT + pw - 8}" y="{ly}" text-anchor="end" font-size="12" fill="{colour}">'
                   f"{escape(str(label))}</text>")
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")

