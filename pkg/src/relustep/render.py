"""Deterministic SVG renderings of 2D fields and break lines."""

import numpy as np

from relustep.io import Breaklines, GridField, fmt

SIZE = 512
FIRST_STROKE = "#1f77b4"
SECOND_STROKE = "#d62728"


def _header(w, h):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
            f'viewBox="0 0 {w} {h}">']


def _n(x):
    return format(float(x), ".6g")


def _field_svg(field):
    nx, ny = field.resolution
    cw = SIZE / nx
    ch = SIZE / ny
    out = _header(SIZE, SIZE)
    g = field.grid()
    finite = g[np.isfinite(g)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    level = np.clip(np.rint(255 * (g - lo) / span), 0, 255)
    level = np.where(np.isfinite(level), level, 0).astype(int)
    out.append(f"<!-- min {fmt(lo)} max {fmt(hi)} -->")
    for j in range(ny):
        row = level[j]
        y = SIZE - (j + 1) * ch           # row 0 is the bottom of the box
        i = 0
        while i < nx:
            k = i
            while k + 1 < nx and row[k + 1] == row[i]:
                k += 1
            v = row[i]
            out.append(f'<rect x="{_n(i * cw)}" y="{_n(y)}" width="{_n((k - i + 1) * cw)}" '
                       f'height="{_n(ch)}" fill="rgb({v},{v},{v})"/>')
            i = k + 1
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _breaklines_svg(bl):
    box = np.asarray(bl.box, dtype=float)
    if box.shape != (2, 2):
        raise ValueError("break lines can only be rendered in 2D")
    (x0, x1), (y0, y1) = box

    def pt(p):
        return (f"{_n((p[0] - x0) / (x1 - x0) * SIZE)},"
                f"{_n(SIZE - (p[1] - y0) / (y1 - y0) * SIZE)}")

    out = _header(SIZE, SIZE)
    out.append(f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>')
    for s in bl.first_layer:
        if s is None:
            continue
        out.append(f'<polyline points="{pt(s[0])} {pt(s[1])}" fill="none" '
                   f'stroke="{FIRST_STROKE}" stroke-width="1" stroke-dasharray="4,3"/>')
    for segs in bl.second_layer:
        for s in segs:
            out.append(f'<polyline points="{pt(s.start)} {pt(s.end)}" fill="none" '
                       f'stroke="{SECOND_STROKE}" stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def to_svg(obj):
    if isinstance(obj, GridField):
        if obj.values.size == 0:
            return "\n".join(_header(SIZE, SIZE) + ["</svg>"]) + "\n"
        return _field_svg(obj)
    if isinstance(obj, Breaklines):
        return _breaklines_svg(obj)
    raise TypeError(f"cannot render {type(obj).__name__}")


def render_2d(obj, path):
    """Write a field or a break-line set as SVG; identical inputs give identical files."""
    text = to_svg(obj)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path
