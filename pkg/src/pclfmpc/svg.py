"""Minimal SVG 1.1 writer for planar set figures.

Shapes are emitted in data coordinates inside a group whose transform maps
them onto the canvas, so the numbers in the file can be read back directly.
"""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET

import numpy as np

SVG_NS = "http://www.w3.org/2000/svg"

COLORS = {"x_inf": "#2ca02c", "x_n": "#d62728", "tilde": "#17becf", "xf": "#1f77b4"}


def _n(v) -> str:
    return repr(float(v))


def _pts(P) -> str:
    return " ".join(f"{_n(x)},{_n(y)}" for x, y in np.asarray(P, float))


def _runs(row):
    """Maximal runs of True in a boolean vector, as (start, stop) inclusive."""
    out = []
    j, n = 0, len(row)
    while j < n:
        if row[j]:
            k = j
            while k + 1 < n and row[k + 1]:
                k += 1
            out.append((j, k))
            j = k + 1
        else:
            j += 1
    return out


def sets_figure(lo, hi, x_inf, x_n, xf, tilde=None, title: str = "", width: int = 600) -> str:
    """Layer the four sets (largest first). Vertex arrays are k x 2, CCW."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    span = hi - lo
    height = int(round(width * span[1] / span[0]))
    sx, sy = width / span[0], height / span[1]
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="{SVG_NS}" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{title}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<g id="data" transform="matrix({_n(sx)} 0 0 {_n(-sy)} {_n(-lo[0] * sx)} {_n(hi[1] * sy)})">',
        f'<polygon id="x_inf" fill="{COLORS["x_inf"]}" fill-opacity="0.5" stroke="none" '
        f'points="{_pts(x_inf)}"/>',
        f'<polygon id="x_n" fill="{COLORS["x_n"]}" fill-opacity="0.6" stroke="none" '
        f'points="{_pts(x_n)}"/>',
    ]
    if tilde is not None:
        xs, ys, mask = tilde
        dx = xs[1] - xs[0] if len(xs) > 1 else 1.0
        dy = ys[1] - ys[0] if len(ys) > 1 else 1.0
        lines.append(f'<g id="tilde" fill="{COLORS["tilde"]}" stroke="none">')
        for i, y in enumerate(ys):
            for a, b in _runs(mask[i]):
                # data-first/last hold the sampled grid points covered by the run
                lines.append(
                    f'<rect x="{_n(xs[a] - dx / 2)}" y="{_n(y - dy / 2)}" '
                    f'width="{_n(xs[b] - xs[a] + dx)}" height="{_n(dy)}" '
                    f'data-y="{_n(y)}" data-first="{_n(xs[a])}" data-last="{_n(xs[b])}"/>')
        lines.append("</g>")
    lines.append(f'<polygon id="xf" fill="{COLORS["xf"]}" stroke="none" points="{_pts(xf)}"/>')
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def read_figure(text: str) -> dict:
    """Parse a figure back into vertex arrays and the tilde sample points."""
    root = ET.fromstring(text)
    ns = {"s": SVG_NS}
    out = {}
    for poly in root.iterfind(".//s:polygon", ns):
        nums = [float(v) for v in re.split(r"[\s,]+", poly.get("points").strip())]
        out[poly.get("id")] = np.array(nums).reshape(-1, 2)
    grid = root.find(".//s:g[@id='tilde']", ns)
    if grid is not None:
        pts = []
        for r in grid.iterfind("s:rect", ns):
            y = float(r.get("data-y"))
            pts.append((float(r.get("data-first")), y))
            pts.append((float(r.get("data-last")), y))
        out["tilde"] = np.array(pts).reshape(-1, 2)
    return out
