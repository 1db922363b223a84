"""Tiny deterministic SVG scene builder.

Hand-rolled instead of a plotting library so figure output is byte-stable
across environments and suitable for golden-file diffs.  Fonts are
referenced by family name, never embedded.
"""

from __future__ import annotations

import math


def fmt(x: float) -> str:
    """Fixed-precision coordinate formatting (2 decimals, no negative zero)."""
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


class Canvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self._parts: list[str] = []

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self._parts.append(
            f'<line x1="{fmt(x1)}" y1="{fmt(y1)}" x2="{fmt(x2)}" y2="{fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{fmt(width)}"{d} />'
        )

    def polyline(self, points, stroke="#000", width=1.0, fill="none", opacity=None):
        pts = " ".join(f"{fmt(x)},{fmt(y)}" for x, y in points)
        o = f' opacity="{opacity}"' if opacity is not None else ""
        self._parts.append(
            f'<polyline points="{pts}" fill="{fill}" stroke="{stroke}" stroke-width="{fmt(width)}"{o} />'
        )

    def polygon(self, points, fill="#000", stroke="none"):
        pts = " ".join(f"{fmt(x)},{fmt(y)}" for x, y in points)
        self._parts.append(f'<polygon points="{pts}" fill="{fill}" stroke="{stroke}" />')

    def rect(self, x, y, w, h, fill="none", stroke="#000", width=1.0):
        self._parts.append(
            f'<rect x="{fmt(x)}" y="{fmt(y)}" width="{fmt(w)}" height="{fmt(h)}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="{fmt(width)}" />'
        )

    def circle(self, cx, cy, r, fill="#000", stroke="none", opacity=None):
        o = f' opacity="{opacity}"' if opacity is not None else ""
        self._parts.append(
            f'<circle cx="{fmt(cx)}" cy="{fmt(cy)}" r="{fmt(r)}" fill="{fill}" stroke="{stroke}"{o} />'
        )

    def text(self, x, y, content, size=11, anchor="start", fill="#000", rotate=None):
        t = ""
        if rotate is not None:
            t = f' transform="rotate({rotate} {fmt(x)} {fmt(y)})"'
        content = content.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        self._parts.append(
            f'<text x="{fmt(x)}" y="{fmt(y)}" font-family="Helvetica, Arial, sans-serif" '
            f'font-size="{size}" text-anchor="{anchor}" fill="{fill}"{t}>{content}</text>'
        )

    def render(self) -> str:
        body = "\n".join(self._parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">\n{body}\n</svg>\n'
        )


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    """Round tick locations covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / max(target - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= target:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(round(t, 10))
        t += step
    return ticks


class Axis:
    """Linear data-to-pixel mapping."""

    def __init__(self, lo: float, hi: float, px_lo: float, px_hi: float):
        if hi <= lo:
            hi = lo + 1.0
        self.lo, self.hi = lo, hi
        self.px_lo, self.px_hi = px_lo, px_hi

    def __call__(self, x: float) -> float:
        frac = (x - self.lo) / (self.hi - self.lo)
        return self.px_lo + frac * (self.px_hi - self.px_lo)
