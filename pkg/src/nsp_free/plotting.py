"""Minimal SVG line plots written as direct path elements."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    dashed: bool = False


@dataclass
class Figure:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    logy: bool = False
    width: int = 640
    height: int = 420
    series: list[Series] = field(default_factory=list)

    def add(self, x, y, label: str = "", dashed: bool = False) -> "Figure":
        self.series.append(Series(list(map(float, x)), list(map(float, y)), label, dashed))
        return self

    def _transform(self, v, log: bool):
        v = np.asarray(v, float)
        if log:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(v > 0, np.log10(v), np.nan)
        return v

    def to_svg(self) -> str:
        W, H = self.width, self.height
        left, right, top, bottom = 70, 20, 36, 50
        pw, ph = W - left - right, H - top - bottom
        xs = [self._transform(s.x, self.logx) for s in self.series]
        ys = [self._transform(s.y, self.logy) for s in self.series]
        allx = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        ally = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        allx, ally = allx[np.isfinite(allx)], ally[np.isfinite(ally)]
        x0, x1 = (allx.min(), allx.max()) if allx.size else (0.0, 1.0)
        y0, y1 = (ally.min(), ally.max()) if ally.size else (0.0, 1.0)
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad

        def px(v):
            return left + (v - x0) / (x1 - x0) * pw

        def py(v):
            return top + (1.0 - (v - y0) / (y1 - y0)) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        ]
        for tick in np.linspace(x0, x1, 5):
            lab = f"{10**tick:.3g}" if self.logx else f"{tick:.3g}"
            out.append(f'<line x1="{px(tick):.2f}" y1="{top + ph}" x2="{px(tick):.2f}" y2="{top + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{px(tick):.2f}" y="{top + ph + 18}" font-size="11" text-anchor="middle">{lab}</text>')
        for tick in np.linspace(y0, y1, 5):
            lab = f"{10**tick:.3g}" if self.logy else f"{tick:.3g}"
            out.append(f'<line x1="{left - 5}" y1="{py(tick):.2f}" x2="{left}" y2="{py(tick):.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 8}" y="{py(tick) + 4:.2f}" font-size="11" text-anchor="end">{lab}</text>')
        for k, (s, sx, sy) in enumerate(zip(self.series, xs, ys)):
            color = PALETTE[k % len(PALETTE)]
            pts = [(px(a), py(b)) for a, b in zip(sx, sy) if math.isfinite(a) and math.isfinite(b)]
            if not pts:
                continue
            d = "M" + " L".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>')
            if s.label:
                ly = top + 16 + 16 * k
                out.append(f'<line x1="{left + pw - 130}" y1="{ly - 4}" x2="{left + pw - 110}" y2="{ly - 4}" stroke="{color}" stroke-width="2"{dash}/>')
                out.append(f'<text x="{left + pw - 104}" y="{ly}" font-size="11">{escape(s.label)}</text>')
        out.append(f'<text x="{W / 2}" y="22" font-size="14" text-anchor="middle">{escape(self.title)}</text>')
        out.append(f'<text x="{left + pw / 2}" y="{H - 10}" font-size="12" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{top + ph / 2}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + ph / 2})">{escape(self.ylabel)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_svg())
        return path
