"""Minimal deterministic SVG line plots for PD and ICE curves.

Output depends only on the input numbers: coordinates are printed with a
fixed number of decimals and elements are emitted in input order.
"""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .explain import IceBundle, PdCurve

PANEL_W, PANEL_H = 420, 300
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 20, 36, 44
MAX_ICE_LINES = 200

STYLE = {
    "original": ("#1f77b4", ""),
    "adversarial": ("#d62728", ""),
    "target": ("#000000", "6,4"),
    "conditional_rho": ("#2ca02c", "2,3"),
}


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    return np.linspace(lo, hi, n)


class _Panel:
    def __init__(self, x0: float, y0: float, xlim, ylim):
        self.x0, self.y0 = x0, y0
        self.xlo, self.xhi = xlim
        self.ylo, self.yhi = ylim
        self.w = PANEL_W - MARGIN_L - MARGIN_R
        self.h = PANEL_H - MARGIN_T - MARGIN_B

    def sx(self, x):
        return self.x0 + MARGIN_L + (np.asarray(x, float) - self.xlo) / (self.xhi - self.xlo) * self.w

    def sy(self, y):
        return self.y0 + MARGIN_T + (self.yhi - np.asarray(y, float)) / (self.yhi - self.ylo) * self.h

    def polyline(self, x, y, colour, width=1.5, dash="", opacity=1.0) -> str:
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.sx(x), self.sy(y)))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        if opacity != 1.0:
            extra += f' stroke-opacity="{opacity}"'
        return f'<polyline fill="none" stroke="{colour}" stroke-width="{width}"{extra} points="{pts}"/>'

    def axes(self, title: str, xlabel: str) -> list[str]:
        left, top = self.x0 + MARGIN_L, self.y0 + MARGIN_T
        out = [
            f'<rect x="{_fmt(left)}" y="{_fmt(top)}" width="{_fmt(self.w)}" height="{_fmt(self.h)}" '
            'fill="none" stroke="#444444" stroke-width="1"/>',
            f'<text x="{_fmt(left + self.w / 2)}" y="{_fmt(self.y0 + 22)}" text-anchor="middle" '
            f'font-size="14">{escape(title)}</text>',
            f'<text x="{_fmt(left + self.w / 2)}" y="{_fmt(top + self.h + 36)}" text-anchor="middle" '
            f'font-size="12">{escape(xlabel)}</text>',
        ]
        for t in _ticks(self.xlo, self.xhi):
            x = float(self.sx(t))
            out.append(f'<line x1="{_fmt(x)}" y1="{_fmt(top + self.h)}" x2="{_fmt(x)}" y2="{_fmt(top + self.h + 4)}" stroke="#444444"/>')
            out.append(f'<text x="{_fmt(x)}" y="{_fmt(top + self.h + 16)}" text-anchor="middle" font-size="10">{t:.3g}</text>')
        for t in _ticks(self.ylo, self.yhi):
            y = float(self.sy(t))
            out.append(f'<line x1="{_fmt(left - 4)}" y1="{_fmt(y)}" x2="{_fmt(left)}" y2="{_fmt(y)}" stroke="#444444"/>')
            out.append(f'<text x="{_fmt(left - 6)}" y="{_fmt(y + 3)}" text-anchor="end" font-size="10">{t:.3g}</text>')
        return out


def _limits(arrays: Sequence[np.ndarray]) -> tuple[float, float]:
    lo = min(float(np.min(a)) for a in arrays)
    hi = max(float(np.max(a)) for a in arrays)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_svg(curves: Sequence[PdCurve], ice: Sequence[IceBundle] = ()) -> str:
    """One panel per feature (in first-appearance order), PD curves by kind.

    When an ICE bundle exists for a feature, up to ``MAX_ICE_LINES`` evenly
    spaced ICE curves are drawn underneath together with their 10th and 90th
    percentile curves.
    """
    features: list[str] = []
    for c in list(curves) + [b for b in ice]:
        feat = c.feature
        if feat not in features:
            features.append(feat)
    if not features:
        raise ValueError("nothing to plot")
    ice_by = {b.feature: b for b in ice}
    width, height = PANEL_W * len(features), PANEL_H + 24
    body: list[str] = []
    for k, feat in enumerate(features):
        fc = [c for c in curves if c.feature == feat]
        bundle = ice_by.get(feat)
        xs = [c.grid.values for c in fc] + ([bundle.grid.values] if bundle else [])
        ys = [c.values for c in fc] + ([bundle.curves.ravel()] if bundle else [])
        panel = _Panel(k * PANEL_W, 0, _limits(xs), _limits(ys))
        body += panel.axes(f"PD: {feat}", feat)
        if bundle is not None:
            n = len(bundle.curves)
            step = max(1, -(-n // MAX_ICE_LINES))
            for row in bundle.curves[::step]:
                body.append(panel.polyline(bundle.grid.values, row, "#7f7f7f", 0.6, opacity=0.35))
            for q in (10, 90):
                body.append(panel.polyline(bundle.grid.values, bundle.percentile(q), "#ff7f0e", 1.2, "4,3"))
        for c in fc:
            colour, dash = STYLE[c.kind]
            body.append(panel.polyline(c.grid.values, c.values, colour, 2.0, dash))
    legend = [k for k in STYLE if any(c.kind == k for c in curves)]
    if ice:
        legend += ["ICE", "ICE p10/p90"]
    x = 10.0
    for name in legend:
        colour, dash = STYLE.get(name, ("#7f7f7f", "") if name == "ICE" else ("#ff7f0e", "4,3"))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        body.append(f'<line x1="{_fmt(x)}" y1="{_fmt(height - 10)}" x2="{_fmt(x + 20)}" y2="{_fmt(height - 10)}" stroke="{colour}" stroke-width="2"{extra}/>')
        body.append(f'<text x="{_fmt(x + 24)}" y="{_fmt(height - 6)}" font-size="11">{escape(name)}</text>')
        x += 34 + 7 * len(name)
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="#ffffff"/>', *body, "</svg>"]) + "\n"
