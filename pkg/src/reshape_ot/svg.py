"""Tiny deterministic SVG writer for experiment figures.

Only primitive shapes are needed (scatter dots, arrows, heat cells, error
bars), and writing them by hand keeps reruns byte-identical, which the
experiment outputs must be. All coordinates are formatted with a fixed
number of decimals.
"""

from __future__ import annotations

import numpy as np

_FMT = "{:.3f}"


def _f(v: float) -> str:
    return _FMT.format(float(v))


class Frame:
    """Maps data coordinates into a fixed pixel viewport (y axis flipped)."""

    def __init__(self, xlim, ylim, width=520.0, height=420.0, pad=40.0):
        self.x0, self.x1 = float(xlim[0]), float(xlim[1])
        self.y0, self.y1 = float(ylim[0]), float(ylim[1])
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.width = width
        self.height = height
        self.pad = pad

    def px(self, x: float) -> float:
        span = self.x1 - self.x0
        return self.pad + (x - self.x0) / span * (self.width - 2 * self.pad)

    def py(self, y: float) -> float:
        span = self.y1 - self.y0
        return self.height - self.pad - (y - self.y0) / span * (self.height - 2 * self.pad)

    @classmethod
    def around(cls, points: np.ndarray, margin: float = 0.08, **kwargs) -> "Frame":
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        span = np.where(hi - lo > 0, hi - lo, 1.0)
        lo = lo - margin * span
        hi = hi + margin * span
        return cls((lo[0], hi[0]), (lo[1], hi[1]), **kwargs)


def heat_color(value: float) -> str:
    """Map [0, 1] to a dark-blue -> yellow ramp."""
    t = min(max(float(value), 0.0), 1.0)
    r = int(round(255 * min(1.0, 2.0 * t)))
    g = int(round(255 * (t**1.2)))
    b = int(round(255 * max(0.0, 1.0 - 1.6 * t)))
    return f"#{r:02x}{g:02x}{b:02x}"


class SvgCanvas:
    def __init__(self, frame: Frame, title: str = ""):
        self.frame = frame
        self._parts: list[str] = []
        self._parts.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{_f(frame.width)}" height="{_f(frame.height)}" '
            f'viewBox="0 0 {_f(frame.width)} {_f(frame.height)}">'
        )
        self._parts.append(
            f'<rect width="{_f(frame.width)}" height="{_f(frame.height)}" fill="white"/>'
        )
        if title:
            self._parts.append(
                f'<text x="{_f(frame.width / 2)}" y="20" text-anchor="middle" '
                f'font-family="sans-serif" font-size="13">{title}</text>'
            )

    def circle(self, x, y, r=2.5, color="#1f77b4", opacity=1.0):
        self._parts.append(
            f'<circle cx="{_f(self.frame.px(x))}" cy="{_f(self.frame.py(y))}" '
            f'r="{_f(r)}" fill="{color}" fill-opacity="{_f(opacity)}"/>'
        )

    def line(self, x0, y0, x1, y1, color="#555555", width=1.0, opacity=1.0):
        self._parts.append(
            f'<line x1="{_f(self.frame.px(x0))}" y1="{_f(self.frame.py(y0))}" '
            f'x2="{_f(self.frame.px(x1))}" y2="{_f(self.frame.py(y1))}" '
            f'stroke="{color}" stroke-width="{_f(width)}" stroke-opacity="{_f(opacity)}"/>'
        )

    def arrow(self, x0, y0, x1, y1, color="#d62728", width=1.2, opacity=0.9):
        self.line(x0, y0, x1, y1, color=color, width=width, opacity=opacity)
        # small head: two strokes rotated off the shaft
        px0, py0 = self.frame.px(x0), self.frame.py(y0)
        px1, py1 = self.frame.px(x1), self.frame.py(y1)
        dx, dy = px1 - px0, py1 - py0
        norm = max((dx * dx + dy * dy) ** 0.5, 1e-9)
        ux, uy = dx / norm, dy / norm
        size = 4.0
        for side in (1.0, -1.0):
            hx = px1 - size * (ux + side * 0.5 * -uy)
            hy = py1 - size * (uy + side * 0.5 * ux)
            self._parts.append(
                f'<line x1="{_f(px1)}" y1="{_f(py1)}" x2="{_f(hx)}" y2="{_f(hy)}" '
                f'stroke="{color}" stroke-width="{_f(width)}" stroke-opacity="{_f(opacity)}"/>'
            )

    def cell(self, x0, y0, x1, y1, color: str):
        """Axis-aligned filled rectangle given in data coordinates."""
        px0, px1 = self.frame.px(x0), self.frame.px(x1)
        py0, py1 = self.frame.py(y1), self.frame.py(y0)
        self._parts.append(
            f'<rect x="{_f(px0)}" y="{_f(py0)}" width="{_f(px1 - px0)}" '
            f'height="{_f(py1 - py0)}" fill="{color}"/>'
        )

    def text(self, x, y, content, size=11, color="#000000", anchor="start"):
        self._parts.append(
            f'<text x="{_f(self.frame.px(x))}" y="{_f(self.frame.py(y))}" '
            f'font-family="sans-serif" font-size="{size}" fill="{color}" '
            f'text-anchor="{anchor}">{content}</text>'
        )

    def caption(self, content: str):
        self._parts.append(
            f'<text x="{_f(self.frame.pad)}" y="{_f(self.frame.height - 8)}" '
            f'font-family="sans-serif" font-size="10" fill="#444444">{content}</text>'
        )

    def to_string(self) -> str:
        return "\n".join(self._parts + ["</svg>"]) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_string())


def heat_grid(canvas: SvgCanvas, xs: np.ndarray, ys: np.ndarray, values: np.ndarray):
    """Draw a heat field over cell edges xs (len nx+1) and ys (len ny+1).

    ``values`` has shape (ny, nx) and is normalized to [0, 1] internally.
    """
    vmin = float(values.min())
    vmax = float(values.max())
    span = vmax - vmin if vmax > vmin else 1.0
    for iy in range(values.shape[0]):
        for ix in range(values.shape[1]):
            t = (values[iy, ix] - vmin) / span
            canvas.cell(xs[ix], ys[iy], xs[ix + 1], ys[iy + 1], heat_color(t))
