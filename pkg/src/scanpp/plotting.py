"""Intensity snapshots: SVG heatmaps plus CSV sidecars with the exact values.

The CSV is the testable artifact; each cell holds the conditional intensity
evaluated at that cell's center. The SVG is presentation built from the same
numbers, with past fixations and the upcoming fixation overlaid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Rect, Scanpath
from .errors import DomainError, ValidationError
from .fileio import format_float
from .saccade import SaccadeParams, SaccadeSpec, intensity

# dark-to-bright perceptual ramp, sampled at equal spacing
_STOPS = ((68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37))


def split_at_time(scanpath: Scanpath, t: float) -> tuple[Scanpath, Optional[int]]:
    """History completed by t and the index of the upcoming fixation.

    t must lie inside the scanpath's span and in a saccade, not inside any
    fixation interval.
    """
    if len(scanpath) == 0:
        raise ValidationError("cannot plot an empty scanpath")
    first = scanpath.fixations[0].onset
    last = scanpath.fixations[-1].end
    if not first <= t <= last:
        raise ValidationError(
            f"timestamp {t} lies outside the scanpath's span [{first}, {last}]")
    k = 0
    for i, fix in enumerate(scanpath.fixations):
        if fix.onset <= t < fix.end:
            raise DomainError(
                f"timestamp {t} falls inside the fixation interval "
                f"[{fix.onset}, {fix.end})")
        if fix.end <= t:
            k = i + 1
    history = Scanpath(scanpath.reader_id, scanpath.text_id, scanpath.fixations[:k])
    nxt = k if k < len(scanpath) else None
    return history, nxt


def grid_centers(omega: Rect, nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    if nx < 1 or ny < 1:
        raise ValidationError(f"grid resolution must be >= 1, got {nx}x{ny}")
    xs = omega.x0 + (np.arange(nx) + 0.5) * (omega.width / nx)
    ys = omega.y0 + (np.arange(ny) + 0.5) * (omega.height / ny)
    return xs, ys


def intensity_grid(t: float, scanpath: Scanpath, spec: SaccadeSpec,
                   params: SaccadeParams, omega: Rect, nx: int, ny: int,
                   X: Optional[np.ndarray] = None
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Intensity at every grid-cell center at time t; shape (ny, nx)."""
    history, _ = split_at_time(scanpath, t)
    hx = None if X is None else np.asarray(X, dtype=float)[:len(history)]
    xs, ys = grid_centers(omega, nx, ny)
    values = np.empty((ny, nx))
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            values[j, i] = intensity(t, (x, y), history, spec, params, X=hx)
    return xs, ys, values


def grid_csv(xs: np.ndarray, ys: np.ndarray, values: np.ndarray) -> str:
    lines = ["x,y,intensity"]
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            lines.append(f"{format_float(float(x))},{format_float(float(y))},"
                         f"{format_float(float(values[j, i]))}")
    return "\n".join(lines) + "\n"


def _color(frac: float) -> str:
    frac = min(max(frac, 0.0), 1.0)
    pos = frac * (len(_STOPS) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(_STOPS) - 1)
    w = pos - lo
    rgb = [round((1 - w) * a + w * b) for a, b in zip(_STOPS[lo], _STOPS[hi])]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def svg_heatmap(t: float, scanpath: Scanpath, omega: Rect, xs: np.ndarray,
                ys: np.ndarray, values: np.ndarray) -> str:
    """Heatmap of the grid with fixation overlays; colors span the value range."""
    history, nxt = split_at_time(scanpath, t)
    vmin = float(np.min(values))
    vmax = float(np.max(values))
    span = vmax - vmin
    cw = omega.width / len(xs)
    ch = omega.height / len(ys)
    mark = 0.012 * max(omega.width, omega.height)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="{omega.x0:g} {omega.y0:g} {omega.width:g} {omega.height:g}" '
        f'width="640" height="{640 * omega.height / omega.width:g}">',
        f"<title>intensity at t={t:g}</title>",
    ]
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            frac = 0.5 if span == 0 else (float(values[j, i]) - vmin) / span
            parts.append(
                f'<rect x="{x - cw / 2:g}" y="{y - ch / 2:g}" width="{cw:g}" '
                f'height="{ch:g}" fill="{_color(frac)}"/>')
    pts = [f"{f.x:g},{f.y:g}" for f in history.fixations]
    if len(pts) > 1:
        parts.append(f'<polyline points="{" ".join(pts)}" fill="none" '
                     f'stroke="#ffffff" stroke-opacity="0.6" stroke-width="{mark / 4:g}"/>')
    for f in history.fixations:
        parts.append(f'<circle cx="{f.x:g}" cy="{f.y:g}" r="{mark:g}" '
                     f'fill="none" stroke="#ffffff" stroke-width="{mark / 3:g}"/>')
    if nxt is not None:
        f = scanpath.fixations[nxt]
        parts.append(f'<circle cx="{f.x:g}" cy="{f.y:g}" r="{mark * 1.4:g}" '
                     f'fill="none" stroke="#ff3333" stroke-width="{mark / 2:g}"/>')
        parts.append(
            f'<line x1="{f.x - mark * 2:g}" y1="{f.y:g}" x2="{f.x + mark * 2:g}" '
            f'y2="{f.y:g}" stroke="#ff3333" stroke-width="{mark / 3:g}"/>')
        parts.append(
            f'<line x1="{f.x:g}" y1="{f.y - mark * 2:g}" x2="{f.x:g}" '
            f'y2="{f.y + mark * 2:g}" stroke="#ff3333" stroke-width="{mark / 3:g}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@dataclass(frozen=True, eq=False)
class PlotPage:
    """One timestamp's rendering: the SVG and its exact-value sidecar."""

    time: float
    svg: str
    csv: str


def plot_intensity(scanpath: Scanpath, spec: SaccadeSpec, params: SaccadeParams,
                   omega: Rect, timestamps: Sequence[float], nx: int = 50,
                   ny: int = 50, X: Optional[np.ndarray] = None) -> list[PlotPage]:
    """One heatmap page per timestamp; fails fast on any invalid timestamp."""
    for t in timestamps:
        split_at_time(scanpath, t)
    pages = []
    for t in timestamps:
        xs, ys, values = intensity_grid(t, scanpath, spec, params, omega, nx, ny, X=X)
        pages.append(PlotPage(time=float(t), svg=svg_heatmap(t, scanpath, omega, xs, ys, values),
                              csv=grid_csv(xs, ys, values)))
    return pages
