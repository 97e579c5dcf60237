"""Deterministic SVG rendering of planar trajectories.

Fixed canvas, fixed coordinate precision and no timestamps, so identical
input gives byte-identical output.
"""

from __future__ import annotations

import numpy as np

from . import models as M
from .errors import ConfigError, EscortLabError
from .escort import read_csv
from .records import atomic_write

STYLES = ("disk", "half-plane", "xy")
SIZE = 480
PAD = 24


def _fmt(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _bounds(paths, style):
    if style == "disk":
        return -1.05, 1.05, -1.05, 1.05
    pts = [p for p in paths if len(p)]
    if not pts:
        return (-1.0, 1.0, 0.0, 2.0) if style == "half-plane" else (-1.0, 1.0, -1.0, 1.0)
    allp = np.concatenate(pts)
    x0, y0 = allp.min(axis=0)
    x1, y1 = allp.max(axis=0)
    if style == "half-plane":
        y0 = 0.0
    # square aspect
    span = max(x1 - x0, y1 - y0, 1e-9) * 1.05
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    if style == "half-plane":
        return cx - span / 2, cx + span / 2, 0.0, span
    return cx - span / 2, cx + span / 2, cy - span / 2, cy + span / 2


def svg_text(paths, style: str = "xy", closed: bool = False, title: str = "") -> str:
    """SVG document for a list of (N, 2) polylines in chart coordinates."""
    if style not in STYLES:
        raise ConfigError(f"style must be one of {STYLES}")
    paths = [np.asarray(p, dtype=float).reshape(-1, 2) for p in paths]
    paths = [p[np.all(np.isfinite(p), axis=1)] for p in paths]
    x0, x1, y0, y1 = _bounds(paths, style)
    scale = (SIZE - 2 * PAD) / max(x1 - x0, y1 - y0)

    def sx(x):
        return PAD + (x - x0) * scale

    def sy(y):
        return SIZE - PAD - (y - y0) * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
           f'viewBox="0 0 {SIZE} {SIZE}">',
           f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>']
    if title:
        safe = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        out.append(f"<title>{safe}</title>")
    # axes
    ax = '<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888" stroke-width="1"/>'
    if style == "disk":
        out.append(f'<circle cx="{_fmt(sx(0))}" cy="{_fmt(sy(0))}" r="{_fmt(scale)}" '
                   'fill="none" stroke="black" stroke-width="1"/>')
        out.append(ax.format(_fmt(sx(-1)), _fmt(sy(0)), _fmt(sx(1)), _fmt(sy(0))))
        out.append(ax.format(_fmt(sx(0)), _fmt(sy(-1)), _fmt(sx(0)), _fmt(sy(1))))
    else:
        ya = 0.0 if y0 <= 0.0 <= y1 else y0
        xa = 0.0 if x0 <= 0.0 <= x1 else x0
        out.append(ax.format(_fmt(sx(x0)), _fmt(sy(ya)), _fmt(sx(x1)), _fmt(sy(ya))))
        out.append(ax.format(_fmt(sx(xa)), _fmt(sy(y0)), _fmt(sx(xa)), _fmt(sy(y1))))
    for p in paths:
        if not len(p):
            continue
        d = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in p)
        tag = "polygon" if closed else "polyline"
        out.append(f'<{tag} points="{d}" fill="none" stroke="#1f4e9a" stroke-width="1.2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def to_style(model, P, style: str) -> np.ndarray:
    """Chart points in the coordinates drawn by ``style``."""
    model = M._as_model(model)
    P = np.asarray(P, dtype=float).reshape(-1, 2)
    if style == "disk" and model != M.DISK:
        if not model.hyperbolic:
            raise ConfigError(f"disk style needs a hyperbolic chart, not {model}")
        from .boundary import to_half_plane
        z = to_half_plane(model, P)[0] if len(P) else np.empty(0, complex)
        a = M.hp_to_disk(z)
        return np.stack([a.real, a.imag], axis=1) if len(P) else np.empty((0, 2))
    if style == "half-plane" and model not in (M.HALF_PLANE,):
        if not model.hyperbolic:
            raise ConfigError(f"half-plane style needs a hyperbolic chart, not {model}")
        from .boundary import to_half_plane
        z = to_half_plane(model, P)[0] if len(P) else np.empty(0, complex)
        return np.stack([z.real, z.imag], axis=1) if len(P) else np.empty((0, 2))
    return P


def emit_plot(source, style: str, out_path: str, closed: bool = False, model=None) -> str:
    """Render a trajectory CSV (``t,c1,c2`` with sidecar) or an (N, 2) array to SVG."""
    if isinstance(source, str):
        P, model = _read_points(source, model)
    else:
        P = np.asarray(source, dtype=float).reshape(-1, 2)
        model = model or M.EUCLIDEAN2
    text = svg_text([to_style(model, P, style)], style, closed)
    atomic_write(out_path, text)
    return out_path


def _read_points(path: str, model=None):
    """Points of a trajectory CSV; a header-only file is an empty trajectory."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}")
    if not lines or not lines[0].startswith("t"):
        raise ConfigError(f"{path}: expected a t,c1,c2 header")
    if len(lines) == 1:
        m = model
        if m is None:
            import configparser
            cp = configparser.ConfigParser()
            m = cp["sequence"]["model"] if cp.read(path + ".cfg") and "sequence" in cp else "euclidean"
        return np.empty((0, 2)), M._as_model(m)
    try:
        seq = read_csv(path, model)
    except (EscortLabError, ValueError, KeyError, IndexError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")
    if seq.array.shape[1] != 2:
        raise ConfigError("only planar trajectories can be plotted")
    return seq.array, seq.model
