"""Hand-written SVG figures: particle frames, probe trajectory bundles, pressure arrows.

Output is plain text with fixed number formatting, so identical inputs give
identical files.
"""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

from .analysis import GeneralizedFlow, PressureField

# fixed 12-color cycle for cluster ids
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#e7ba52",
)

SIZE = 600
MARGIN = 20


class _Frame:
    """Maps domain coordinates to pixels; y points up in the domain."""

    def __init__(self, polygon: np.ndarray, legend_rows: int = 0):
        lo, hi = polygon.min(axis=0), polygon.max(axis=0)
        self.lo = lo
        self.scale = (SIZE - 2 * MARGIN) / float(np.max(hi - lo))
        self.height = SIZE + 16 * legend_rows
        self.polygon = polygon

    def px(self, p):
        p = np.asarray(p, dtype=float)
        x = MARGIN + (p[..., 0] - self.lo[0]) * self.scale
        y = SIZE - MARGIN - (p[..., 1] - self.lo[1]) * self.scale
        return x, y

    def header(self):
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(*self.px(self.polygon)))
        return [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{self.height}" '
            f'viewBox="0 0 {SIZE} {self.height}">',
            f'<rect width="{SIZE}" height="{self.height}" fill="white"/>',
            f'<polygon points="{pts}" fill="none" stroke="black" stroke-width="1"/>',
        ]


def _hex(rgb):
    return "#" + "".join(f"{int(round(255 * c)):02x}" for c in rgb)


def position_colors(initial: np.ndarray) -> list:
    """Hue from the angle of the initial position, saturation from its radius."""
    c = initial - initial.mean(axis=0)
    r = np.linalg.norm(c, axis=1)
    rmax = r.max() if r.max() > 0 else 1.0
    hue = (np.arctan2(c[:, 1], c[:, 0]) / (2 * np.pi)) % 1.0
    return [_hex(colorsys.hsv_to_rgb(h, min(1.0, s / rmax), 0.9)) for h, s in zip(hue, r)]


def cluster_colors(labels) -> list:
    return [PALETTE[int(l) % len(PALETTE)] for l in labels]


def _write(path: Path, lines):
    path.write_text("\n".join(lines + ["</svg>"]) + "\n")


def render_frames(flow: GeneralizedFlow, polygon: np.ndarray, out_dir, initial=None,
                  labels=None) -> list:
    """One SVG per time node, frame_00.svg .. frame_TT.svg.

    Particles are colored by cluster when ``labels`` is given, otherwise by
    ``initial`` positions (default: the t=0 nodes).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if labels is not None:
        colors = cluster_colors(labels)
        k = int(np.max(labels)) + 1
    else:
        colors = position_colors(flow.nodes[:, 0] if initial is None else np.asarray(initial))
        k = 0
    radius = max(1.0, 0.35 * (SIZE - 2 * MARGIN) / np.sqrt(flow.N))
    width = len(str(flow.T)) if flow.T >= 100 else 2
    paths = []
    for i in range(flow.T + 1):
        fr = _Frame(polygon, legend_rows=k)
        lines = fr.header()
        x, y = fr.px(flow.nodes[:, i])
        for xx, yy, c in zip(x, y, colors):
            lines.append(f'<circle cx="{xx:.2f}" cy="{yy:.2f}" r="{radius:.2f}" fill="{c}"/>')
        lines.append(f'<text x="{MARGIN}" y="14" font-size="12">t = {i}/{flow.T}</text>')
        for c in range(k):
            y0 = SIZE + 16 * c + 4
            lines.append(f'<g class="legend"><rect x="{MARGIN}" y="{y0}" width="10" height="10" '
                         f'fill="{PALETTE[c % len(PALETTE)]}"/>'
                         f'<text x="{MARGIN + 16}" y="{y0 + 9}" font-size="11">cluster {c}</text></g>')
        p = out_dir / f"frame_{i:0{width}d}.svg"
        _write(p, lines)
        paths.append(p)
    return paths


def probe_members(initial: np.ndarray, center, radius: float) -> np.ndarray:
    d = np.linalg.norm(np.asarray(initial) - np.asarray(center, dtype=float), axis=1)
    return np.flatnonzero(d <= radius)


def bundle_stats(flow: GeneralizedFlow, members, domain_area: float) -> dict:
    """Bounding box of every node of the selected trajectories."""
    if len(members) == 0:
        return {"count": 0, "bbox": None, "bbox_area": 0.0, "area_fraction": 0.0}
    pts = flow.nodes[members].reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    area = float(np.prod(hi - lo))
    return {"count": int(len(members)), "bbox": [lo.tolist(), hi.tolist()],
            "bbox_area": area, "area_fraction": area / domain_area}


def render_probe(flow: GeneralizedFlow, polygon: np.ndarray, initial, center, radius,
                 path) -> np.ndarray:
    """Draw all trajectories starting inside the probe disk; returns their indices."""
    members = probe_members(initial, center, radius)
    fr = _Frame(polygon)
    lines = fr.header()
    colors = position_colors(np.asarray(initial))
    for j in members:
        x, y = fr.px(flow.nodes[j])
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(x, y))
        lines.append(f'<polyline points="{pts}" fill="none" stroke="{colors[j]}" '
                     f'stroke-width="0.8" stroke-opacity="0.7"/>')
    cx, cy = fr.px(np.asarray(center, dtype=float))
    lines.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{radius * fr.scale:.2f}" '
                 f'fill="none" stroke="black" stroke-dasharray="3,2"/>')
    lines.append(f'<text x="{MARGIN}" y="14" font-size="12">{len(members)} trajectories</text>')
    _write(Path(path), lines)
    return members


def render_pressure(field: PressureField, polygon: np.ndarray, out_dir, max_arrows=1500) -> list:
    """One arrow plot per interior time; arrows scaled to the largest |grad p|."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    n_t, N = field.positions.shape[:2]
    idx = np.arange(N) if N <= max_arrows else np.linspace(0, N - 1, max_arrows).astype(int)
    gmax = float(np.linalg.norm(field.grad_p, axis=-1).max()) or 1.0
    for i in range(n_t):
        fr = _Frame(polygon)
        lines = fr.header()
        arrow = 0.08 * (SIZE - 2 * MARGIN) / gmax
        x0, y0 = fr.px(field.positions[i, idx])
        g = field.grad_p[i, idx]
        for a, b, (u, v) in zip(x0, y0, g):
            lines.append(f'<line x1="{a:.2f}" y1="{b:.2f}" x2="{a + arrow * u:.2f}" '
                         f'y2="{b - arrow * v:.2f}" stroke="#333" stroke-width="0.7"/>')
            lines.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="0.9" fill="#d62728"/>')
        lines.append(f'<text x="{MARGIN}" y="14" font-size="12">grad p, time index {i + 1}</text>')
        p = out_dir / f"pressure_{i + 1:02d}.svg"
        _write(p, lines)
        paths.append(p)
    return paths
