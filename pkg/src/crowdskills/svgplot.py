"""Deterministic SVG emission for scene/trajectory plots and heatmaps.

Hand-rolled markup keeps outputs byte-identical across reruns, which the
reproducibility contract requires (plotting libraries embed run-specific
ids).
"""

from __future__ import annotations

import numpy as np

from .scene import CODE_TO_LABEL, SceneSpec, SemanticLabel

LABEL_FILL = {
    SemanticLabel.SIDEWALK: "#d9d2c4",
    SemanticLabel.CROSSWALK: "#f5f0dc",
    SemanticLabel.ROAD: "#6f6f78",
    SemanticLabel.GRASS: "#a8c89a",
    SemanticLabel.OBSTACLE: "#3a3a3a",
    SemanticLabel.FREE: "#efefef",
    SemanticLabel.OUT_OF_BOUNDS: "#ffffff",
}

AGENT_COLORS = [
    "#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400",
    "#16a085", "#7f8c8d", "#f39c12", "#2c3e50", "#e84393",
]


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def scene_trajectories_svg(
    spec: SceneSpec,
    histories: dict[int, np.ndarray],
    scale: float = 24.0,
) -> str:
    """Scene raster plus one polyline per agent, y-up world coordinates."""
    xmin, ymin, xmax, ymax = spec.grid.bounds()
    width = (xmax - xmin) * scale
    height = (ymax - ymin) * scale

    def sx(x: float) -> float:
        return (x - xmin) * scale

    def sy(y: float) -> float:
        return (ymax - y) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">'
    ]
    cell = spec.grid.cell_size * scale
    labels = spec.grid.labels
    for iy in range(spec.grid.height):
        run_start = 0
        row = labels[iy]
        x_px = 0.0
        # merge horizontal runs of equal labels into single rects
        while run_start < len(row):
            run_end = run_start
            while run_end + 1 < len(row) and row[run_end + 1] == row[run_start]:
                run_end += 1
            fill = LABEL_FILL[CODE_TO_LABEL[int(row[run_start])]]
            x_px = run_start * cell
            y_px = (spec.grid.height - 1 - iy) * cell
            w_px = (run_end - run_start + 1) * cell
            parts.append(
                f'<rect x="{_fmt(x_px)}" y="{_fmt(y_px)}" width="{_fmt(w_px)}" '
                f'height="{_fmt(cell)}" fill="{fill}"/>'
            )
            run_start = run_end + 1

    for idx, aid in enumerate(sorted(histories)):
        positions = np.asarray(histories[aid])
        if len(positions) == 0:
            continue
        color = AGENT_COLORS[idx % len(AGENT_COLORS)]
        points = " ".join(f"{_fmt(sx(p[0]))},{_fmt(sy(p[1]))}" for p in positions)
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<circle cx="{_fmt(sx(positions[0][0]))}" cy="{_fmt(sy(positions[0][1]))}" r="3" fill="{color}"/>'
        )
        parts.append(
            f'<circle cx="{_fmt(sx(positions[-1][0]))}" cy="{_fmt(sy(positions[-1][1]))}" r="3" '
            f'fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_svg(matrix: np.ndarray, cell_px: float = 8.0, title: str = "") -> str:
    """Row-major heatmap; darker cells carry more probability mass."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n_rows, n_cols = matrix.shape
    top = 18.0 if title else 0.0
    width = n_cols * cell_px
    height = n_rows * cell_px + top
    vmax = float(matrix.max()) if matrix.size else 1.0
    if vmax <= 0:
        vmax = 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">'
    ]
    if title:
        parts.append(f'<text x="2" y="12" font-size="11" font-family="monospace">{title}</text>')
    for i in range(n_rows):
        for j in range(n_cols):
            value = matrix[i, j] / vmax
            shade = int(round(255 * (1.0 - value)))
            parts.append(
                f'<rect x="{_fmt(j * cell_px)}" y="{_fmt(top + i * cell_px)}" '
                f'width="{_fmt(cell_px)}" height="{_fmt(cell_px)}" '
                f'fill="rgb({shade},{shade},255)"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
