"""Semantic scene grids, forbidden-region rules, and scene file IO.

A scene file is a JSON header, a separator line ``---``, then an ASCII grid
block with one character per cell:

    S sidewalk   C crosswalk   R road   G grass   # obstacle   . free

The first text row is the top of the map (largest y); internally rows are
stored bottom-up so cell (ix, iy) covers
``origin + [ix, iy] * cell_size .. origin + [ix+1, iy+1] * cell_size``.
Cell boundaries belong to the cell with the lower index and points outside
the rectangle are ``out_of_bounds``, which is always forbidden.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class SemanticLabel(str, Enum):
    SIDEWALK = "sidewalk"
    CROSSWALK = "crosswalk"
    ROAD = "road"
    GRASS = "grass"
    OBSTACLE = "obstacle"
    FREE = "free"
    OUT_OF_BOUNDS = "out_of_bounds"


CHAR_TO_LABEL = {
    "S": SemanticLabel.SIDEWALK,
    "C": SemanticLabel.CROSSWALK,
    "R": SemanticLabel.ROAD,
    "G": SemanticLabel.GRASS,
    "#": SemanticLabel.OBSTACLE,
    ".": SemanticLabel.FREE,
}
LABEL_TO_CHAR = {v: k for k, v in CHAR_TO_LABEL.items()}

# Stable integer codes used in wire formats and serialized patches.
LABEL_CODES = {
    SemanticLabel.FREE: 0,
    SemanticLabel.SIDEWALK: 1,
    SemanticLabel.CROSSWALK: 2,
    SemanticLabel.ROAD: 3,
    SemanticLabel.GRASS: 4,
    SemanticLabel.OBSTACLE: 5,
    SemanticLabel.OUT_OF_BOUNDS: 6,
}
CODE_TO_LABEL = {v: k for k, v in LABEL_CODES.items()}

DEFAULT_CELL_SIZE = 0.25
DEFAULT_GOAL_TOLERANCE = 0.5
SCENE_FORMAT_SEPARATOR = "---"


class SceneFormatError(ValueError):
    pass


@dataclass
class SemanticGrid:
    origin: tuple[float, float]
    cell_size: float
    labels: np.ndarray  # (height, width) int8 label codes, row 0 = lowest y

    def __post_init__(self) -> None:
        if self.cell_size <= 0:
            raise SceneFormatError("cell_size must be positive")

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def cell_index(self, x: float, y: float) -> tuple[int, int] | None:
        """(ix, iy) of the containing cell, or None when out of bounds."""
        u = (x - self.origin[0]) / self.cell_size
        v = (y - self.origin[1]) / self.cell_size
        ix = _lower_index(u, self.width)
        iy = _lower_index(v, self.height)
        if ix is None or iy is None:
            return None
        return ix, iy

    def label_at_cell(self, ix: int, iy: int) -> SemanticLabel:
        return CODE_TO_LABEL[int(self.labels[iy, ix])]

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the grid rectangle."""
        return (
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.width * self.cell_size,
            self.origin[1] + self.height * self.cell_size,
        )


def _lower_index(u: float, n: int) -> int | None:
    """Map a cell-unit coordinate to an index, boundaries to the lower cell."""
    if not math.isfinite(u) or u < 0.0 or u > n:
        return None
    if u == 0.0:
        return 0
    idx = math.ceil(u) - 1
    return idx if 0 <= idx < n else None


@dataclass
class SceneRules:
    forbidden: frozenset[SemanticLabel]
    goal_tolerance: float = DEFAULT_GOAL_TOLERANCE
    time_limit: int = 1000

    def __post_init__(self) -> None:
        self.forbidden = frozenset(self.forbidden) | {
            SemanticLabel.OBSTACLE,
            SemanticLabel.OUT_OF_BOUNDS,
        }


@dataclass
class SceneSpec:
    scene_id: str
    grid: SemanticGrid
    rules: SceneRules
    points: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, (x, y) in self.points.items():
            label = label_at(self.grid, (x, y))
            if label is SemanticLabel.OUT_OF_BOUNDS:
                raise SceneFormatError(f"point {name!r} at ({x}, {y}) lies outside the grid")
            if label is SemanticLabel.OBSTACLE:
                raise SceneFormatError(f"point {name!r} at ({x}, {y}) lies inside an obstacle cell")


def label_at(grid: SemanticGrid, p: tuple[float, float]) -> SemanticLabel:
    """Label of the containing cell; OUT_OF_BOUNDS outside the rectangle."""
    cell = grid.cell_index(p[0], p[1])
    if cell is None:
        return SemanticLabel.OUT_OF_BOUNDS
    return grid.label_at_cell(*cell)


def label_codes_for_points(grid: SemanticGrid, points: np.ndarray) -> np.ndarray:
    """Vectorized label_at over an (n, 2) array, returning int8 codes.

    Matches the scalar boundary convention: boundaries belong to the
    lower-index cell, the origin to cell (0, 0).
    """
    points = np.asarray(points, dtype=np.float64)
    u = (points[:, 0] - grid.origin[0]) / grid.cell_size
    v = (points[:, 1] - grid.origin[1]) / grid.cell_size
    ix = np.where(u == 0.0, 0, np.ceil(u).astype(np.int64) - 1)
    iy = np.where(v == 0.0, 0, np.ceil(v).astype(np.int64) - 1)
    inside = (u >= 0.0) & (u <= grid.width) & (v >= 0.0) & (v <= grid.height)
    out = np.full(len(points), LABEL_CODES[SemanticLabel.OUT_OF_BOUNDS], dtype=np.int8)
    if inside.any():
        out[inside] = grid.labels[iy[inside], ix[inside]]
    return out


def is_forbidden(spec: SceneSpec, p: tuple[float, float]) -> bool:
    return label_at(spec.grid, p) in spec.rules.forbidden


def obstacle_clearance_field(grid: SemanticGrid) -> np.ndarray:
    """Per-cell Euclidean distance (meters) to the nearest obstacle cell.

    Distances are between cell centers; cells that are themselves obstacles
    get 0.  Used for clearance estimates in rollout outcomes.
    """
    from scipy import ndimage

    obstacle = grid.labels == LABEL_CODES[SemanticLabel.OBSTACLE]
    if not obstacle.any():
        return np.full(grid.labels.shape, np.inf)
    dist = ndimage.distance_transform_edt(~obstacle)
    return dist * grid.cell_size


def parse_scene(text: str, scene_path: str = "<string>") -> SceneSpec:
    """Parse the JSON-header + ASCII-grid scene format."""
    if SCENE_FORMAT_SEPARATOR not in text.splitlines():
        raise SceneFormatError(f"{scene_path}: missing '{SCENE_FORMAT_SEPARATOR}' separator line")
    lines = text.splitlines()
    sep = lines.index(SCENE_FORMAT_SEPARATOR)
    header_text = "\n".join(lines[:sep])
    grid_lines = [ln for ln in lines[sep + 1 :] if ln.strip() != ""]
    try:
        header = json.loads(header_text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{scene_path}: bad JSON header: {exc}") from None

    required = {"scene_id", "origin", "cell_size", "forbidden", "goal_tolerance", "time_limit"}
    missing = required - set(header)
    if missing:
        raise SceneFormatError(f"{scene_path}: header missing keys {sorted(missing)}")

    if not grid_lines:
        raise SceneFormatError(f"{scene_path}: empty grid block")
    width = len(grid_lines[0])
    rows = []
    # file rows are top-down; flip so row 0 is the lowest y
    for row_no, line in enumerate(grid_lines):
        if len(line) != width:
            raise SceneFormatError(f"{scene_path}: grid row {row_no} has length {len(line)}, expected {width}")
        row = []
        for col_no, ch in enumerate(line):
            if ch not in CHAR_TO_LABEL:
                raise SceneFormatError(
                    f"{scene_path}: unknown label character {ch!r} at grid row {row_no}, column {col_no}"
                )
            row.append(LABEL_CODES[CHAR_TO_LABEL[ch]])
        rows.append(row)
    labels = np.array(rows[::-1], dtype=np.int8)

    grid = SemanticGrid(
        origin=(float(header["origin"][0]), float(header["origin"][1])),
        cell_size=float(header["cell_size"]),
        labels=labels,
    )
    rules = SceneRules(
        forbidden=frozenset(SemanticLabel(name) for name in header["forbidden"]),
        goal_tolerance=float(header["goal_tolerance"]),
        time_limit=int(header["time_limit"]),
    )
    points = {name: (float(xy[0]), float(xy[1])) for name, xy in header.get("points", {}).items()}
    return SceneSpec(scene_id=str(header["scene_id"]), grid=grid, rules=rules, points=points)


def load_scene(path: str) -> SceneSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scene(fh.read(), scene_path=path)


def render_scene(spec: SceneSpec) -> str:
    """Inverse of parse_scene; load(render(s)) reproduces s exactly."""
    header = {
        "scene_id": spec.scene_id,
        "origin": [spec.grid.origin[0], spec.grid.origin[1]],
        "cell_size": spec.grid.cell_size,
        "forbidden": sorted(lbl.value for lbl in spec.rules.forbidden),
        "goal_tolerance": spec.rules.goal_tolerance,
        "time_limit": spec.rules.time_limit,
        "points": {name: [x, y] for name, (x, y) in sorted(spec.points.items())},
    }
    rows = []
    for iy in range(spec.grid.height - 1, -1, -1):
        rows.append("".join(LABEL_TO_CHAR[CODE_TO_LABEL[int(c)]] for c in spec.grid.labels[iy]))
    return json.dumps(header, indent=2, sort_keys=True) + f"\n{SCENE_FORMAT_SEPARATOR}\n" + "\n".join(rows) + "\n"


def save_scene(spec: SceneSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_scene(spec))


def bundled_scene_path(name: str) -> str:
    """Filesystem path of a scene file shipped with the package."""
    from importlib import resources

    resource = resources.files("crowdskills.data").joinpath(f"scenes/{name}.scene")
    with resources.as_file(resource) as p:
        return str(p)


def load_bundled_scene(name: str) -> SceneSpec:
    return load_scene(bundled_scene_path(name))


def label_histogram(spec: SceneSpec) -> dict[str, int]:
    """Cell counts per label name."""
    out = {}
    for code, count in zip(*np.unique(spec.grid.labels, return_counts=True)):
        out[CODE_TO_LABEL[int(code)].value] = int(count)
    return out
