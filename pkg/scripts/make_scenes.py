#!/usr/bin/env python3
"""Regenerate the bundled scene files in src/crowdskills/data/scenes/.

Layouts are hand-designed approximations of the benchmark environments at
0.25 m cell resolution; geometric fidelity is best-effort.  Output is
deterministic, so reruns leave committed files unchanged.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from crowdskills.scene import (  # noqa: E402
    LABEL_CODES,
    SceneRules,
    SceneSpec,
    SemanticGrid,
    SemanticLabel,
    save_scene,
)

OUT = Path(__file__).resolve().parents[1] / "src" / "crowdskills" / "data" / "scenes"

S = LABEL_CODES[SemanticLabel.SIDEWALK]
C = LABEL_CODES[SemanticLabel.CROSSWALK]
R = LABEL_CODES[SemanticLabel.ROAD]
G = LABEL_CODES[SemanticLabel.GRASS]
O = LABEL_CODES[SemanticLabel.OBSTACLE]
F = LABEL_CODES[SemanticLabel.FREE]

CELL = 0.25


def fill(grid: np.ndarray, x0: float, y0: float, x1: float, y1: float, code: int) -> None:
    """Paint cells whose centers fall inside [x0, x1) x [y0, y1) meters."""
    h, w = grid.shape
    for iy in range(h):
        cy = (iy + 0.5) * CELL
        if not y0 <= cy < y1:
            continue
        for ix in range(w):
            cx = (ix + 0.5) * CELL
            if x0 <= cx < x1:
                grid[iy, ix] = code


def make_zara01() -> SceneSpec:
    # Shopping-street sidewalk in front of a storefront wall (bottom edge).
    grid = np.full((48, 60), S, dtype=np.int8)
    fill(grid, 0.0, 0.0, 15.0, 0.75, O)      # storefront wall
    fill(grid, 6.0, 0.0, 8.0, 0.75, S)       # shop doorway
    fill(grid, 2.0, 9.5, 3.0, 10.5, O)       # planter
    fill(grid, 11.0, 9.0, 12.0, 10.0, O)     # planter
    fill(grid, 0.0, 11.0, 15.0, 12.0, G)     # far grass verge
    return SceneSpec(
        scene_id="zara01",
        grid=SemanticGrid(origin=(0.0, 0.0), cell_size=CELL, labels=grid),
        rules=SceneRules(forbidden=frozenset(), goal_tolerance=0.5, time_limit=2000),
        points={
            "west_entry": (0.8, 5.0),
            "east_entry": (14.2, 5.0),
            "shop_door": (7.0, 1.2),
        },
    )


def make_eth_hotel() -> SceneSpec:
    # Sidewalk along a tram street: grass verge, tree line, walkway, tracks.
    grid = np.full((48, 72), S, dtype=np.int8)
    fill(grid, 0.0, 10.0, 18.0, 12.0, G)     # grass at the top
    for tx in (2.5, 6.5, 10.5, 14.5):        # tree line
        fill(grid, tx, 9.0, tx + 0.5, 9.5, O)
    fill(grid, 0.0, 0.0, 18.0, 3.0, R)       # tram tracks
    fill(grid, 7.0, 3.0, 9.0, 4.0, O)        # shelter
    return SceneSpec(
        scene_id="eth_hotel",
        grid=SemanticGrid(origin=(0.0, 0.0), cell_size=CELL, labels=grid),
        rules=SceneRules(forbidden=frozenset(), goal_tolerance=0.5, time_limit=2000),
        points={
            "west_entry": (0.8, 6.0),
            "east_entry": (17.2, 6.0),
            "shelter_front": (8.0, 4.6),
        },
    )


def make_hallway() -> SceneSpec:
    grid = np.full((32, 80), F, dtype=np.int8)
    fill(grid, 0.0, 0.0, 20.0, 1.0, O)
    fill(grid, 0.0, 7.0, 20.0, 8.0, O)
    return SceneSpec(
        scene_id="hallway",
        grid=SemanticGrid(origin=(0.0, 0.0), cell_size=CELL, labels=grid),
        rules=SceneRules(forbidden=frozenset(), goal_tolerance=0.5, time_limit=1500),
        points={"west_end": (1.5, 4.0), "east_end": (18.5, 4.0)},
    )


def make_intersection() -> SceneSpec:
    # Two crossing corridors with blocked corner quadrants.
    grid = np.full((80, 80), F, dtype=np.int8)
    for x0, y0 in ((0.0, 0.0), (13.0, 0.0), (0.0, 13.0), (13.0, 13.0)):
        fill(grid, x0, y0, x0 + 7.0, y0 + 7.0, O)
    return SceneSpec(
        scene_id="intersection",
        grid=SemanticGrid(origin=(0.0, 0.0), cell_size=CELL, labels=grid),
        rules=SceneRules(forbidden=frozenset(), goal_tolerance=0.5, time_limit=2000),
        points={
            "west_arm": (1.5, 10.0),
            "east_arm": (18.5, 10.0),
            "south_arm": (10.0, 1.5),
            "north_arm": (10.0, 18.5),
        },
    )


def make_crossing() -> SceneSpec:
    # Everyday street scene: sidewalks on both sides of a road with one
    # marked crosswalk; entering the road outside it violates the norm.
    grid = np.full((64, 96), S, dtype=np.int8)
    fill(grid, 0.0, 0.0, 24.0, 1.0, G)
    fill(grid, 0.0, 15.0, 24.0, 16.0, G)
    fill(grid, 0.0, 6.0, 24.0, 10.0, R)      # the road
    fill(grid, 10.5, 6.0, 15.5, 10.0, C)     # crosswalk
    fill(grid, 2.0, 12.5, 3.0, 13.5, O)      # kiosk (north side)
    fill(grid, 20.0, 2.5, 21.0, 3.5, O)      # kiosk (south side)
    return SceneSpec(
        scene_id="crossing",
        grid=SemanticGrid(origin=(0.0, 0.0), cell_size=CELL, labels=grid),
        rules=SceneRules(
            forbidden=frozenset({SemanticLabel.ROAD}), goal_tolerance=0.5, time_limit=3000
        ),
        points={
            "south_west": (5.0, 3.0),
            "south_mid": (10.0, 3.0),
            "north_east": (19.0, 13.0),
            "crosswalk_south": (13.0, 5.5),
            "crosswalk_north": (13.0, 10.5),
        },
    )


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for build in (make_zara01, make_eth_hotel, make_hallway, make_intersection, make_crossing):
        spec = build()
        path = OUT / f"{spec.scene_id}.scene"
        save_scene(spec, str(path))
        print(f"wrote {path} ({spec.grid.width}x{spec.grid.height} cells)")


if __name__ == "__main__":
    main()
