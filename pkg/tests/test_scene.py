import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdskills.scene import (
    CHAR_TO_LABEL,
    SceneFormatError,
    SceneRules,
    SceneSpec,
    SemanticLabel,
    is_forbidden,
    label_at,
    label_histogram,
    load_bundled_scene,
    obstacle_clearance_field,
    parse_scene,
    render_scene,
)

HEADER = {
    "scene_id": "toy",
    "origin": [0.0, 0.0],
    "cell_size": 0.25,
    "forbidden": ["road"],
    "goal_tolerance": 0.5,
    "time_limit": 100,
    "points": {},
}


def scene_text(rows: list[str], header: dict | None = None) -> str:
    return json.dumps(header or HEADER) + "\n---\n" + "\n".join(rows) + "\n"


class TestParse:
    def test_2x2_all_sidewalk(self):
        spec = parse_scene(scene_text(["SS", "SS"]))
        assert spec.grid.width == 2 and spec.grid.height == 2
        assert label_histogram(spec) == {"sidewalk": 4}

    def test_unknown_character_names_cell(self):
        with pytest.raises(SceneFormatError, match="row 1, column 1"):
            parse_scene(scene_text(["SS", "SX"]))

    def test_ragged_rows_rejected(self):
        with pytest.raises(SceneFormatError, match="length"):
            parse_scene(scene_text(["SS", "S"]))

    def test_missing_separator(self):
        with pytest.raises(SceneFormatError, match="separator"):
            parse_scene(json.dumps(HEADER) + "\nSS\n")

    def test_missing_header_keys(self):
        header = dict(HEADER)
        del header["time_limit"]
        with pytest.raises(SceneFormatError, match="time_limit"):
            parse_scene(scene_text(["SS"], header))

    def test_point_inside_obstacle_rejected(self):
        header = dict(HEADER)
        header["points"] = {"bad": [0.1, 0.1]}
        # bottom text row is the low-y row; its first cell is the obstacle
        with pytest.raises(SceneFormatError, match="bad"):
            parse_scene(scene_text(["SS", "#S"], header))

    def test_rows_are_top_down(self):
        # first text row is the top of the map (highest y)
        spec = parse_scene(scene_text(["RR", "SS"]))
        assert label_at(spec.grid, (0.1, 0.1)) is SemanticLabel.SIDEWALK
        assert label_at(spec.grid, (0.1, 0.4)) is SemanticLabel.ROAD

    def test_bundled_histogram_matches_character_count(self):
        # oracle: independent character count over the grid block
        from crowdskills.scene import bundled_scene_path

        path = bundled_scene_path("crossing")
        text = open(path).read()
        grid_block = text.split("\n---\n", 1)[1]
        counts: dict[str, int] = {}
        for ch in grid_block:
            if ch in CHAR_TO_LABEL:
                label = CHAR_TO_LABEL[ch].value
                counts[label] = counts.get(label, 0) + 1
        spec = load_bundled_scene("crossing")
        assert label_histogram(spec) == counts

    def test_all_bundled_scenes_load(self):
        for name in ("zara01", "eth_hotel", "hallway", "intersection", "crossing"):
            spec = load_bundled_scene(name)
            assert spec.scene_id == name
            assert SemanticLabel.OBSTACLE in spec.rules.forbidden
            assert SemanticLabel.OUT_OF_BOUNDS in spec.rules.forbidden


class TestLabelAt:
    @pytest.fixture
    def grid(self):
        spec = parse_scene(scene_text(["CR", "SG"]))
        return spec.grid

    def test_origin_belongs_to_cell_00(self, grid):
        assert label_at(grid, (0.0, 0.0)) is SemanticLabel.SIDEWALK

    def test_far_point_out_of_bounds(self, grid):
        assert label_at(grid, (1000.0, 0.0)) is SemanticLabel.OUT_OF_BOUNDS

    def test_interior_boundary_belongs_to_lower_cell(self, grid):
        # x = 0.25 is the boundary between columns 0 and 1
        assert label_at(grid, (0.25, 0.1)) is SemanticLabel.SIDEWALK
        assert label_at(grid, (0.26, 0.1)) is SemanticLabel.GRASS

    def test_far_edge_still_inside(self, grid):
        assert label_at(grid, (0.5, 0.5)) is SemanticLabel.ROAD

    def test_random_points_match_floor_oracle(self):
        # oracle: independent floor-division index computation
        rng = np.random.default_rng(0)
        spec = load_bundled_scene("crossing")
        grid = spec.grid
        for _ in range(10_000):
            x = float(rng.uniform(-5, 30))
            y = float(rng.uniform(-5, 20))
            ix = math.floor((x - grid.origin[0]) / grid.cell_size)
            iy = math.floor((y - grid.origin[1]) / grid.cell_size)
            if 0 <= ix < grid.width and 0 <= iy < grid.height:
                expected = grid.label_at_cell(ix, iy)
            else:
                expected = SemanticLabel.OUT_OF_BOUNDS
            assert label_at(grid, (x, y)) is expected

    @settings(max_examples=80, deadline=None)
    @given(x=st.floats(-1e6, 1e6, allow_nan=False), y=st.floats(-1e6, 1e6, allow_nan=False))
    def test_total_over_finite_points(self, x, y):
        spec = parse_scene(scene_text(["CR", "SG"]))
        assert label_at(spec.grid, (x, y)) in SemanticLabel


class TestForbidden:
    def test_crosswalk_not_forbidden(self):
        spec = parse_scene(scene_text(["CR", "SG"]))
        assert not is_forbidden(spec, (0.1, 0.4))  # crosswalk cell

    def test_road_forbidden(self):
        spec = parse_scene(scene_text(["CR", "SG"]))
        assert is_forbidden(spec, (0.4, 0.4))

    def test_outside_always_forbidden(self):
        spec = parse_scene(scene_text(["CR", "SG"]))
        assert is_forbidden(spec, (-10.0, 0.0))

    def test_monotone_under_rule_growth(self):
        base = parse_scene(scene_text(["CR", "SG"]))
        bigger = SceneSpec(
            scene_id="toy",
            grid=base.grid,
            rules=SceneRules(
                forbidden=base.rules.forbidden | {SemanticLabel.GRASS},
                goal_tolerance=base.rules.goal_tolerance,
                time_limit=base.rules.time_limit,
            ),
        )
        rng = np.random.default_rng(1)
        for _ in range(500):
            p = (float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
            if is_forbidden(base, p):
                assert is_forbidden(bigger, p)

    def test_obstacle_oob_always_in_forbidden(self):
        rules = SceneRules(forbidden=frozenset())
        assert SemanticLabel.OBSTACLE in rules.forbidden
        assert SemanticLabel.OUT_OF_BOUNDS in rules.forbidden


class TestRoundTrip:
    def test_render_parse_identity(self):
        spec = load_bundled_scene("zara01")
        text = render_scene(spec)
        again = parse_scene(text)
        np.testing.assert_array_equal(again.grid.labels, spec.grid.labels)
        assert again.rules.forbidden == spec.rules.forbidden
        assert again.points == spec.points
        assert render_scene(again) == text


class TestClearanceField:
    def test_zero_inside_obstacle(self):
        spec = parse_scene(scene_text(["S#", "SS"]))
        field = obstacle_clearance_field(spec.grid)
        assert field[1, 1] == 0.0
        assert field[0, 0] > 0.0

    def test_no_obstacles_infinite(self):
        spec = parse_scene(scene_text(["SS", "SS"]))
        field = obstacle_clearance_field(spec.grid)
        assert np.isinf(field).all()

    def test_distance_scales_with_cell_size(self):
        spec = parse_scene(scene_text(["#S", "SS"]))
        field = obstacle_clearance_field(spec.grid)
        assert field[0, 0] == pytest.approx(0.25)  # one cell away from (1,1)... row 0 col 0
