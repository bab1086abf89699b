import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import helpers
from crowdskills import skills
from crowdskills.skills import (
    CanonicalSegment,
    MotionSegment,
    assign,
    canonicalize,
    estimate_heading,
    estimate_transitions,
    execute_skill,
    fit_codebook,
    load_codebook,
    load_transitions,
    rotation,
    save_codebook,
    save_transitions,
    segment,
)
from crowdskills.trajdata import Trajectory


class TestSegment:
    def test_61_frames_gives_3_segments(self):
        traj = helpers.straight_trajectory(0.05, 61)
        segs = segment(traj, window=20, stride=20)
        assert [s.source_frame for s in segs] == [0, 20, 40]

    def test_20_frames_too_short(self):
        traj = helpers.straight_trajectory(0.05, 20)
        assert segment(traj) == []

    def test_21_frames_gives_one(self):
        traj = helpers.straight_trajectory(0.05, 21)
        assert len(segment(traj)) == 1

    def test_count_matches_per_agent_arithmetic(self, zara01_gt):
        # oracle: sum over agents of floor((len-1)/20)
        total = sum(len(segment(t)) for t in zara01_gt.trajectories)
        expected = sum((len(t) - 1) // 20 for t in zara01_gt.trajectories)
        assert total == expected

    def test_stride_one(self):
        traj = helpers.straight_trajectory(0.05, 25)
        segs = segment(traj, stride=1)
        assert [s.source_frame for s in segs] == [0, 1, 2, 3, 4]


class TestCanonicalize:
    def test_straight_walk_heading_zero(self):
        traj = helpers.straight_trajectory(0.05, 21)
        seg = segment(traj)[0]
        canon = canonicalize(seg, 0.0)
        expected = np.column_stack([np.arange(1, 21) * 0.05, np.zeros(20)])
        np.testing.assert_allclose(canon.displacements, expected, atol=1e-12)

    def test_rotation_symmetry(self):
        # +y walk canonicalized with heading pi/2 equals +x walk with heading 0
        traj_y = helpers.straight_trajectory(0.05, 21, direction=(0.0, 1.0))
        seg_y = segment(traj_y)[0]
        canon_y = canonicalize(seg_y, math.pi / 2)
        traj_x = helpers.straight_trajectory(0.05, 21)
        canon_x = canonicalize(segment(traj_x)[0], 0.0)
        np.testing.assert_allclose(canon_y.displacements, canon_x.displacements, atol=1e-12)

    def test_execute_inverts_canonicalize(self, codebook16):
        pose = (3.0, -2.0, 0.7)
        world, _ = execute_skill(pose, 5, codebook16)
        seg = MotionSegment(source_agent=0, source_frame=0, origin=(pose[0], pose[1]), positions=world)
        canon = canonicalize(seg, pose[2])
        np.testing.assert_allclose(canon.displacements, codebook16.centroids[5], atol=1e-9)


class TestEstimateHeading:
    def test_due_north(self):
        traj = helpers.straight_trajectory(0.05, 30, direction=(0.0, 1.0))
        assert estimate_heading(traj, 10) == pytest.approx(math.pi / 2)

    def test_stationary_from_start_returns_zero(self):
        traj = helpers.straight_trajectory(0.0, 30)
        assert estimate_heading(traj, 15) == 0.0

    def test_stationary_tail_reuses_last_heading(self):
        moving = np.column_stack([np.zeros(20), np.arange(20) * 0.05])  # walks +y
        frozen = np.repeat(moving[-1:], 10, axis=0)
        traj = Trajectory(1, 0, 25.0, np.vstack([moving, frozen]))
        assert estimate_heading(traj, 29) == pytest.approx(math.pi / 2)

    def test_circular_walker_tangent(self):
        # oracle: analytic tangent, tolerance 2 * (2.5 frames * omega)
        radius = 3.0
        omega = 0.02  # rad per frame
        frames = np.arange(200)
        positions = radius * np.column_stack([np.cos(omega * frames), np.sin(omega * frames)])
        traj = Trajectory(1, 0, 25.0, positions)
        tol = 2 * (2.5 * omega)
        for f in range(10, 200, 17):
            expected = omega * f + math.pi / 2  # tangent direction
            got = estimate_heading(traj, f)
            diff = (got - expected + math.pi) % (2 * math.pi) - math.pi
            assert abs(diff) < tol


class TestFitCodebook:
    def test_three_point_clusters_recovered_exactly(self):
        rng = np.random.default_rng(0)
        protos = [rng.normal(size=(20, 2)) for _ in range(3)]
        segs = [CanonicalSegment(displacements=p.copy()) for p in protos for _ in range(10)]
        cb = fit_codebook(segs, k=3, seed=1)
        got = {tuple(np.round(c.reshape(-1), 12)) for c in cb.centroids}
        want = {tuple(np.round(p.reshape(-1), 12)) for p in protos}
        assert got == want

    def test_deterministic_given_seed(self, training_segments):
        a = fit_codebook(training_segments[:500], k=8, seed=42)
        b = fit_codebook(training_segments[:500], k=8, seed=42)
        np.testing.assert_array_equal(a.centroids, b.centroids)
        assert a.fit_meta == b.fit_meta

    def test_noisy_prototype_recovery(self):
        # oracle: brute-force assignment of fitted centroids to known prototypes
        rng = np.random.default_rng(7)
        protos = [rng.uniform(-1, 1, size=(20, 2)) for _ in range(8)]
        segs = []
        for p in protos:
            for _ in range(200):
                segs.append(CanonicalSegment(displacements=p + rng.normal(0, 0.01, size=(20, 2))))
        cb = fit_codebook(segs, k=8, seed=5)
        sigma_bound = 3 * 0.01 / math.sqrt(200) * math.sqrt(40)
        used = set()
        for c in cb.centroids:
            dists = [np.linalg.norm((c - p).reshape(-1)) for p in protos]
            j = int(np.argmin(dists))
            assert j not in used
            used.add(j)
            assert dists[j] < sigma_bound

    def test_too_few_segments(self):
        with pytest.raises(ValueError):
            fit_codebook([CanonicalSegment(displacements=np.zeros((20, 2)))], k=2)

    def test_inertia_decreases_with_k(self, training_segments):
        sample = training_segments[:2000]
        inertia32 = fit_codebook(sample, k=32, seed=0).fit_meta["inertia"]
        inertia64 = fit_codebook(sample, k=64, seed=0).fit_meta["inertia"]
        assert inertia64 <= inertia32


class TestAssign:
    def test_exact_centroid(self, codebook16):
        seg = CanonicalSegment(displacements=codebook16.centroids[11].copy())
        assert assign(seg, codebook16) == 11

    def test_tie_breaks_low_id(self):
        c0 = np.zeros((20, 2))
        c1 = np.ones((20, 2))
        cb = skills.SkillCodebook(k=2, window=20, centroids=np.stack([c0, c1]), fit_meta={})
        midpoint = CanonicalSegment(displacements=np.full((20, 2), 0.5))
        assert assign(midpoint, cb) == 0

    def test_matches_exhaustive_scan(self, codebook64):
        # oracle: brute-force distance loop over all centroids
        rng = np.random.default_rng(3)
        flat = codebook64.flat()
        for _ in range(100):
            seg = CanonicalSegment(displacements=rng.uniform(-1.5, 1.5, size=(20, 2)))
            x = seg.displacements.reshape(-1)
            dists = [float(np.sum((x - c) ** 2)) for c in flat]
            assert assign(seg, codebook64) == int(np.argmin(dists))

    @settings(max_examples=30, deadline=None)
    @given(
        angle=st.floats(-math.pi, math.pi, allow_nan=False),
        tx=st.floats(-50, 50, allow_nan=False),
        ty=st.floats(-50, 50, allow_nan=False),
        skill=st.integers(0, 15),
    )
    def test_pose_invariance(self, codebook16, angle, tx, ty, skill):
        # assign(canonicalize(.)) does not depend on the placement pose
        world, _ = execute_skill((tx, ty, angle), skill, codebook16)
        seg = MotionSegment(0, 0, (tx, ty), world)
        assert assign(canonicalize(seg, angle), codebook16) == skill


class TestTransitions:
    def test_single_repeating_sequence(self):
        tm = estimate_transitions([[2, 2, 2, 2]], k=4)
        assert tm.probs[2][2] == 1.0
        assert tm.counts[2][2] == 3

    def test_two_sequences(self):
        tm = estimate_transitions([[0, 1], [1, 0]], k=2)
        assert tm.probs[0][1] == 1.0
        assert tm.probs[1][0] == 1.0

    def test_no_cross_sequence_pairs(self):
        tm = estimate_transitions([[0], [1]], k=2)
        assert tm.counts.sum() == 0

    def test_zero_rows_uniform(self):
        tm = estimate_transitions([[0, 0]], k=4)
        np.testing.assert_allclose(tm.probs[3], [0.25] * 4)

    def test_rows_sum_to_one(self, codebook64, training_sets):
        seqs = [s for ts in training_sets for s in helpers.label_sequences(ts, codebook64)]
        tm = estimate_transitions(seqs, k=64)
        np.testing.assert_allclose(tm.probs.sum(axis=1), np.ones(64), atol=1e-9)

    def test_counts_match_naive_oracle(self, codebook64, training_sets):
        seqs = [s for ts in training_sets for s in helpers.label_sequences(ts, codebook64)]
        tm = estimate_transitions(seqs, k=64)
        np.testing.assert_array_equal(tm.counts, helpers.naive_pair_counts(seqs, 64))

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            estimate_transitions([[0, 7]], k=4)


class TestExecuteSkill:
    def test_identity_pose(self, codebook16):
        world, _ = execute_skill((0.0, 0.0, 0.0), 4, codebook16)
        np.testing.assert_allclose(world, codebook16.centroids[4], atol=1e-12)

    def test_heading_pi_mirrors(self, codebook16):
        world, _ = execute_skill((0.0, 0.0, math.pi), 4, codebook16)
        expected = codebook16.centroids[4] @ rotation(math.pi).T
        np.testing.assert_allclose(world, expected, atol=1e-12)

    def test_invalid_skill(self, codebook16):
        with pytest.raises(ValueError):
            execute_skill((0, 0, 0), 16, codebook16)

    def test_round_trip_all_skills(self, codebook64):
        # oracle: canonicalize(execute(pose, id)) re-assigns to id
        rng = np.random.default_rng(11)
        for skill_id in range(codebook64.k):
            pose = (float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)), float(rng.uniform(-math.pi, math.pi)))
            world, _ = execute_skill(pose, skill_id, codebook64)
            seg = MotionSegment(0, 0, (pose[0], pose[1]), world)
            assert assign(canonicalize(seg, pose[2]), codebook64) == skill_id

    def test_respects_step_bound_when_centroid_does(self, codebook64):
        bound = 3.0 / 25.0 + 1e-9
        for skill_id in range(codebook64.k):
            c = codebook64.centroids[skill_id]
            steps_c = np.linalg.norm(np.diff(np.vstack([[0, 0], c]), axis=0), axis=1)
            if (steps_c <= bound).all():
                world, _ = execute_skill((1.0, 2.0, 0.5), skill_id, codebook64)
                steps_w = np.linalg.norm(np.diff(np.vstack([[1.0, 2.0], world]), axis=0), axis=1)
                assert (steps_w <= bound + 1e-12).all()

    def test_zero_motion_keeps_heading(self):
        cb = skills.SkillCodebook(
            k=2, window=20,
            centroids=np.stack([np.zeros((20, 2)), np.ones((20, 2))]),
            fit_meta={},
        )
        _, heading = execute_skill((0.0, 0.0, 1.234), 0, cb)
        assert heading == 1.234


class TestCodebookIO:
    def test_round_trip(self, tmp_path, codebook16):
        path = tmp_path / "cb.json"
        save_codebook(codebook16, str(path))
        loaded = load_codebook(str(path))
        assert loaded.k == codebook16.k
        np.testing.assert_array_equal(loaded.centroids, codebook16.centroids)
        assert loaded.fit_meta == codebook16.fit_meta

    def test_transitions_round_trip(self, tmp_path):
        tm = estimate_transitions([[0, 1, 1, 0]], k=3)
        path = tmp_path / "tm.json"
        save_transitions(tm, str(path))
        loaded = load_transitions(str(path))
        np.testing.assert_array_equal(loaded.counts, tm.counts)
        np.testing.assert_allclose(loaded.probs, tm.probs)

    def test_version_check(self, tmp_path, codebook16):
        path = tmp_path / "cb.json"
        save_codebook(codebook16, str(path))
        import json

        payload = json.loads(path.read_text())
        payload["format_version"] = 99
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError, match="format_version"):
            load_codebook(str(path))
