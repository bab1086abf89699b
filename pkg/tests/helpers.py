"""Shared test utilities: independent oracles and data builders.

Oracles here deliberately avoid the library code paths they check (plain
loops, brute-force enumeration) so tests compare two independent routes to
the same value.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from crowdskills import skills, trajdata
from crowdskills.trajdata import Trajectory, TrajectorySet

REPO_ROOT = Path(__file__).resolve().parents[1]
ANNOTATIONS = REPO_ROOT / "data" / "annotations"

TRAINING_SCENES = ("zara02", "univ", "eth")


def load_scene_trajectories(name: str, min_length: int = 40) -> TrajectorySet:
    text = (ANNOTATIONS / f"{name}.txt").read_text(encoding="utf-8")
    detections = trajdata.parse_annotations(text)
    tset = trajdata.resample(detections, source_fps=25.0, scene_id=name)
    return trajdata.filter_min_length(tset, min_length)


def canonical_training_segments(sets) -> list:
    segments = []
    for tset in sets:
        for traj in sorted(tset.trajectories, key=lambda t: t.agent_id):
            for seg in skills.segment(traj):
                heading = skills.estimate_heading(traj, seg.source_frame)
                segments.append(skills.canonicalize(seg, heading))
    return segments


def generate_codebook_gt(
    codebook: skills.SkillCodebook,
    skill_seq: list[int],
    start: tuple[float, float],
    agent_id: int = 1,
    start_frame: int = 0,
) -> Trajectory:
    """Chain skills into a trajectory whose decision-frame headings match
    what estimate_heading recovers, so label assignment is exact."""
    points = [np.asarray(start, dtype=np.float64)]
    for skill_id in skill_seq:
        positions = np.asarray(points).reshape(-1, 2)
        heading = skills.heading_from_positions(positions, len(positions) - 1)
        pose = (float(points[-1][0]), float(points[-1][1]), heading)
        world, _ = skills.execute_skill(pose, skill_id, codebook)
        points.extend(world)
    return Trajectory(
        agent_id=agent_id,
        start_frame=start_frame,
        fps=25.0,
        positions=np.asarray(points).reshape(-1, 2),
    )


def generate_simulator_gt(
    codebook: skills.SkillCodebook,
    skill_seq: list[int],
    start: tuple[float, float],
    heading: float = 0.0,
    agent_id: int = 1,
) -> Trajectory:
    """Chain skills with the simulator's own heading rule (execute_skill's
    final heading), so an episode replay reproduces the path exactly."""
    points = [np.asarray(start, dtype=np.float64)]
    pose = (float(start[0]), float(start[1]), heading)
    for skill_id in skill_seq:
        world, final_heading = skills.execute_skill(pose, skill_id, codebook)
        points.extend(world)
        pose = (float(world[-1][0]), float(world[-1][1]), final_heading)
    return Trajectory(
        agent_id=agent_id,
        start_frame=0,
        fps=25.0,
        positions=np.asarray(points).reshape(-1, 2),
    )


def turning_codebook(step: float = 0.06) -> skills.SkillCodebook:
    """Straight, gentle-left, gentle-right skills with non-stationary tails."""
    t = np.arange(1, 21)
    straight = np.column_stack([t * step, np.zeros(20)])

    def arc(turn_rad: float) -> np.ndarray:
        angles = np.linspace(0, turn_rad, 20)
        headings = np.cumsum(np.full(20, turn_rad / 20))
        dx = step * np.cos(headings)
        dy = step * np.sin(headings)
        return np.column_stack([np.cumsum(dx), np.cumsum(dy)])

    centroids = np.stack([straight, arc(math.radians(25)), arc(math.radians(-25))])
    return skills.SkillCodebook(k=3, window=20, centroids=centroids, fit_meta={})


def straight_trajectory(
    speed_per_frame: float,
    n_frames: int,
    start: tuple[float, float] = (0.0, 0.0),
    direction: tuple[float, float] = (1.0, 0.0),
    agent_id: int = 1,
    start_frame: int = 0,
) -> Trajectory:
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    steps = np.arange(n_frames)[:, None] * speed_per_frame * d[None, :]
    return Trajectory(
        agent_id=agent_id,
        start_frame=start_frame,
        fps=25.0,
        positions=np.asarray(start) + steps,
    )


def brute_force_dtw(a: np.ndarray, b: np.ndarray) -> float:
    """Exhaustive minimum over all monotone alignments, path-order summed."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = len(a), len(b)

    def cost(i: int, j: int) -> float:
        dx = a[i, 0] - b[j, 0]
        dy = a[i, 1] - b[j, 1]
        return math.sqrt(dx * dx + dy * dy)

    best = [math.inf]

    def walk(i: int, j: int, acc: float) -> None:
        acc = acc + cost(i, j)
        if i == n - 1 and j == m - 1:
            if acc < best[0]:
                best[0] = acc
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)

    walk(0, 0, 0.0)
    return best[0]


def naive_pair_counts(sequences: list[list[int]], k: int) -> np.ndarray:
    counts = np.zeros((k, k), dtype=np.int64)
    for seq in sequences:
        for idx in range(len(seq) - 1):
            counts[seq[idx], seq[idx + 1]] += 1
    return counts


def label_sequences(tset: TrajectorySet, codebook: skills.SkillCodebook) -> list[list[int]]:
    out = []
    for traj in sorted(tset.trajectories, key=lambda t: t.agent_id):
        seq = skills.label_trajectory(traj, codebook)
        if seq:
            out.append(seq)
    return out
