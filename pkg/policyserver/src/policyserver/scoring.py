"""Greedy skill scoring over serialized observations.

This mirrors the simulation harness's reference scoring for the wire
protocol, operation for operation, so both sides pick identical skills for
identical inputs (the conformance suite pins the agreement).  Keep any edit
in lockstep with the harness.

Score per skill: (goal-distance decrease) minus lam_forbidden times the
number of skill frames on a forbidden or unobserved patch cell, minus
lam_close times the number of frames with any neighbor (extrapolated at
constant velocity) closer than r_unsafe.  Best skill: lowest id with the
maximal score.
"""

from __future__ import annotations

import math

PATCH_SIZE = 16
PATCH_CELL = 0.25
DEFAULT_LAM_FORBIDDEN = 10.0
DEFAULT_LAM_CLOSE = 5.0
FORBIDDEN_CHECK_RADIUS = 0.3


def offset_hits_forbidden(u: float, v: float, patch, forbidden_codes) -> bool:
    """True when the offset is unobserved or near a forbidden patch sample."""
    r0 = PATCH_SIZE - 1 - int(math.floor(u / PATCH_CELL))
    c0 = int(math.floor(PATCH_SIZE / 2 - v / PATCH_CELL))
    if not (0 <= r0 < PATCH_SIZE and 0 <= c0 < PATCH_SIZE):
        return True
    radius_sq = FORBIDDEN_CHECK_RADIUS * FORBIDDEN_CHECK_RADIUS
    for r in (r0 - 1, r0, r0 + 1):
        if not 0 <= r < PATCH_SIZE:
            continue
        uc = (PATCH_SIZE - r - 0.5) * PATCH_CELL
        for c in (c0 - 1, c0, c0 + 1):
            if not 0 <= c < PATCH_SIZE:
                continue
            vc = (PATCH_SIZE / 2 - c - 0.5) * PATCH_CELL
            du = u - uc
            dv = v - vc
            if du * du + dv * dv <= radius_sq and patch[r * PATCH_SIZE + c] in forbidden_codes:
                return True
    return False


def score_skills(
    observation: dict,
    centroids: list,
    forbidden_codes: frozenset[int],
    lam_forbidden: float = DEFAULT_LAM_FORBIDDEN,
    lam_close: float = DEFAULT_LAM_CLOSE,
    r_unsafe: float = 0.6,
    fps: float = 25.0,
) -> list[float]:
    """Score every skill centroid against one wire-format observation."""
    grx = float(observation["goal_relative"][0])
    gry = float(observation["goal_relative"][1])
    start_dist = math.hypot(grx, gry)
    neighbors = observation.get("neighbors", [])
    patch = observation["semantic_patch"]
    r_unsafe_sq = r_unsafe * r_unsafe

    scores: list[float] = []
    for centroid in centroids:
        end_x = float(centroid[-1][0])
        end_y = float(centroid[-1][1])
        progress = start_dist - math.hypot(grx - end_x, gry - end_y)

        forbidden_frames = 0
        close_frames = 0
        for t, point in enumerate(centroid, start=1):
            px = float(point[0])
            py = float(point[1])
            if offset_hits_forbidden(px, py, patch, forbidden_codes):
                forbidden_frames += 1
            dt = t / fps
            for nb in neighbors:
                nx = float(nb[0]) + float(nb[2]) * dt
                ny = float(nb[1]) + float(nb[3]) * dt
                dx = px - nx
                dy = py - ny
                if dx * dx + dy * dy < r_unsafe_sq:
                    close_frames += 1
                    break
        scores.append(progress - lam_forbidden * forbidden_frames - lam_close * close_frames)
    return scores


def best_skill(scores: list[float]) -> int:
    """Lowest index with the maximal score."""
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best
