"""Motion-skill extraction, clustering, transitions, and execution.

A motion skill is a 20-frame trajectory primitive expressed in the agent's
canonical frame: cumulative displacements from the decision-frame position,
rotated so the decision-frame heading lies along +x.  Skills are obtained by
K-means clustering of canonicalized segments cut from fixed-rate
trajectories; executing a skill rotates and translates its centroid back
into the world frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .trajdata import Trajectory

WINDOW = 20
DEFAULT_K = 64
HEADING_WINDOW = 5  # frames of backward displacement used for heading
STATIONARY_EPS = 0.02  # m; displacements below this give no usable heading
KMEANS_TOL = 1e-6
KMEANS_MAX_ITER = 300
CODEBOOK_FORMAT_VERSION = 1
TRANSITIONS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MotionSegment:
    """World-frame future segment: frames t+1 .. t+W after decision frame t."""

    source_agent: int
    source_frame: int
    origin: tuple[float, float]  # position at the decision frame
    positions: np.ndarray  # (W, 2)


@dataclass(frozen=True)
class CanonicalSegment:
    """Agent-frame cumulative displacements, one per future frame."""

    displacements: np.ndarray  # (W, 2)


@dataclass
class SkillCodebook:
    k: int
    window: int
    centroids: np.ndarray  # (k, W, 2) canonical displacements
    fit_meta: dict

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("codebook needs k >= 2")
        if self.centroids.shape != (self.k, self.window, 2):
            raise ValueError(f"centroid array shape {self.centroids.shape} != ({self.k}, {self.window}, 2)")
        if not np.isfinite(self.centroids).all():
            raise ValueError("non-finite centroid values")

    def flat(self) -> np.ndarray:
        """Centroids as (k, 2W) vectors for distance computations."""
        return self.centroids.reshape(self.k, -1)


@dataclass
class TransitionMatrix:
    counts: np.ndarray  # (k, k) int64
    probs: np.ndarray  # (k, k) float64, row-stochastic

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    def diagonal_mean(self) -> float:
        return float(np.mean(np.diag(self.probs)))

    def offdiagonal_mean(self) -> float:
        k = self.k
        off = self.probs[~np.eye(k, dtype=bool)]
        return float(off.mean())


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def segment(traj: Trajectory, window: int = WINDOW, stride: int = WINDOW) -> list[MotionSegment]:
    """Cut future motion segments at decision frames start, start+stride, ...

    A decision at local index t yields the points t+1 .. t+window, so the
    trajectory must have at least window+1 frames; trailing partial windows
    are dropped.
    """
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    n = len(traj.positions)
    segments = []
    for t in range(0, n - window, stride):
        segments.append(
            MotionSegment(
                source_agent=traj.agent_id,
                source_frame=traj.start_frame + t,
                origin=(float(traj.positions[t, 0]), float(traj.positions[t, 1])),
                positions=traj.positions[t + 1 : t + 1 + window].copy(),
            )
        )
    return segments


def canonicalize(seg: MotionSegment, heading: float) -> CanonicalSegment:
    """Translate the decision-frame position to the origin, rotate -heading."""
    if not math.isfinite(heading):
        raise ValueError("heading must be finite")
    rel = seg.positions - np.asarray(seg.origin)
    return CanonicalSegment(displacements=rel @ rotation(-heading).T)


def estimate_heading(traj: Trajectory, frame: int) -> float:
    """Heading from displacement over the preceding HEADING_WINDOW frames.

    Near-stationary displacements (< STATIONARY_EPS) fall back to the most
    recent non-degenerate heading earlier in the trajectory, then to 0.
    """
    idx = traj.frame_index(frame)
    return heading_from_positions(traj.positions, idx)


def heading_from_positions(positions: np.ndarray, idx: int) -> float:
    """estimate_heading on a bare (n, 2) position array at index idx."""
    for f in range(idx, -1, -1):
        back = max(0, f - HEADING_WINDOW)
        dx = positions[f, 0] - positions[back, 0]
        dy = positions[f, 1] - positions[back, 1]
        if math.hypot(dx, dy) >= STATIONARY_EPS:
            return math.atan2(dy, dx)
    return 0.0


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding over rows of x."""
    n = len(x)
    centroids = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = x[first]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with chosen centroids
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r))
            idx = min(idx, n - 1)
        centroids[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centroids[j]) ** 2, axis=1))
    return centroids


def fit_codebook(
    segments: list[CanonicalSegment],
    k: int = DEFAULT_K,
    seed: int = 0,
    window: int = WINDOW,
    max_iter: int = KMEANS_MAX_ITER,
    tol: float = KMEANS_TOL,
) -> SkillCodebook:
    """Lloyd's algorithm on flattened displacement vectors, k-means++ init.

    Deterministic given (segments, k, seed).  Converges when the largest
    centroid shift drops below ``tol`` meters or after ``max_iter`` rounds.
    Empty clusters are re-seeded with the point farthest from its centroid.
    """
    if len(segments) < k:
        raise ValueError(f"need at least k={k} segments, got {len(segments)}")
    x = np.stack([s.displacements.reshape(-1) for s in segments]).astype(np.float64)
    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeans_pp_init(x, k, rng)

    iterations = 0
    for iterations in range(1, max_iter + 1):
        labels, sqd = _kernels.assign_points(x, centroids)
        new_centroids = np.zeros_like(centroids)
        counts = np.bincount(labels, minlength=k)
        for dim in range(x.shape[1]):
            new_centroids[:, dim] = np.bincount(labels, weights=x[:, dim], minlength=k)
        nonzero = counts > 0
        new_centroids[nonzero] /= counts[nonzero, None]
        for j in np.flatnonzero(~nonzero):
            far = int(np.argmax(sqd))
            new_centroids[j] = x[far]
            sqd[far] = 0.0
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break
    labels, sqd = _kernels.assign_points(x, centroids)
    return SkillCodebook(
        k=k,
        window=window,
        centroids=centroids.reshape(k, window, 2),
        fit_meta={"seed": int(seed), "iterations": int(iterations), "inertia": float(sqd.sum())},
    )


def assign(seg: CanonicalSegment, codebook: SkillCodebook) -> int:
    """Nearest centroid by squared Euclidean distance; ties to the lowest id."""
    x = seg.displacements.reshape(1, -1).astype(np.float64)
    labels, _ = _kernels.assign_points(np.ascontiguousarray(x), np.ascontiguousarray(codebook.flat()))
    return int(labels[0])


def assign_many(segments: list[CanonicalSegment], codebook: SkillCodebook) -> np.ndarray:
    if not segments:
        return np.empty(0, dtype=np.int64)
    x = np.ascontiguousarray(np.stack([s.displacements.reshape(-1) for s in segments]).astype(np.float64))
    labels, _ = _kernels.assign_points(x, np.ascontiguousarray(codebook.flat()))
    return labels


def estimate_transitions(label_sequences: list[list[int]], k: int) -> TransitionMatrix:
    """Empirical consecutive-pair counts within sequences, row-normalized.

    Rows with zero observations become uniform.
    """
    counts = np.zeros((k, k), dtype=np.int64)
    for seq in label_sequences:
        for a, b in zip(seq, seq[1:]):
            if not (0 <= a < k and 0 <= b < k):
                raise ValueError(f"label out of range for k={k}: ({a}, {b})")
            counts[a, b] += 1
    probs = np.empty((k, k), dtype=np.float64)
    row_sums = counts.sum(axis=1)
    for i in range(k):
        if row_sums[i] > 0:
            probs[i] = counts[i] / row_sums[i]
        else:
            probs[i] = 1.0 / k
    return TransitionMatrix(counts=counts, probs=probs)


def execute_skill(
    pose: tuple[float, float, float],
    skill_id: int,
    codebook: SkillCodebook,
) -> tuple[np.ndarray, float]:
    """Play a skill centroid from a world pose (x, y, heading).

    Returns the produced world positions (W, 2) and the final heading,
    estimated from the displacement over the last HEADING_WINDOW produced
    points with the same degenerate fallback as estimate_heading (keeping
    the starting heading when the whole segment is near-stationary).
    """
    if not 0 <= skill_id < codebook.k:
        raise ValueError(f"skill_id {skill_id} out of range for k={codebook.k}")
    x, y, heading = pose
    world = codebook.centroids[skill_id] @ rotation(heading).T + np.array([x, y])
    final_heading = _final_heading(np.array([x, y]), world, heading)
    return world, final_heading


def _final_heading(start: np.ndarray, produced: np.ndarray, start_heading: float) -> float:
    path = np.vstack([start[None, :], produced])
    n = len(path)
    for f in range(n - 1, 0, -1):
        back = max(0, f - HEADING_WINDOW)
        dx = path[f, 0] - path[back, 0]
        dy = path[f, 1] - path[back, 1]
        if math.hypot(dx, dy) >= STATIONARY_EPS:
            return math.atan2(dy, dx)
    return start_heading


def label_trajectory(traj: Trajectory, codebook: SkillCodebook, stride: int | None = None) -> list[int]:
    """Skill labels for consecutive decision frames of one trajectory."""
    stride = codebook.window if stride is None else stride
    segs = segment(traj, window=codebook.window, stride=stride)
    if not segs:
        return []
    canon = [canonicalize(s, estimate_heading(traj, s.source_frame)) for s in segs]
    return [int(lbl) for lbl in assign_many(canon, codebook)]


def save_codebook(codebook: SkillCodebook, path: str) -> None:
    payload = {
        "format_version": CODEBOOK_FORMAT_VERSION,
        "k": codebook.k,
        "window": codebook.window,
        "centroids": [[[float(v) for v in pt] for pt in c] for c in codebook.centroids],
        "fit_meta": codebook.fit_meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_codebook(path: str) -> SkillCodebook:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CODEBOOK_FORMAT_VERSION:
        raise ValueError(f"unsupported codebook format_version {payload.get('format_version')}")
    return SkillCodebook(
        k=int(payload["k"]),
        window=int(payload["window"]),
        centroids=np.array(payload["centroids"], dtype=np.float64),
        fit_meta=dict(payload["fit_meta"]),
    )


def save_transitions(tm: TransitionMatrix, path: str) -> None:
    payload = {
        "format_version": TRANSITIONS_FORMAT_VERSION,
        "k": tm.k,
        "counts": tm.counts.tolist(),
        "probs": tm.probs.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_transitions(path: str) -> TransitionMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != TRANSITIONS_FORMAT_VERSION:
        raise ValueError(f"unsupported transitions format_version {payload.get('format_version')}")
    tm = TransitionMatrix(
        counts=np.array(payload["counts"], dtype=np.int64),
        probs=np.array(payload["probs"], dtype=np.float64),
    )
    if tm.counts.shape != (payload["k"], payload["k"]):
        raise ValueError("transition matrix shape mismatch")
    return tm
