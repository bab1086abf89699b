"""Raw pedestrian annotation ingestion and fixed-rate trajectory resampling.

Raw annotation files are whitespace-separated text with one detection per
row.  Two layouts are supported:

* ``tsv_frame_id_xy``: columns ``frame agent_id x y``
* ``obsmat``: the 8-column observation-matrix layout
  ``frame agent_id x z y vx vz vy`` (positions in columns 2 and 4)

Detection times are ``frame / source_fps`` where ``source_fps`` is the rate
of the frame-number clock (annotation files numbered on a 25 fps video
clock use ``source_fps=25`` even when only every Nth frame is annotated).
Resampling linearly interpolates each agent onto a uniform target-rate
timeline, splitting at observation gaps longer than ``GAP_SPLIT_S`` seconds
so occlusions do not become fabricated straight-line motion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

TARGET_FPS = 25.0
V_MAX = 3.0  # m/s validation bound for per-frame displacements
GAP_SPLIT_S = 2.0
SPLIT_ID_BASE = 1000  # synthetic id for split part p of agent a: a * base + p

FORMATS = ("tsv_frame_id_xy", "obsmat")


class AnnotationParseError(ValueError):
    """Malformed annotation row; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AnnotationValidationError(ValueError):
    """Structurally valid file violating an annotation invariant."""


@dataclass(frozen=True)
class RawDetection:
    frame: int
    agent_id: int
    x: float
    y: float


@dataclass
class Trajectory:
    """A single agent's path at a uniform frame rate, world-frame meters."""

    agent_id: int
    start_frame: int
    fps: float
    positions: np.ndarray  # (n, 2) float64

    def __len__(self) -> int:
        return len(self.positions)

    def frame_index(self, frame: int) -> int:
        """Index into positions for an absolute frame number."""
        idx = frame - self.start_frame
        if idx < 0 or idx >= len(self.positions):
            raise IndexError(f"frame {frame} outside trajectory of agent {self.agent_id}")
        return idx

    def position_at(self, frame: int) -> np.ndarray:
        return self.positions[self.frame_index(frame)]

    def covers(self, frame: int, span: int = 0) -> bool:
        """True when frames [frame, frame + span] all lie inside the trajectory."""
        return self.start_frame <= frame and frame + span <= self.end_frame

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.positions) - 1


@dataclass
class TrajectorySet:
    scene_id: str
    trajectories: list[Trajectory]
    dropped_single_detection: int = 0
    split_count: int = 0

    def __post_init__(self) -> None:
        ids = [t.agent_id for t in self.trajectories]
        if len(ids) != len(set(ids)):
            raise AnnotationValidationError("duplicate agent_ids in trajectory set")
        fps = {t.fps for t in self.trajectories}
        if len(fps) > 1:
            raise AnnotationValidationError(f"mixed frame rates in trajectory set: {sorted(fps)}")

    @property
    def frame_range(self) -> tuple[int, int]:
        if not self.trajectories:
            return (0, 0)
        return (
            min(t.start_frame for t in self.trajectories),
            max(t.end_frame for t in self.trajectories),
        )

    def by_agent(self) -> dict[int, Trajectory]:
        return {t.agent_id: t for t in self.trajectories}


@dataclass
class ValidationReport:
    speed_violations: list[tuple[int, int, float]] = field(default_factory=list)  # (agent, frame, speed)
    nan_violations: list[tuple[int, int]] = field(default_factory=list)
    duplicate_frame_agents: list[int] = field(default_factory=list)

    @property
    def violation_count(self) -> int:
        return len(self.speed_violations) + len(self.nan_violations) + len(self.duplicate_frame_agents)

    def ok(self) -> bool:
        return self.violation_count == 0


def parse_annotations(text: str, fmt: str = "tsv_frame_id_xy") -> list[RawDetection]:
    """Parse raw annotation text into detections ordered by (frame, agent_id).

    Blank lines and ``#`` comment lines are skipped.  Raises
    AnnotationParseError with the offending line number on malformed rows and
    AnnotationValidationError on duplicate (frame, agent_id) pairs.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown annotation format {fmt!r}; expected one of {FORMATS}")
    detections: list[RawDetection] = []
    seen: set[tuple[int, int]] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        try:
            if fmt == "tsv_frame_id_xy":
                if len(parts) < 4:
                    raise ValueError(f"expected 4 columns, got {len(parts)}")
                frame = int(float(parts[0]))
                agent = int(float(parts[1]))
                x, y = float(parts[2]), float(parts[3])
            else:  # obsmat
                if len(parts) < 8:
                    raise ValueError(f"expected 8 columns, got {len(parts)}")
                frame = int(float(parts[0]))
                agent = int(float(parts[1]))
                x, y = float(parts[2]), float(parts[4])
        except ValueError as exc:
            raise AnnotationParseError(line_no, str(exc)) from None
        if frame < 0:
            raise AnnotationParseError(line_no, f"negative frame {frame}")
        key = (frame, agent)
        if key in seen:
            raise AnnotationValidationError(f"duplicate detection for agent {agent} at frame {frame}")
        seen.add(key)
        detections.append(RawDetection(frame, agent, x, y))
    detections.sort(key=lambda d: (d.frame, d.agent_id))
    return detections


def serialize_annotations(detections: list[RawDetection]) -> str:
    """Inverse of parse_annotations for the tsv_frame_id_xy layout."""
    lines = [f"{d.frame} {d.agent_id} {d.x!r} {d.y!r}" for d in detections]
    return "\n".join(lines) + ("\n" if lines else "")


def _split_on_gaps(times: np.ndarray, max_gap_s: float) -> list[slice]:
    """Slices of contiguous observation runs, split where dt > max_gap_s."""
    if len(times) == 0:
        return []
    breaks = np.flatnonzero(np.diff(times) > max_gap_s)
    starts = [0] + [int(b) + 1 for b in breaks]
    ends = [int(b) + 1 for b in breaks] + [len(times)]
    return [slice(s, e) for s, e in zip(starts, ends)]


def resample(
    detections: list[RawDetection],
    source_fps: float,
    target_fps: float = TARGET_FPS,
    scene_id: str = "",
    max_gap_s: float = GAP_SPLIT_S,
) -> TrajectorySet:
    """Linearly interpolate per-agent detections onto a uniform target-rate timeline.

    Observation gaps longer than ``max_gap_s`` split an agent into separate
    trajectories; parts after the first get synthetic ids
    ``agent_id * SPLIT_ID_BASE + part``.  Runs with fewer than two detections
    are dropped and counted in ``dropped_single_detection``.
    """
    if source_fps <= 0:
        raise ValueError("source_fps must be positive")
    if target_fps <= 0:
        raise ValueError("target_fps must be positive")

    per_agent: dict[int, list[RawDetection]] = {}
    for det in detections:
        per_agent.setdefault(det.agent_id, []).append(det)

    raw_ids = set(per_agent)
    trajectories: list[Trajectory] = []
    dropped = 0
    splits = 0
    eps = 1e-9

    for agent_id in sorted(per_agent):
        dets = sorted(per_agent[agent_id], key=lambda d: d.frame)
        times = np.array([d.frame / source_fps for d in dets])
        xy = np.array([[d.x, d.y] for d in dets])
        runs = _split_on_gaps(times, max_gap_s)
        if len(runs) > 1:
            splits += len(runs) - 1
        for part, run in enumerate(runs):
            t = times[run]
            p = xy[run]
            if len(t) < 2:
                dropped += 1
                continue
            first = math.ceil(t[0] * target_fps - eps)
            last = math.floor(t[-1] * target_fps + eps)
            if last < first:
                dropped += 1
                continue
            frames = np.arange(first, last + 1)
            sample_t = frames / target_fps
            px = np.interp(sample_t, t, p[:, 0])
            py = np.interp(sample_t, t, p[:, 1])
            if part == 0:
                out_id = agent_id
            else:
                out_id = agent_id * SPLIT_ID_BASE + part
                if out_id in raw_ids:
                    raise AnnotationValidationError(
                        f"synthetic id {out_id} for split of agent {agent_id} collides with a raw id"
                    )
            trajectories.append(
                Trajectory(
                    agent_id=out_id,
                    start_frame=int(first),
                    fps=float(target_fps),
                    positions=np.column_stack([px, py]),
                )
            )
    return TrajectorySet(
        scene_id=scene_id,
        trajectories=trajectories,
        dropped_single_detection=dropped,
        split_count=splits,
    )


def validate(tset: TrajectorySet, v_max: float = V_MAX) -> ValidationReport:
    """Report per-trajectory violations (speed bound, NaN); set unchanged."""
    report = ValidationReport()
    for traj in tset.trajectories:
        if len(traj.positions) == 0:
            continue
        if not np.isfinite(traj.positions).all():
            bad = np.flatnonzero(~np.isfinite(traj.positions).all(axis=1))
            for idx in bad:
                report.nan_violations.append((traj.agent_id, traj.start_frame + int(idx)))
        step = np.linalg.norm(np.diff(traj.positions, axis=0), axis=1)
        bound = v_max / traj.fps
        for idx in np.flatnonzero(step > bound + 1e-12):
            speed = float(step[idx] * traj.fps)
            report.speed_violations.append((traj.agent_id, traj.start_frame + int(idx) + 1, speed))
    return report


def filter_min_length(tset: TrajectorySet, min_frames: int = 40) -> TrajectorySet:
    """Drop trajectories shorter than min_frames frames."""
    kept = [t for t in tset.trajectories if len(t) >= min_frames]
    return TrajectorySet(
        scene_id=tset.scene_id,
        trajectories=kept,
        dropped_single_detection=tset.dropped_single_detection,
        split_count=tset.split_count,
    )


def write_jsonl(tset: TrajectorySet, path: str) -> None:
    """One trajectory object per line: {scene_id, agent_id, start_frame, fps, positions}."""
    with open(path, "w", encoding="utf-8") as fh:
        for traj in tset.trajectories:
            record = {
                "scene_id": tset.scene_id,
                "agent_id": traj.agent_id,
                "start_frame": traj.start_frame,
                "fps": traj.fps,
                "positions": [[float(x), float(y)] for x, y in traj.positions],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(path: str) -> TrajectorySet:
    trajectories = []
    scene_id = ""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            scene_id = rec["scene_id"]
            trajectories.append(
                Trajectory(
                    agent_id=int(rec["agent_id"]),
                    start_frame=int(rec["start_frame"]),
                    fps=float(rec["fps"]),
                    positions=np.array(rec["positions"], dtype=np.float64).reshape(-1, 2),
                )
            )
    return TrajectorySet(scene_id=scene_id, trajectories=trajectories)
