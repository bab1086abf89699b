"""Counterfactual QA dataset generation.

From every ground-truth decision frame, alternative motion skills are
rolled out against the recorded motion of all other agents; their outcomes
(collisions, clearance, forbidden-region entry, goal progress, detours,
group cohesion) are classified and curated into two record types:
action-selection samples (which candidates stay safe) and
outcome-prediction samples (what executing one candidate leads to).
Generation is deterministic given the seed and never mutates the ground
truth.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import protocol
from .scene import (
    LABEL_CODES,
    SceneSpec,
    SemanticLabel,
    label_codes_for_points,
    obstacle_clearance_field,
)
from .simcore import SimConfig, observe, set_state_from_ground_truth, episode_from_ground_truth
from .skills import SkillCodebook, estimate_heading, execute_skill
from .trajdata import TrajectorySet

QA_FORMAT_VERSION = 1

SAFE = "safe"
COLLISION = "collision"
UNSAFE_PROXIMITY = "unsafe_proximity"
NORM_VIOLATION = "norm_violation"
INEFFICIENT_DETOUR = "inefficient_detour"
PROGRESS = "progress"

VIOLATION_LABELS = (COLLISION, UNSAFE_PROXIMITY, NORM_VIOLATION)


@dataclass(frozen=True)
class RolloutOutcome:
    skill_id: int
    collided: bool
    min_clearance: float  # m over the window, vs agents and obstacle cells
    unsafe_frames: int
    forbidden_frames: int
    goal_distance_delta: float  # end minus start; negative = progress
    detour_ratio: float  # inf when progress <= 0
    group_cohesion_delta: float

    def to_dict(self) -> dict:
        return {
            "skill_id": self.skill_id,
            "collided": self.collided,
            "min_clearance": _json_float(self.min_clearance),
            "unsafe_frames": self.unsafe_frames,
            "forbidden_frames": self.forbidden_frames,
            "goal_distance_delta": self.goal_distance_delta,
            "detour_ratio": _json_float(self.detour_ratio),
            "group_cohesion_delta": self.group_cohesion_delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RolloutOutcome":
        return cls(
            skill_id=int(d["skill_id"]),
            collided=bool(d["collided"]),
            min_clearance=_from_json_float(d["min_clearance"]),
            unsafe_frames=int(d["unsafe_frames"]),
            forbidden_frames=int(d["forbidden_frames"]),
            goal_distance_delta=float(d["goal_distance_delta"]),
            detour_ratio=_from_json_float(d["detour_ratio"]),
            group_cohesion_delta=float(d["group_cohesion_delta"]),
        )


def _json_float(x: float):
    """inf-aware float for strict JSON: infinities map to None."""
    return float(x) if math.isfinite(x) else None


def _from_json_float(x) -> float:
    return math.inf if x is None else float(x)


@dataclass
class QAThresholds:
    detour_ratio: float = 1.5


@dataclass
class QAConfig:
    m: int = 3  # alternative candidates per decision
    seed: int = 0
    stride: int = 20  # spacing of decision frames on the global lattice
    thresholds: QAThresholds = field(default_factory=QAThresholds)
    sim: SimConfig = field(default_factory=SimConfig)


@dataclass
class QASample:
    qa_type: str  # action_selection | outcome_prediction
    scene_id: str
    frame: int
    agent_id: int
    observation: dict  # wire-format observation payload
    candidates: list[int]
    question: str
    answer: dict  # {"structured": ..., "text": ...}
    outcomes: list[RolloutOutcome]

    def to_dict(self) -> dict:
        return {
            "format_version": QA_FORMAT_VERSION,
            "qa_type": self.qa_type,
            "scene_id": self.scene_id,
            "frame": self.frame,
            "agent_id": self.agent_id,
            "observation": self.observation,
            "candidates": self.candidates,
            "question": self.question,
            "answer": self.answer,
            "outcomes": [o.to_dict() for o in self.outcomes],
        }


def sample_candidates(gt_skill: int, k: int, m: int = 3, rng: np.random.Generator | None = None) -> list[int]:
    """The ground-truth skill plus m distinct uniform alternatives, shuffled."""
    if not 0 <= gt_skill < k:
        raise ValueError(f"gt_skill {gt_skill} out of range for k={k}")
    if m >= k:
        raise ValueError("m must be smaller than k")
    rng = rng or np.random.default_rng()
    others = [s for s in range(k) if s != gt_skill]
    alts = rng.choice(len(others), size=m, replace=False) if m > 0 else []
    candidates = [gt_skill] + [others[int(i)] for i in alts]
    order = rng.permutation(len(candidates))
    return [candidates[int(i)] for i in order]


def rollout_counterfactual(
    gt: TrajectorySet,
    scene: SceneSpec,
    frame: int,
    agent_id: int,
    skill_id: int,
    codebook: SkillCodebook,
    config: SimConfig | None = None,
    group: set[int] | None = None,
    clearance_field: np.ndarray | None = None,
) -> RolloutOutcome:
    """Execute one skill from the agent's ground-truth pose at a frame.

    All other agents replay their recorded positions for the same window.
    The agent's goal is its ground-truth endpoint.  Obstacle clearance is
    measured to obstacle cell centers at grid resolution; points outside
    the grid have no obstacle clearance (but count as forbidden).
    """
    config = config or SimConfig()
    window = codebook.window
    traj = gt.by_agent().get(agent_id)
    if traj is None or not traj.covers(frame, span=window):
        raise ValueError(f"agent {agent_id} does not cover frames [{frame}, {frame + window}]")
    if clearance_field is None:
        clearance_field = obstacle_clearance_field(scene.grid)

    start = traj.position_at(frame)
    heading = estimate_heading(traj, frame)
    pose = (float(start[0]), float(start[1]), heading)
    path, _ = execute_skill(pose, skill_id, codebook)
    goal = traj.positions[-1]

    others = [t for t in gt.trajectories if t.agent_id != agent_id]
    group = group or set()
    obstacle_code = LABEL_CODES[SemanticLabel.OBSTACLE]

    # per-frame clearance to the nearest other agent
    clearances = np.full(window, math.inf)
    for other in others:
        lo = max(other.start_frame, frame + 1)
        hi = min(other.end_frame, frame + window)
        if lo > hi:
            continue
        window_slice = slice(lo - frame - 1, hi - frame)
        other_positions = other.positions[lo - other.start_frame : hi - other.start_frame + 1]
        d = np.linalg.norm(path[window_slice] - other_positions, axis=1)
        np.minimum(clearances[window_slice], d, out=clearances[window_slice])

    # obstacle clearance and labels, vectorized over the 20 path points
    codes = label_codes_for_points(scene.grid, path)
    grid = scene.grid
    u = (path[:, 0] - grid.origin[0]) / grid.cell_size
    v = (path[:, 1] - grid.origin[1]) / grid.cell_size
    ix = np.where(u == 0.0, 0, np.ceil(u).astype(np.int64) - 1)
    iy = np.where(v == 0.0, 0, np.ceil(v).astype(np.int64) - 1)
    inside = (u >= 0.0) & (u <= grid.width) & (v >= 0.0) & (v <= grid.height)
    obstacle_dist = np.full(window, math.inf)
    obstacle_dist[inside] = clearance_field[iy[inside], ix[inside]]
    np.minimum(clearances, obstacle_dist, out=clearances)

    forbidden_codes = np.array(sorted(LABEL_CODES[lbl] for lbl in scene.rules.forbidden), dtype=np.int8)
    forbidden_mask = np.isin(codes, forbidden_codes)

    collided = bool((clearances < config.r_coll).any() or (codes == obstacle_code).any())
    unsafe_frames = int((clearances < config.r_unsafe).sum())
    forbidden_frames = int(forbidden_mask.sum())
    min_clearance = float(clearances.min())

    start_goal = float(np.linalg.norm(goal - start))
    end_goal = float(np.linalg.norm(goal - path[-1]))
    goal_distance_delta = end_goal - start_goal
    progress = -goal_distance_delta
    steps = np.vstack([start[None, :], path])
    path_length = float(np.sum(np.linalg.norm(np.diff(steps, axis=0), axis=1)))
    detour_ratio = path_length / progress if progress > 0 else math.inf

    def mean_group_distance(point: np.ndarray, f: int) -> float | None:
        dists = []
        for other in others:
            if other.agent_id in group and other.covers(f):
                dists.append(float(np.linalg.norm(point - other.position_at(f))))
        return sum(dists) / len(dists) if dists else None

    cohesion_delta = 0.0
    before = mean_group_distance(start, frame)
    after = mean_group_distance(path[-1], frame + window)
    if before is not None and after is not None:
        cohesion_delta = after - before

    return RolloutOutcome(
        skill_id=skill_id,
        collided=collided,
        min_clearance=min_clearance,
        unsafe_frames=unsafe_frames,
        forbidden_frames=forbidden_frames,
        goal_distance_delta=goal_distance_delta,
        detour_ratio=detour_ratio,
        group_cohesion_delta=cohesion_delta,
    )


def classify(outcome: RolloutOutcome, thresholds: QAThresholds | None = None) -> set[str]:
    """Outcome labels per the fixed rule set."""
    thresholds = thresholds or QAThresholds()
    labels: set[str] = set()
    if outcome.collided:
        labels.add(COLLISION)
    if outcome.unsafe_frames >= 1 and not outcome.collided:
        labels.add(UNSAFE_PROXIMITY)
    if outcome.forbidden_frames >= 1:
        labels.add(NORM_VIOLATION)
    if outcome.detour_ratio > thresholds.detour_ratio:
        labels.add(INEFFICIENT_DETOUR)
    if outcome.goal_distance_delta < 0:
        labels.add(PROGRESS)
    if not labels & set(VIOLATION_LABELS):
        labels.add(SAFE)
    return labels


def _question_action_selection(candidates: list[int]) -> str:
    ids = ", ".join(str(c) for c in candidates)
    return (
        f"Candidate motion skills: [{ids}]. Which of these skills can the agent "
        "execute for the next 20 frames without a collision, unsafe proximity, "
        "or entering a forbidden region?"
    )


def _question_outcome(skill_id: int) -> str:
    return (
        f"Suppose the agent executes motion skill {skill_id} for the next 20 frames. "
        "What outcome does this lead to?"
    )


def _render_outcome_text(outcome: RolloutOutcome, labels: set[str]) -> str:
    ordered = [lbl for lbl in (COLLISION, UNSAFE_PROXIMITY, NORM_VIOLATION, INEFFICIENT_DETOUR, PROGRESS, SAFE) if lbl in labels]
    clearance = "inf" if math.isinf(outcome.min_clearance) else f"{outcome.min_clearance:.2f}"
    detour = "inf" if math.isinf(outcome.detour_ratio) else f"{outcome.detour_ratio:.2f}"
    return (
        f"Labels: {', '.join(ordered)}. "
        f"Minimum clearance {clearance} m. "
        f"{outcome.forbidden_frames} frames in forbidden regions. "
        f"Goal distance change {outcome.goal_distance_delta:+.2f} m. "
        f"Detour ratio {detour}. "
        f"Group cohesion change {outcome.group_cohesion_delta:+.2f} m."
    )


def _render_selection_text(safe_ids: list[int]) -> str:
    if not safe_ids:
        return "None of the candidate skills are safe."
    return "Safe candidates: " + ", ".join(str(s) for s in safe_ids) + "."


@dataclass
class QABatch:
    samples: list[QASample]
    manifest: dict


def build_qa(
    gt: TrajectorySet,
    scene: SceneSpec,
    codebook: SkillCodebook,
    config: QAConfig | None = None,
) -> QABatch:
    """Generate both QA record types for every covered decision frame.

    Decision frames run over the global multiples-of-stride lattice; an
    agent participates at a frame when its ground truth covers the full
    window.  For each participant: one action-selection sample whose answer
    lists the safe candidates, and one outcome-prediction sample per
    candidate.  Deterministic given config.seed.
    """
    config = config or QAConfig()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    window = codebook.window
    clearance = obstacle_clearance_field(scene.grid)
    samples: list[QASample] = []
    skips: dict[str, int] = {}
    label_counts: dict[str, int] = {}

    if gt.trajectories:
        state = episode_from_ground_truth(scene, gt, seed=config.seed, config=config.sim)
    frames: list[int] = []
    if gt.trajectories:
        lo, hi = gt.frame_range
        first = ((lo + config.stride - 1) // config.stride) * config.stride
        frames = list(range(first, hi - window + 1, config.stride))

    by_agent = gt.by_agent()
    for frame in frames:
        participants = []
        for aid in sorted(by_agent):
            traj = by_agent[aid]
            if traj.covers(frame, span=window):
                participants.append(aid)
            elif traj.covers(frame):
                # present at the decision frame but leaving before frame+window
                skips["window_not_covered"] = skips.get("window_not_covered", 0) + 1
        if not participants:
            continue
        set_state_from_ground_truth(state, gt, frame)
        for aid in participants:
            traj = by_agent[aid]
            gt_skill = _gt_skill_label(traj, frame, codebook)
            candidates = sample_candidates(gt_skill, codebook.k, m=config.m, rng=rng)
            obs_payload = protocol.encode_observation(observe(state, aid))

            outcomes = []
            for cand in candidates:
                outcomes.append(
                    rollout_counterfactual(
                        gt, scene, frame, aid, cand, codebook,
                        config=config.sim, clearance_field=clearance,
                    )
                )
            labels_per_candidate = [classify(o, config.thresholds) for o in outcomes]
            for labels in labels_per_candidate:
                for lbl in labels:
                    label_counts[lbl] = label_counts.get(lbl, 0) + 1

            safe_ids = [c for c, labels in zip(candidates, labels_per_candidate) if SAFE in labels]
            samples.append(
                QASample(
                    qa_type="action_selection",
                    scene_id=scene.scene_id,
                    frame=frame,
                    agent_id=aid,
                    observation=obs_payload,
                    candidates=list(candidates),
                    question=_question_action_selection(candidates),
                    answer={
                        "structured": {"safe_candidates": safe_ids},
                        "text": _render_selection_text(safe_ids),
                    },
                    outcomes=list(outcomes),
                )
            )
            for cand, outcome, labels in zip(candidates, outcomes, labels_per_candidate):
                ordered = sorted(labels)
                samples.append(
                    QASample(
                        qa_type="outcome_prediction",
                        scene_id=scene.scene_id,
                        frame=frame,
                        agent_id=aid,
                        observation=obs_payload,
                        candidates=[cand],
                        question=_question_outcome(cand),
                        answer={
                            "structured": {"labels": ordered, "outcome": outcome.to_dict()},
                            "text": _render_outcome_text(outcome, labels),
                        },
                        outcomes=[outcome],
                    )
                )

    manifest = {
        "format_version": QA_FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "counts": {
            "total": len(samples),
            "action_selection": sum(1 for s in samples if s.qa_type == "action_selection"),
            "outcome_prediction": sum(1 for s in samples if s.qa_type == "outcome_prediction"),
        },
        "label_counts": dict(sorted(label_counts.items())),
        "skips": dict(sorted(skips.items())),
        "config": {
            "m": config.m,
            "seed": config.seed,
            "stride": config.stride,
            "detour_ratio_threshold": config.thresholds.detour_ratio,
        },
    }
    return QABatch(samples=samples, manifest=manifest)


def _gt_skill_label(traj, frame: int, codebook: SkillCodebook) -> int:
    from .skills import MotionSegment, assign, canonicalize

    idx = traj.frame_index(frame)
    seg = MotionSegment(
        source_agent=traj.agent_id,
        source_frame=frame,
        origin=(float(traj.positions[idx, 0]), float(traj.positions[idx, 1])),
        positions=traj.positions[idx + 1 : idx + 1 + codebook.window].copy(),
    )
    return assign(canonicalize(seg, estimate_heading(traj, frame)), codebook)


def write_qa_jsonl(batch: QABatch, samples_path: str, manifest_path: str) -> None:
    with open(samples_path, "w", encoding="utf-8") as fh:
        for sample in batch.samples:
            fh.write(json.dumps(sample.to_dict(), sort_keys=True) + "\n")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(batch.manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def trajectory_set_hash(gt: TrajectorySet) -> str:
    """Content hash used to verify counterfactual generation leaves gt untouched."""
    digest = hashlib.sha256()
    digest.update(gt.scene_id.encode())
    for traj in sorted(gt.trajectories, key=lambda t: t.agent_id):
        digest.update(str(traj.agent_id).encode())
        digest.update(str(traj.start_frame).encode())
        digest.update(np.ascontiguousarray(traj.positions).tobytes())
    return digest.hexdigest()
