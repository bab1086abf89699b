"""Evaluation metrics: teacher-forced displacement errors, region-violation
and goal-success rates, and DTW-based rollout diversity.

Teacher forcing resets the simulator to the ground truth at every decision
frame on the global window lattice, so each predicted segment is scored
independently of earlier mistakes.  All metrics are pure functions of
logged rollouts and recompute exactly from their logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .policies import Policy, decision_lattice
from .scene import SceneSpec, is_forbidden
from .simcore import (
    AgentState,
    AgentStatus,
    SimConfig,
    episode_from_ground_truth,
    init_episode,
    observe,
    run_episode,
    set_state_from_ground_truth,
)
from .skills import SkillCodebook, execute_skill
from .trajdata import TrajectorySet


@dataclass
class SegmentError:
    agent_id: int
    frame: int
    skill_id: int
    errors: list[float]  # per-frame displacement errors, length = window


@dataclass
class PdmResult:
    ade: float
    fde: float
    segments: list[SegmentError] = field(default_factory=list)

    def recompute(self) -> tuple[float, float]:
        """(ade, fde) recomputed from the per-frame error log."""
        all_errors = [e for seg in self.segments for e in seg.errors]
        finals = [seg.errors[-1] for seg in self.segments]
        return float(np.mean(all_errors)), float(np.mean(finals))


def pdm(
    policy: Policy,
    gt: TrajectorySet,
    scene: SceneSpec,
    codebook: SkillCodebook,
    config: SimConfig | None = None,
    seed: int = 0,
) -> PdmResult:
    """Teacher-forced segment displacement errors (mean per-frame, mean final-frame).

    At every lattice frame the simulator is reset to the ground truth, the
    policy is queried with full observations, the predicted skill is played
    from the ground-truth pose, and its window is compared frame-by-frame
    against the recorded future.
    """
    from .qagen import _gt_skill_label

    config = config or SimConfig()
    window = codebook.window
    by_agent = gt.by_agent()
    lo, hi = gt.frame_range
    lattice = decision_lattice(lo, hi, window) if gt.trajectories else []

    state = episode_from_ground_truth(scene, gt, seed=seed, config=config) if gt.trajectories else None
    rng = np.random.Generator(np.random.PCG64(seed))
    segments: list[SegmentError] = []

    for frame in lattice:
        participants = [aid for aid in sorted(by_agent) if by_agent[aid].covers(frame, span=window)]
        if not participants:
            continue
        set_state_from_ground_truth(state, gt, frame)
        for agent in state.agents:
            if agent.agent_id in by_agent and by_agent[agent.agent_id].covers(frame - window, span=window):
                agent.current_skill = _gt_skill_label(by_agent[agent.agent_id], frame - window, codebook)
            else:
                agent.current_skill = None
        observations = {aid: observe(state, aid) for aid in participants}
        prev_skills = {a.agent_id: a.current_skill for a in state.agents}
        decisions = policy.decide(observations, rng=rng, frame=frame, prev_skills=prev_skills)
        for aid in participants:
            traj = by_agent[aid]
            agent = state.agent(aid)
            pose = (float(agent.position[0]), float(agent.position[1]), agent.heading)
            skill = decisions[aid].skill_id
            predicted, _ = execute_skill(pose, skill, codebook)
            idx = traj.frame_index(frame)
            actual = traj.positions[idx + 1 : idx + 1 + window]
            errors = np.linalg.norm(predicted - actual, axis=1)
            segments.append(
                SegmentError(agent_id=aid, frame=frame, skill_id=skill, errors=[float(e) for e in errors])
            )

    if not segments:
        raise ValueError("no complete teacher-forcing segments in the ground truth")
    all_errors = [e for seg in segments for e in seg.errors]
    finals = [seg.errors[-1] for seg in segments]
    return PdmResult(ade=float(np.mean(all_errors)), fde=float(np.mean(finals)), segments=segments)


def srvr(histories: dict[int, np.ndarray], spec: SceneSpec) -> float:
    """Fraction of (agent, frame) samples inside forbidden regions."""
    total = 0
    violations = 0
    for positions in histories.values():
        for p in np.asarray(positions):
            total += 1
            if is_forbidden(spec, (float(p[0]), float(p[1]))):
                violations += 1
    if total == 0:
        raise ValueError("srvr needs at least one recorded position")
    return violations / total


def srvr_agent_level(histories: dict[int, np.ndarray], spec: SceneSpec) -> float:
    """Fraction of agents that ever enter a forbidden region (variant)."""
    if not histories:
        raise ValueError("srvr needs at least one agent history")
    violating = 0
    for positions in histories.values():
        if any(is_forbidden(spec, (float(p[0]), float(p[1]))) for p in np.asarray(positions)):
            violating += 1
    return violating / len(histories)


def gsr(final_states: list[AgentState], spec: SceneSpec) -> float:
    """Fraction of agents that arrived at their goals."""
    if not final_states:
        raise ValueError("gsr needs at least one agent")
    arrived = sum(1 for a in final_states if a.status is AgentStatus.ARRIVED)
    return arrived / len(final_states)


def dtw(a, b) -> float:
    """Dynamic time warping distance with Euclidean point cost.

    Full window, no path-length normalization; symmetric in its arguments.
    """
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64).reshape(len(a), -1))
    b = np.ascontiguousarray(np.asarray(b, dtype=np.float64).reshape(len(b), -1))
    if a.shape[1] != 2 or b.shape[1] != 2:
        raise ValueError("dtw expects sequences of 2D points")
    return float(_kernels.dtw_distance(a, b))


def dtw_normalized(a, b) -> float:
    """DTW divided by the summed sequence lengths (variant)."""
    return dtw(a, b) / (len(a) + len(b))


@dataclass
class DiversityResult:
    div: float
    degenerate: bool  # all rollouts identical (deterministic policy)
    per_agent: dict[int, float] = field(default_factory=dict)


def diversity(
    policy: Policy,
    scene: SceneSpec,
    agents: list[dict],
    seeds: list[int],
    codebook: SkillCodebook,
    config: SimConfig | None = None,
) -> DiversityResult:
    """Mean pairwise DTW between per-agent rollouts from identical initial conditions.

    One rollout per seed; the average runs over agents first, then over
    rollout pairs for each agent.
    """
    if len(seeds) < 2:
        raise ValueError("diversity needs at least 2 seeds")
    rollouts = []
    for seed in seeds:
        policy.reset()
        state = init_episode(scene, agents, seed=seed, config=config)
        result = run_episode(state, policy, codebook)
        rollouts.append(
            {a.agent_id: result.history_positions(a.agent_id, active_only=True) for a in result.state.agents}
        )
    agent_ids = sorted(rollouts[0])
    per_agent: dict[int, float] = {}
    for aid in agent_ids:
        dists = []
        for i in range(len(rollouts)):
            for j in range(i + 1, len(rollouts)):
                dists.append(dtw(rollouts[i][aid], rollouts[j][aid]))
        per_agent[aid] = float(np.mean(dists)) if dists else 0.0
    div = float(np.mean(list(per_agent.values()))) if per_agent else 0.0
    return DiversityResult(div=div, degenerate=(div == 0.0), per_agent=per_agent)


def format_mean_std(mean: float, std: float, decimals: int = 4) -> str:
    """Render the table convention, e.g. 0.1288^{±.0031}."""
    std_text = f"{std:.{decimals}f}"
    if std_text.startswith("0."):
        std_text = std_text[1:]
    elif std_text.startswith("-0."):
        std_text = "-" + std_text[2:]
    return f"{mean:.{decimals}f}^{{±{std_text}}}"


@dataclass
class MetricsReport:
    policy: str
    seeds: list[int]
    config_hash: str
    scenes: dict[str, dict]

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "seeds": list(self.seeds),
            "config_hash": self.config_hash,
            "scenes": self.scenes,
        }

    def render_table(self) -> str:
        metric_names = ["pdm_ade", "pdm_fde", "gsr", "srvr", "div"]
        header = ["scene"] + metric_names
        rows = [header]
        for scene_id in sorted(self.scenes):
            per_scene = self.scenes[scene_id]
            row = [scene_id]
            for name in metric_names:
                cell = per_scene.get(name)
                if cell is None:
                    row.append("-")
                elif "mean" in cell:
                    row.append(format_mean_std(cell["mean"], cell["std"]))
                else:
                    row.append(f"{cell['value']:.4f}")
            rows.append(row)
        widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
        return "\n".join(lines) + "\n"


def aggregate(per_seed_values: dict[str, list[float]]) -> dict[str, dict]:
    """Sample mean and population standard deviation per metric."""
    out = {}
    for name, values in per_seed_values.items():
        if not values:
            raise ValueError(f"metric {name} has no runs")
        arr = np.asarray(values, dtype=np.float64)
        out[name] = {
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=0)),
            "values": [float(v) for v in values],
        }
    return out


def active_histories(result) -> dict[int, np.ndarray]:
    """Per-agent active-period positions from an EpisodeResult."""
    return {
        a.agent_id: result.history_positions(a.agent_id, active_only=True)
        for a in result.state.agents
    }
