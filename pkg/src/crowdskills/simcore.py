"""Deterministic multi-agent episode engine.

Agents decide every WINDOW frames by selecting a motion skill, which is
played back frame-by-frame for all agents synchronously.  Collisions are
recorded but never resolved; arrival freezes an agent at its arrival
position; running out of remaining time freezes it as timed out.  States
snapshot and restore exactly, including the random generator, so teacher
forcing and counterfactual rollouts can branch from any decision point.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .scene import LABEL_CODES, SceneSpec, SemanticLabel, label_at, label_codes_for_points
from .skills import (
    WINDOW,
    SkillCodebook,
    estimate_heading,
    execute_skill,
    rotation,
)
from .trajdata import TARGET_FPS, TrajectorySet

R_COLL = 0.3
R_UNSAFE = 0.6
R_OBS = 10.0
PATCH_SIZE = 16
PATCH_CELL = 0.25


class AgentStatus(Enum):
    ACTIVE = "active"
    ARRIVED = "arrived"
    TIMED_OUT = "timed_out"


@dataclass
class SimConfig:
    r_coll: float = R_COLL
    r_unsafe: float = R_UNSAFE
    r_obs: float = R_OBS
    fps: float = TARGET_FPS
    time_scale: float = 1.0  # multiplier on auto remaining-time (distance 1:1 mapping)
    nominal_speed: float = 1.0  # m/s used by the distance-to-time mapping


@dataclass
class AgentState:
    agent_id: int
    position: np.ndarray  # (2,)
    heading: float
    goal: np.ndarray  # (2,)
    remaining_time: int
    group: frozenset[int] = frozenset()
    status: AgentStatus = AgentStatus.ACTIVE
    current_skill: int | None = None
    frozen_at: int | None = None  # frame at which the agent stopped moving

    def copy(self) -> "AgentState":
        return replace(
            self,
            position=self.position.copy(),
            goal=self.goal.copy(),
        )


@dataclass(frozen=True)
class Observation:
    """Structured per-agent policy input, all relative values in the agent frame."""

    self_pose: tuple[float, float, float]
    goal_relative: tuple[float, float]
    remaining_time: int
    group_relative: list[tuple[float, float]]
    neighbors: list[tuple[float, float, float, float]]  # (dx, dy, vx, vy), sorted by distance
    semantic_patch: np.ndarray  # (PATCH_SIZE, PATCH_SIZE) int8 label codes


@dataclass(frozen=True)
class CollisionEvent:
    frame: int
    agent_a: int
    agent_b: int | None  # None means obstacle-cell entry
    distance: float

    @property
    def is_obstacle(self) -> bool:
        return self.agent_b is None


@dataclass
class SimState:
    frame: int
    agents: list[AgentState]
    scene: SceneSpec
    rng: np.random.Generator
    config: SimConfig
    history: dict[int, list[tuple[int, np.ndarray]]] = field(default_factory=dict)

    def agent(self, agent_id: int) -> AgentState:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(f"no agent {agent_id}")

    def active_agents(self) -> list[AgentState]:
        return [a for a in self.agents if a.status is AgentStatus.ACTIVE]


class PlacementError(ValueError):
    pass


class DecisionError(ValueError):
    pass


def auto_remaining_time(distance: float, config: SimConfig) -> int:
    """Distance-to-goal mapped 1:1 to a frame budget at the nominal speed."""
    frames = distance / config.nominal_speed * config.fps * config.time_scale
    return max(int(math.ceil(frames)), 1)


def init_episode(
    scene: SceneSpec,
    agents: list[dict],
    seed: int = 0,
    config: SimConfig | None = None,
    strict: bool = True,
) -> SimState:
    """Build the frame-0 state from agent specs
    {start, goal, remaining_time?, group?, agent_id?, heading?}.

    Headings default to pointing at the goal; agents starting within goal
    tolerance are immediately arrived.  When ``strict``, starts and goals must lie inside
    the grid and off obstacle cells, and overlapping starts (closer than
    r_coll) are an error.  Ground-truth-derived initial states run
    non-strict: they collapse staggered entries onto frame 0 and may
    legitimately overlap or graze imperfectly traced scene geometry.
    """
    config = config or SimConfig()
    states: list[AgentState] = []
    for i, spec_entry in enumerate(agents):
        agent_id = int(spec_entry.get("agent_id", i))
        start = np.asarray(spec_entry["start"], dtype=np.float64)
        goal = np.asarray(spec_entry["goal"], dtype=np.float64)
        if strict:
            for name, p in (("start", start), ("goal", goal)):
                label = label_at(scene.grid, (p[0], p[1]))
                if label is SemanticLabel.OUT_OF_BOUNDS:
                    raise PlacementError(f"agent {agent_id}: {name} {p.tolist()} outside the scene grid")
                if label is SemanticLabel.OBSTACLE:
                    raise PlacementError(f"agent {agent_id}: {name} {p.tolist()} inside an obstacle cell")
        to_goal = goal - start
        dist = float(np.linalg.norm(to_goal))
        if spec_entry.get("heading") is not None:
            heading = float(spec_entry["heading"])
        else:
            heading = math.atan2(to_goal[1], to_goal[0]) if dist > 1e-12 else 0.0
        remaining = spec_entry.get("remaining_time")
        if remaining is None:
            remaining = auto_remaining_time(dist, config)
        remaining = min(int(remaining), scene.rules.time_limit)
        states.append(
            AgentState(
                agent_id=agent_id,
                position=start.copy(),
                heading=heading,
                goal=goal.copy(),
                remaining_time=remaining,
                group=frozenset(int(g) for g in spec_entry.get("group", ())),
            )
        )
    ids = [a.agent_id for a in states]
    if len(ids) != len(set(ids)):
        raise PlacementError("duplicate agent ids in scenario")

    if strict:
        for i, a in enumerate(states):
            for b in states[i + 1 :]:
                d = float(np.linalg.norm(a.position - b.position))
                if d < config.r_coll:
                    raise PlacementError(
                        f"agents {a.agent_id} and {b.agent_id} start {d:.3f} m apart (< r_coll={config.r_coll})"
                    )

    state = SimState(
        frame=0,
        agents=sorted(states, key=lambda a: a.agent_id),
        scene=scene,
        rng=np.random.Generator(np.random.PCG64(seed)),
        config=config,
        history={a.agent_id: [(0, a.position.copy())] for a in states},
    )
    for a in state.agents:
        if float(np.linalg.norm(a.position - a.goal)) <= scene.rules.goal_tolerance:
            a.status = AgentStatus.ARRIVED
            a.frozen_at = 0
    return state


def _velocity(state: SimState, agent_id: int) -> np.ndarray:
    entries = state.history.get(agent_id, [])
    if len(entries) < 2:
        return np.zeros(2)
    (f1, p1), (f2, p2) = entries[-2], entries[-1]
    if f2 - f1 != 1:
        return np.zeros(2)
    return (p2 - p1) * state.config.fps


_PATCH_OFFSETS = np.array(
    [
        [(PATCH_SIZE - r - 0.5) * PATCH_CELL, (PATCH_SIZE / 2 - c - 0.5) * PATCH_CELL]
        for r in range(PATCH_SIZE)
        for c in range(PATCH_SIZE)
    ]
)


def semantic_patch(state: SimState, position: np.ndarray, heading: float) -> np.ndarray:
    """Agent-aligned PATCH_SIZE x PATCH_SIZE label crop ahead of the agent.

    Row 0 is the farthest-forward row; within a row, column 0 is the
    agent's far left.  Cell (r, c) samples the scene at forward offset
    u = (PATCH_SIZE - r - 0.5) * PATCH_CELL and lateral offset
    v = (PATCH_SIZE / 2 - c - 0.5) * PATCH_CELL in the agent frame.
    """
    world = position + _PATCH_OFFSETS @ rotation(heading).T
    codes = label_codes_for_points(state.scene.grid, world)
    return codes.reshape(PATCH_SIZE, PATCH_SIZE)


def observe(state: SimState, agent_id: int) -> Observation:
    """Structured observation for an active agent; deterministic in state."""
    agent = state.agent(agent_id)
    if agent.status is not AgentStatus.ACTIVE:
        raise DecisionError(f"agent {agent_id} is {agent.status.value}, not active")
    inv = rotation(-agent.heading)

    goal_rel = inv @ (agent.goal - agent.position)

    group_rel = []
    for gid in sorted(agent.group):
        if gid == agent_id:
            continue
        try:
            member = state.agent(gid)
        except KeyError:
            continue
        rel = inv @ (member.position - agent.position)
        group_rel.append((float(rel[0]), float(rel[1])))

    neighbors = []
    for other in state.agents:
        if other.agent_id == agent_id:
            continue
        offset = other.position - agent.position
        dist = float(np.linalg.norm(offset))
        if dist > state.config.r_obs:
            continue
        rel = inv @ offset
        vel = inv @ _velocity(state, other.agent_id)
        neighbors.append((dist, other.agent_id, (float(rel[0]), float(rel[1]), float(vel[0]), float(vel[1]))))
    neighbors.sort(key=lambda item: (item[0], item[1]))

    return Observation(
        self_pose=(float(agent.position[0]), float(agent.position[1]), float(agent.heading)),
        goal_relative=(float(goal_rel[0]), float(goal_rel[1])),
        remaining_time=agent.remaining_time,
        group_relative=group_rel,
        neighbors=[n for _, _, n in neighbors],
        semantic_patch=semantic_patch(state, agent.position, agent.heading),
    )


def step_decision(
    state: SimState,
    decisions: dict[int, int],
    codebook: SkillCodebook,
) -> tuple[SimState, dict[int, np.ndarray], list[CollisionEvent]]:
    """Advance WINDOW frames with one skill per active agent.

    Returns the advanced state (mutated in place), the actually produced
    per-frame positions for every agent (WINDOW, 2), and the collision
    events.  Motion is never blocked: collisions and forbidden-cell entries
    are recorded only.  Arrival and time-out freeze agents mid-segment.
    """
    active = state.active_agents()
    missing = [a.agent_id for a in active if a.agent_id not in decisions]
    if missing:
        raise DecisionError(f"missing decisions for active agents {missing}")

    planned: dict[int, np.ndarray] = {}
    final_headings: dict[int, float] = {}
    for agent in active:
        skill = int(decisions[agent.agent_id])
        pose = (float(agent.position[0]), float(agent.position[1]), agent.heading)
        world, final_heading = execute_skill(pose, skill, codebook)
        planned[agent.agent_id] = world
        final_headings[agent.agent_id] = final_heading
        agent.current_skill = skill

    produced: dict[int, list[np.ndarray]] = {a.agent_id: [] for a in state.agents}
    events: list[CollisionEvent] = []
    obstacle_code = LABEL_CODES[SemanticLabel.OBSTACLE]
    n = len(state.agents)

    for sub in range(WINDOW):
        frame = state.frame + sub + 1
        moved: list[int] = []
        for idx, agent in enumerate(state.agents):
            if agent.status is AgentStatus.ACTIVE:
                agent.position = planned[agent.agent_id][sub].copy()
                agent.remaining_time -= 1
                moved.append(idx)
            produced[agent.agent_id].append(agent.position.copy())
            state.history[agent.agent_id].append((frame, agent.position.copy()))

        positions = np.array([a.position for a in state.agents])

        # arrival first, then timeout
        goals = np.array([a.goal for a in state.agents])
        goal_dist = np.linalg.norm(positions - goals, axis=1)
        for idx, agent in enumerate(state.agents):
            if agent.status is not AgentStatus.ACTIVE:
                continue
            if goal_dist[idx] <= state.scene.rules.goal_tolerance:
                agent.status = AgentStatus.ARRIVED
                agent.frozen_at = frame
            elif agent.remaining_time <= 0:
                agent.status = AgentStatus.TIMED_OUT
                agent.frozen_at = frame

        if n > 1:
            diff = positions[:, None, :] - positions[None, :, :]
            dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            close_i, close_j = np.nonzero(np.triu(dist < state.config.r_coll, k=1))
            for i, j in zip(close_i, close_j):
                events.append(
                    CollisionEvent(
                        frame=frame,
                        agent_a=state.agents[i].agent_id,
                        agent_b=state.agents[j].agent_id,
                        distance=float(dist[i, j]),
                    )
                )

        if moved:
            codes = label_codes_for_points(state.scene.grid, positions[moved])
            for idx, code in zip(moved, codes):
                if int(code) == obstacle_code:
                    events.append(
                        CollisionEvent(frame=frame, agent_a=state.agents[idx].agent_id, agent_b=None, distance=0.0)
                    )

    for agent in state.agents:
        if agent.status is AgentStatus.ACTIVE:
            agent.heading = final_headings[agent.agent_id]

    state.frame += WINDOW
    return state, {aid: np.array(frames) for aid, frames in produced.items()}, events


def snapshot(state: SimState) -> dict:
    """Opaque token from which restore() rebuilds a bit-identical state."""
    return {
        "frame": state.frame,
        "agents": [a.copy() for a in state.agents],
        "scene": state.scene,
        "config": copy.deepcopy(state.config),
        "rng_state": copy.deepcopy(state.rng.bit_generator.state),
        "history": {aid: [(f, p.copy()) for f, p in entries] for aid, entries in state.history.items()},
    }


def restore(token: dict) -> SimState:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = copy.deepcopy(token["rng_state"])
    return SimState(
        frame=token["frame"],
        agents=[a.copy() for a in token["agents"]],
        scene=token["scene"],
        rng=rng,
        config=copy.deepcopy(token["config"]),
        history={aid: [(f, p.copy()) for f, p in entries] for aid, entries in token["history"].items()},
    )


def states_equal(a: SimState, b: SimState) -> bool:
    """Field-by-field equality, used by snapshot round-trip checks."""
    if a.frame != b.frame or len(a.agents) != len(b.agents):
        return False
    for aa, bb in zip(a.agents, b.agents):
        if (
            aa.agent_id != bb.agent_id
            or not np.array_equal(aa.position, bb.position)
            or aa.heading != bb.heading
            or not np.array_equal(aa.goal, bb.goal)
            or aa.remaining_time != bb.remaining_time
            or aa.group != bb.group
            or aa.status != bb.status
            or aa.current_skill != bb.current_skill
            or aa.frozen_at != bb.frozen_at
        ):
            return False
    if a.rng.bit_generator.state != b.rng.bit_generator.state:
        return False
    if set(a.history) != set(b.history):
        return False
    for aid in a.history:
        ha, hb = a.history[aid], b.history[aid]
        if len(ha) != len(hb):
            return False
        for (fa, pa), (fb, pb) in zip(ha, hb):
            if fa != fb or not np.array_equal(pa, pb):
                return False
    return True


def set_state_from_ground_truth(state: SimState, gt: TrajectorySet, frame: int) -> SimState:
    """Teacher-forcing reset: positions/headings from ground truth at a frame.

    Agents absent from the ground truth at the frame are frozen (timed out).
    History is rebuilt from the ground truth up to the frame; remaining time
    becomes the agent's ground-truth frames left.
    """
    by_agent = gt.by_agent()
    state.frame = frame
    for agent in state.agents:
        traj = by_agent.get(agent.agent_id)
        if traj is None or not traj.covers(frame):
            agent.status = AgentStatus.TIMED_OUT
            agent.frozen_at = frame
            state.history[agent.agent_id] = []
            continue
        agent.position = traj.position_at(frame).copy()
        agent.heading = estimate_heading(traj, frame)
        agent.status = AgentStatus.ACTIVE
        agent.frozen_at = None
        agent.remaining_time = traj.end_frame - frame
        start = traj.start_frame
        state.history[agent.agent_id] = [
            (f, traj.positions[f - start].copy()) for f in range(start, frame + 1)
        ]
    return state


def episode_from_ground_truth(
    scene: SceneSpec,
    gt: TrajectorySet,
    seed: int = 0,
    config: SimConfig | None = None,
    time_margin: float = 1.5,
) -> SimState:
    """Initial episode state with every ground-truth agent at its first position.

    Goals are the ground-truth endpoints and the frame budget is the
    ground-truth duration times ``time_margin``.
    """
    agents = []
    for traj in sorted(gt.trajectories, key=lambda t: t.agent_id):
        agents.append(
            {
                "agent_id": traj.agent_id,
                "start": traj.positions[0].tolist(),
                "goal": traj.positions[-1].tolist(),
                "remaining_time": int(math.ceil((len(traj) - 1) * time_margin)),
            }
        )
    return init_episode(scene, agents, seed=seed, config=config, strict=False)


@dataclass
class TickRecord:
    frame: int  # frame at which the decisions were taken
    decisions: dict[int, int]
    positions: dict[int, np.ndarray]  # (WINDOW, 2) produced positions per agent
    events: list[CollisionEvent]


@dataclass
class EpisodeResult:
    state: SimState
    ticks: list[TickRecord]

    def history_positions(self, agent_id: int, active_only: bool = True) -> np.ndarray:
        """(n, 2) recorded positions, optionally only while the agent was active."""
        agent = self.state.agent(agent_id)
        entries = self.state.history[agent_id]
        if active_only and agent.frozen_at is not None:
            entries = [e for e in entries if e[0] <= agent.frozen_at]
        return np.array([p for _, p in entries])

    def all_events(self) -> list[CollisionEvent]:
        return [ev for tick in self.ticks for ev in tick.events]


def run_episode(
    state: SimState,
    policy,
    codebook: SkillCodebook,
    max_ticks: int | None = None,
) -> EpisodeResult:
    """Run decide/step cycles until no agent is active or the scene time limit."""
    ticks: list[TickRecord] = []
    limit = state.scene.rules.time_limit
    while state.active_agents() and state.frame < limit:
        if max_ticks is not None and len(ticks) >= max_ticks:
            break
        observations = {a.agent_id: observe(state, a.agent_id) for a in state.active_agents()}
        prev_skills = {a.agent_id: a.current_skill for a in state.agents}
        decisions = policy.decide(observations, rng=state.rng, frame=state.frame, prev_skills=prev_skills)
        skill_map = {aid: d.skill_id for aid, d in decisions.items()}
        frame_before = state.frame
        state, positions, events = step_decision(state, skill_map, codebook)
        ticks.append(TickRecord(frame=frame_before, decisions=skill_map, positions=positions, events=events))
    return EpisodeResult(state=state, ticks=ticks)
