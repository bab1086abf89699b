"""Remote-policy wire protocol, version "1".

Request (one JSON object per decision tick):

    {"version": "1", "scene_id": str, "frame": int, "k": int,
     "agents": [{"agent_id": int, "observation": {
         "self_pose": [x, y, heading],
         "goal_relative": [dx, dy],
         "remaining_time": int,
         "group_relative": [[dx, dy], ...],
         "neighbors": [[dx, dy, vx, vy], ...],
         "semantic_patch": [256 label codes, row-major],
         "image_ref": str (optional)}}]}

Response:

    {"version": "1", "decisions": [{"agent_id": int, "skill_id": int,
      "future_skills": [int, ...] (optional), "rationale": str (optional)}]}

Patch label codes follow ``scene.LABEL_CODES``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simcore import PATCH_SIZE, Observation

PROTOCOL_VERSION = "1"


class ProtocolError(ValueError):
    """Response violating the wire contract; message names the field."""


@dataclass(frozen=True)
class Decision:
    skill_id: int
    future_skills: tuple[int, ...] | None = None
    rationale: str | None = None


def encode_observation(obs: Observation, image_ref: str | None = None) -> dict:
    payload = {
        "self_pose": [obs.self_pose[0], obs.self_pose[1], obs.self_pose[2]],
        "goal_relative": [obs.goal_relative[0], obs.goal_relative[1]],
        "remaining_time": obs.remaining_time,
        "group_relative": [[dx, dy] for dx, dy in obs.group_relative],
        "neighbors": [[dx, dy, vx, vy] for dx, dy, vx, vy in obs.neighbors],
        "semantic_patch": [int(c) for c in obs.semantic_patch.reshape(-1)],
    }
    if image_ref is not None:
        payload["image_ref"] = image_ref
    return payload


def decode_observation(payload: dict) -> Observation:
    patch = np.array(payload["semantic_patch"], dtype=np.int8).reshape(PATCH_SIZE, PATCH_SIZE)
    return Observation(
        self_pose=tuple(float(v) for v in payload["self_pose"]),
        goal_relative=tuple(float(v) for v in payload["goal_relative"]),
        remaining_time=int(payload["remaining_time"]),
        group_relative=[(float(a), float(b)) for a, b in payload["group_relative"]],
        neighbors=[tuple(float(v) for v in nb) for nb in payload["neighbors"]],
        semantic_patch=patch,
    )


def encode_request(
    scene_id: str,
    frame: int,
    k: int,
    observations: dict[int, Observation],
    image_refs: dict[int, str] | None = None,
) -> dict:
    image_refs = image_refs or {}
    return {
        "version": PROTOCOL_VERSION,
        "scene_id": scene_id,
        "frame": int(frame),
        "k": int(k),
        "agents": [
            {"agent_id": int(aid), "observation": encode_observation(obs, image_refs.get(aid))}
            for aid, obs in sorted(observations.items())
        ],
    }


def parse_response(payload: object, expected_agents: set[int], k: int) -> dict[int, Decision]:
    """Validate a response object and return one Decision per expected agent."""
    if not isinstance(payload, dict):
        raise ProtocolError("response: expected a JSON object")
    if payload.get("version") != PROTOCOL_VERSION:
        raise ProtocolError(f"response.version: expected {PROTOCOL_VERSION!r}, got {payload.get('version')!r}")
    decisions = payload.get("decisions")
    if not isinstance(decisions, list):
        raise ProtocolError("response.decisions: expected a list")
    out: dict[int, Decision] = {}
    for i, entry in enumerate(decisions):
        where = f"response.decisions[{i}]"
        if not isinstance(entry, dict):
            raise ProtocolError(f"{where}: expected an object")
        if "agent_id" not in entry or "skill_id" not in entry:
            raise ProtocolError(f"{where}: missing agent_id or skill_id")
        aid = entry["agent_id"]
        skill = entry["skill_id"]
        if not isinstance(aid, int) or isinstance(aid, bool):
            raise ProtocolError(f"{where}.agent_id: expected an integer")
        if not isinstance(skill, int) or isinstance(skill, bool):
            raise ProtocolError(f"{where}.skill_id: expected an integer")
        if aid not in expected_agents:
            raise ProtocolError(f"{where}.agent_id: unexpected agent {aid}")
        if aid in out:
            raise ProtocolError(f"{where}.agent_id: duplicate decision for agent {aid}")
        if not 0 <= skill < k:
            raise ProtocolError(f"{where}.skill_id: {skill} out of range for k={k}")
        future = entry.get("future_skills")
        if future is not None:
            if not isinstance(future, list):
                raise ProtocolError(f"{where}.future_skills: expected a list")
            for j, fs in enumerate(future):
                if not isinstance(fs, int) or isinstance(fs, bool) or not 0 <= fs < k:
                    raise ProtocolError(f"{where}.future_skills[{j}]: invalid skill id {fs!r}")
            future = tuple(future)
        rationale = entry.get("rationale")
        if rationale is not None and not isinstance(rationale, str):
            raise ProtocolError(f"{where}.rationale: expected a string")
        out[aid] = Decision(skill_id=skill, future_skills=future, rationale=rationale)
    missing = expected_agents - set(out)
    if missing:
        raise ProtocolError(f"response.decisions: missing agents {sorted(missing)}")
    return out
