"""Request validation for protocol version "1".

Errors carry the JSON field path of the first violation (for example
``agents[0].observation.semantic_patch[12]``) so clients can pinpoint what
they sent wrong.
"""

from __future__ import annotations

from . import PROTOCOL_VERSION

PATCH_CELLS = 16 * 16
LABEL_CODE_RANGE = range(0, 7)


class RequestError(ValueError):
    """Invalid request; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise RequestError(path, message)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return (isinstance(value, (int, float)) and not isinstance(value, bool))


def _check_number_list(value, path: str, length: int) -> None:
    _require(isinstance(value, list), path, "expected a list")
    _require(len(value) == length, path, f"expected {length} numbers, got {len(value)}")
    for i, item in enumerate(value):
        _require(_is_number(item), f"{path}[{i}]", "expected a number")


def validate_observation(obs, path: str) -> None:
    _require(isinstance(obs, dict), path, "expected an object")
    for key in ("self_pose", "goal_relative", "remaining_time", "group_relative", "neighbors", "semantic_patch"):
        _require(key in obs, f"{path}.{key}", "missing required field")
    _check_number_list(obs["self_pose"], f"{path}.self_pose", 3)
    _check_number_list(obs["goal_relative"], f"{path}.goal_relative", 2)
    _require(_is_number(obs["remaining_time"]), f"{path}.remaining_time", "expected a number")
    _require(isinstance(obs["group_relative"], list), f"{path}.group_relative", "expected a list")
    for i, entry in enumerate(obs["group_relative"]):
        _check_number_list(entry, f"{path}.group_relative[{i}]", 2)
    _require(isinstance(obs["neighbors"], list), f"{path}.neighbors", "expected a list")
    for i, entry in enumerate(obs["neighbors"]):
        _check_number_list(entry, f"{path}.neighbors[{i}]", 4)
    patch = obs["semantic_patch"]
    _require(isinstance(patch, list), f"{path}.semantic_patch", "expected a list")
    _require(
        len(patch) == PATCH_CELLS,
        f"{path}.semantic_patch",
        f"expected {PATCH_CELLS} label codes, got {len(patch)}",
    )
    for i, code in enumerate(patch):
        _require(
            _is_int(code) and code in LABEL_CODE_RANGE,
            f"{path}.semantic_patch[{i}]",
            f"invalid label code {code!r}",
        )
    if "image_ref" in obs:
        _require(isinstance(obs["image_ref"], str), f"{path}.image_ref", "expected a string")


def validate_request(payload, expected_k: int) -> list[dict]:
    """Validate a /decide body and return the agents list."""
    _require(isinstance(payload, dict), "request", "expected a JSON object")
    _require("version" in payload, "version", "missing required field")
    _require(
        payload["version"] == PROTOCOL_VERSION,
        "version",
        f"expected {PROTOCOL_VERSION!r}, got {payload['version']!r}",
    )
    _require("k" in payload, "k", "missing required field")
    _require(_is_int(payload["k"]), "k", "expected an integer")
    _require(
        payload["k"] == expected_k,
        "k",
        f"server codebook has k={expected_k}, request declares k={payload['k']}",
    )
    _require("frame" in payload, "frame", "missing required field")
    _require(_is_int(payload["frame"]), "frame", "expected an integer")
    _require("scene_id" in payload, "scene_id", "missing required field")
    _require(isinstance(payload["scene_id"], str), "scene_id", "expected a string")
    _require("agents" in payload, "agents", "missing required field")
    agents = payload["agents"]
    _require(isinstance(agents, list), "agents", "expected a list")
    seen: set[int] = set()
    for i, agent in enumerate(agents):
        path = f"agents[{i}]"
        _require(isinstance(agent, dict), path, "expected an object")
        _require("agent_id" in agent, f"{path}.agent_id", "missing required field")
        _require(_is_int(agent["agent_id"]), f"{path}.agent_id", "expected an integer")
        _require(agent["agent_id"] not in seen, f"{path}.agent_id", f"duplicate agent {agent['agent_id']}")
        seen.add(agent["agent_id"])
        _require("observation" in agent, f"{path}.observation", "missing required field")
        validate_observation(agent["observation"], f"{path}.observation")
    return agents
