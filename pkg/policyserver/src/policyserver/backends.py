"""Decision backends: constant stub, greedy stub, and the external model hook.

A backend is a callable ``(observations: list[dict], k: int) -> list[dict]``
returning one decision dict per observation, each carrying ``skill_id`` and
optionally ``future_skills`` / ``rationale``.  ``ModelHook`` documents that
contract for integrators plugging in a real model; prompt construction,
decoding, and image handling all live behind the hook.
"""

from __future__ import annotations

import importlib
import json
from typing import Callable, Protocol

from . import scoring

# Patch label codes, matching the harness wire format.
LABEL_CODES = {
    "free": 0,
    "sidewalk": 1,
    "crosswalk": 2,
    "road": 3,
    "grass": 4,
    "obstacle": 5,
    "out_of_bounds": 6,
}
DEFAULT_FORBIDDEN = ("obstacle", "out_of_bounds")

CODEBOOK_FORMAT_VERSION = 1


class ModelHook(Protocol):
    """Contract for an external decision model.

    Receives the serialized observations of one decision tick and the skill
    vocabulary size; must return exactly one decision per observation, in
    order, with ``skill_id`` in ``[0, k)``.  ``future_skills`` (list of
    ids) and ``rationale`` (free text) are optional.
    """

    def __call__(self, observations: list[dict], k: int) -> list[dict]: ...


class BackendError(RuntimeError):
    """A backend broke its contract; surfaces as HTTP 500."""


def load_codebook_centroids(path: str) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CODEBOOK_FORMAT_VERSION:
        raise ValueError(f"unsupported codebook format_version {payload.get('format_version')!r}")
    return payload["centroids"]


def stub_constant(skill_id: int) -> Callable[[list[dict], int], list[dict]]:
    def backend(observations: list[dict], k: int) -> list[dict]:
        return [{"skill_id": skill_id} for _ in observations]

    return backend


def stub_greedy(
    codebook_path: str,
    k: int,
    forbidden: tuple[str, ...] = DEFAULT_FORBIDDEN,
    lam_forbidden: float = scoring.DEFAULT_LAM_FORBIDDEN,
    lam_close: float = scoring.DEFAULT_LAM_CLOSE,
) -> Callable[[list[dict], int], list[dict]]:
    """Greedy scoring over the shared codebook; refuses a k mismatch."""
    centroids = load_codebook_centroids(codebook_path)
    if len(centroids) != k:
        raise ValueError(f"codebook holds {len(centroids)} skills but server is configured for k={k}")
    unknown = set(forbidden) - set(LABEL_CODES)
    if unknown:
        raise ValueError(f"unknown forbidden labels: {sorted(unknown)}")
    codes = frozenset(LABEL_CODES[name] for name in forbidden) | {
        LABEL_CODES["obstacle"],
        LABEL_CODES["out_of_bounds"],
    }

    def backend(observations: list[dict], k: int) -> list[dict]:
        decisions = []
        for obs in observations:
            scores = scoring.score_skills(
                obs, centroids, codes, lam_forbidden=lam_forbidden, lam_close=lam_close
            )
            decisions.append({"skill_id": scoring.best_skill(scores)})
        return decisions

    return backend


def external_model(spec: str) -> Callable[[list[dict], int], list[dict]]:
    """Load a ModelHook given ``package.module:callable``."""
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise ValueError(f"model hook spec must look like 'package.module:callable', got {spec!r}")
    module = importlib.import_module(module_name)
    hook = getattr(module, attr)
    if not callable(hook):
        raise ValueError(f"{spec} is not callable")
    return hook


def validate_decisions(decisions, observations: list[dict], k: int) -> list[dict]:
    """Enforce the ModelHook contract on backend output."""
    if not isinstance(decisions, list) or len(decisions) != len(observations):
        raise BackendError(
            f"backend returned {len(decisions) if isinstance(decisions, list) else type(decisions).__name__} "
            f"decisions for {len(observations)} observations"
        )
    for i, decision in enumerate(decisions):
        if not isinstance(decision, dict) or "skill_id" not in decision:
            raise BackendError(f"decision {i} missing skill_id")
        skill = decision["skill_id"]
        if not isinstance(skill, int) or isinstance(skill, bool) or not 0 <= skill < k:
            raise BackendError(f"decision {i} has skill_id {skill!r} outside [0, {k})")
        future = decision.get("future_skills")
        if future is not None:
            if not isinstance(future, list) or any(
                not isinstance(f, int) or isinstance(f, bool) or not 0 <= f < k for f in future
            ):
                raise BackendError(f"decision {i} has invalid future_skills")
    return decisions
