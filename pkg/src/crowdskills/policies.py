"""Policies mapping observations to skill decisions.

All policies implement ``decide(observations, rng, frame, prev_skills)``
and return one Decision per observed agent.  ``prev_skills`` carries each
agent's previously executed skill (or None) and is the state behind the
transition sampler and the remote-fault fallback; it lives in the simulator
state so snapshot/restore covers it.
"""

from __future__ import annotations

import json
import logging
import select
import shlex
import subprocess
import urllib.error
import urllib.request

import numpy as np

from . import protocol
from .greedy_scoring import (
    DEFAULT_LAM_CLOSE,
    DEFAULT_LAM_FORBIDDEN,
    best_skill,
    score_skills,
)
from .protocol import Decision, ProtocolError
from .scene import LABEL_CODES, SceneSpec
from .simcore import Observation, SimConfig
from .skills import SkillCodebook, TransitionMatrix, label_trajectory
from .trajdata import TrajectorySet

log = logging.getLogger(__name__)

DEFAULT_REMOTE_TIMEOUT = 2.0
MAX_CONSECUTIVE_FAULTS = 3


class EpisodeAborted(RuntimeError):
    """Raised when the remote backend fails too many consecutive times."""


class Policy:
    """Interface for decision policies; subclasses override decide()."""

    def decide(
        self,
        observations: dict[int, Observation],
        rng: np.random.Generator,
        frame: int,
        prev_skills: dict[int, int | None],
    ) -> dict[int, Decision]:
        raise NotImplementedError

    def reset(self) -> None:
        """Clear per-episode internal state (buffers, fault counters)."""


class ConstantPolicy(Policy):
    def __init__(self, skill_id: int):
        self.skill_id = int(skill_id)

    def decide(self, observations, rng, frame, prev_skills):
        return {aid: Decision(skill_id=self.skill_id) for aid in observations}


class ReplayPolicy(Policy):
    """Replays precomputed ground-truth skill labels per agent and frame.

    Off the end of an agent's label table the policy repeats the agent's
    previous skill (or 0 when there is none yet).
    """

    def __init__(self, labels: dict[int, dict[int, int]], window: int = 20):
        self.labels = labels
        self.window = window

    @classmethod
    def from_ground_truth(
        cls,
        gt: TrajectorySet,
        codebook: SkillCodebook,
        frame_base: str = "absolute",
    ) -> "ReplayPolicy":
        """Label every agent's decision frames.

        ``frame_base="absolute"`` assigns labels on the global
        multiples-of-window frame lattice wherever the trajectory covers the
        full decision window (teacher forcing).  ``frame_base="episode"``
        keys them 0, W, 2W, ... from each agent's own first frame (episode
        replay where everyone starts at tick 0).
        """
        window = codebook.window
        table: dict[int, dict[int, int]] = {}
        for traj in gt.trajectories:
            per_frame: dict[int, int] = {}
            if frame_base == "absolute":
                for f in decision_lattice(traj.start_frame, traj.end_frame, window):
                    per_frame[f] = _label_at_frame(traj, f, codebook)
            elif frame_base == "episode":
                for i, lbl in enumerate(label_trajectory(traj, codebook, stride=window)):
                    per_frame[i * window] = lbl
            else:
                raise ValueError(f"unknown frame_base {frame_base!r}")
            table[traj.agent_id] = per_frame
        return cls(table, window=window)

    def decide(self, observations, rng, frame, prev_skills):
        out = {}
        for aid in observations:
            per_frame = self.labels.get(aid, {})
            if frame in per_frame:
                future = []
                nxt = frame + self.window
                while nxt in per_frame:
                    future.append(per_frame[nxt])
                    nxt += self.window
                out[aid] = Decision(
                    skill_id=per_frame[frame],
                    future_skills=tuple(future) if future else None,
                )
            else:
                prev = prev_skills.get(aid)
                out[aid] = Decision(skill_id=prev if prev is not None else 0)
        return out


def decision_lattice(start_frame: int, end_frame: int, window: int) -> list[int]:
    """Global multiples-of-window frames f with [f, f+window] inside [start, end]."""
    first = ((start_frame + window - 1) // window) * window
    return [f for f in range(first, end_frame - window + 1, window)]


def _label_at_frame(traj, frame: int, codebook: SkillCodebook) -> int:
    from .skills import MotionSegment, assign, canonicalize, estimate_heading

    idx = traj.frame_index(frame)
    seg = MotionSegment(
        source_agent=traj.agent_id,
        source_frame=frame,
        origin=(float(traj.positions[idx, 0]), float(traj.positions[idx, 1])),
        positions=traj.positions[idx + 1 : idx + 1 + codebook.window].copy(),
    )
    return assign(canonicalize(seg, estimate_heading(traj, frame)), codebook)


class TransitionSamplerPolicy(Policy):
    """Samples the next skill from the empirical transition row of the previous one.

    Agents without a previous skill sample uniformly.
    """

    def __init__(self, transitions: TransitionMatrix):
        self.transitions = transitions

    def decide(self, observations, rng, frame, prev_skills):
        k = self.transitions.k
        out = {}
        for aid in sorted(observations):
            prev = prev_skills.get(aid)
            if prev is None:
                skill = int(rng.integers(k))
            else:
                skill = int(rng.choice(k, p=self.transitions.probs[prev]))
            out[aid] = Decision(skill_id=skill)
        return out


def greedy_goal_decide(
    obs: Observation,
    codebook: SkillCodebook,
    scene: SceneSpec,
    lam_forbidden: float = DEFAULT_LAM_FORBIDDEN,
    lam_close: float = DEFAULT_LAM_CLOSE,
    config: SimConfig | None = None,
) -> Decision:
    """Pick the skill with the best goal-progress / safety trade-off.

    Scoring runs on the serialized observation so that wire-protocol
    re-implementations agree with it exactly; the scene contributes only
    its forbidden label set.
    """
    config = config or SimConfig()
    payload = protocol.encode_observation(obs)
    forbidden_codes = frozenset(LABEL_CODES[lbl] for lbl in scene.rules.forbidden)
    scores = score_skills(
        payload,
        codebook.centroids.tolist(),
        forbidden_codes,
        lam_forbidden=lam_forbidden,
        lam_close=lam_close,
        r_unsafe=config.r_unsafe,
        fps=config.fps,
    )
    return Decision(skill_id=best_skill(scores))


class GreedyGoalPolicy(Policy):
    def __init__(
        self,
        codebook: SkillCodebook,
        scene: SceneSpec,
        lam_forbidden: float = DEFAULT_LAM_FORBIDDEN,
        lam_close: float = DEFAULT_LAM_CLOSE,
        config: SimConfig | None = None,
    ):
        self.codebook = codebook
        self.scene = scene
        self.lam_forbidden = lam_forbidden
        self.lam_close = lam_close
        self.config = config or SimConfig()

    def decide(self, observations, rng, frame, prev_skills):
        return {
            aid: greedy_goal_decide(
                obs,
                self.codebook,
                self.scene,
                lam_forbidden=self.lam_forbidden,
                lam_close=self.lam_close,
                config=self.config,
            )
            for aid, obs in observations.items()
        }


class RemotePolicy(Policy):
    """Queries a remote backend over HTTP or a child process's stdio.

    ``endpoint`` is ``http://host:port`` (POST to /decide) or
    ``stdio:<command line>`` (one JSON line per request/response).  On
    timeout or a malformed response the policy repeats each agent's
    previous skill (skill persistence is the empirical prior) and logs the
    fault; more than MAX_CONSECUTIVE_FAULTS consecutive faults abort the
    episode.
    """

    def __init__(
        self,
        endpoint: str,
        k: int,
        scene_id: str = "",
        timeout: float = DEFAULT_REMOTE_TIMEOUT,
        max_faults: int = MAX_CONSECUTIVE_FAULTS,
    ):
        self.endpoint = endpoint
        self.k = int(k)
        self.scene_id = scene_id
        self.timeout = timeout
        self.max_faults = max_faults
        self.consecutive_faults = 0
        self.fault_log: list[str] = []
        self._proc: subprocess.Popen | None = None
        if not (endpoint.startswith("http://") or endpoint.startswith("https://") or endpoint.startswith("stdio:")):
            raise ValueError(f"unsupported endpoint scheme: {endpoint!r}")

    def reset(self) -> None:
        self.consecutive_faults = 0

    def close(self) -> None:
        if self._proc is not None:
            self._proc.terminate()
            self._proc.wait(timeout=5)
            self._proc = None

    def _transport(self, request: dict) -> object:
        if self.endpoint.startswith("stdio:"):
            return self._stdio_roundtrip(request)
        url = self.endpoint.rstrip("/")
        if not url.endswith("/decide"):
            url += "/decide"
        body = json.dumps(request, sort_keys=True).encode()
        req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode())

    def _stdio_roundtrip(self, request: dict) -> object:
        if self._proc is None or self._proc.poll() is not None:
            command = shlex.split(self.endpoint[len("stdio:") :])
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps(request, sort_keys=True) + "\n")
        self._proc.stdin.flush()
        ready, _, _ = select.select([self._proc.stdout], [], [], self.timeout)
        if not ready:
            raise TimeoutError(f"stdio backend did not answer within {self.timeout}s")
        line = self._proc.stdout.readline()
        if not line:
            raise ProtocolError("stdio backend closed its output")
        return json.loads(line)

    def decide(self, observations, rng, frame, prev_skills):
        request = protocol.encode_request(self.scene_id, frame, self.k, observations)
        expected = set(observations)
        try:
            payload = self._transport(request)
            decisions = protocol.parse_response(payload, expected, self.k)
            self.consecutive_faults = 0
            return decisions
        except (ProtocolError, TimeoutError, OSError, urllib.error.URLError, json.JSONDecodeError) as exc:
            self.consecutive_faults += 1
            message = f"remote fault #{self.consecutive_faults} at frame {frame}: {exc}"
            self.fault_log.append(message)
            log.warning("%s", message)
            if self.consecutive_faults > self.max_faults:
                raise EpisodeAborted(
                    f"aborting after {self.consecutive_faults} consecutive remote faults; last: {exc}"
                ) from exc
            return {
                aid: Decision(skill_id=prev_skills.get(aid) if prev_skills.get(aid) is not None else 0)
                for aid in observations
            }


class LookaheadPolicy(Policy):
    """Buffers multi-horizon predictions so the backend is queried every depth ticks.

    On a query tick the wrapped policy must return at least depth-1
    future_skills per agent; shortfalls drain the buffer early and trigger
    a re-query on the next tick.
    """

    def __init__(self, inner: Policy, depth: int):
        if depth < 1:
            raise ValueError("lookahead depth must be >= 1")
        self.inner = inner
        self.depth = depth
        self.buffers: dict[int, list[int]] = {}
        self.query_count = 0

    def reset(self) -> None:
        self.buffers.clear()
        self.query_count = 0
        self.inner.reset()

    def decide(self, observations, rng, frame, prev_skills):
        if self.depth == 1:
            self.query_count += 1
            return self.inner.decide(observations, rng, frame, prev_skills)
        if all(self.buffers.get(aid) for aid in observations):
            return {aid: Decision(skill_id=self.buffers[aid].pop(0)) for aid in observations}
        self.query_count += 1
        fresh = self.inner.decide(observations, rng, frame, prev_skills)
        out = {}
        for aid, decision in fresh.items():
            future = list(decision.future_skills or ())[: self.depth - 1]
            self.buffers[aid] = future
            out[aid] = decision
        return out


def make_policy(
    spec_str: str,
    codebook: SkillCodebook,
    scene: SceneSpec,
    transitions: TransitionMatrix | None = None,
    gt: TrajectorySet | None = None,
    config: SimConfig | None = None,
    lam_forbidden: float = DEFAULT_LAM_FORBIDDEN,
    lam_close: float = DEFAULT_LAM_CLOSE,
    lookahead: int = 1,
    replay_frame_base: str = "episode",
) -> Policy:
    """Build a policy from a CLI spec string.

    Forms: ``constant:<id>``, ``replay``, ``transition``, ``greedy``,
    ``remote:<endpoint>`` (endpoint keeps its own scheme prefix).
    """
    if spec_str.startswith("constant:"):
        policy: Policy = ConstantPolicy(int(spec_str.split(":", 1)[1]))
    elif spec_str == "replay":
        if gt is None:
            raise ValueError("replay policy needs ground-truth trajectories")
        policy = ReplayPolicy.from_ground_truth(gt, codebook, frame_base=replay_frame_base)
    elif spec_str == "transition":
        if transitions is None:
            raise ValueError("transition policy needs a transition matrix")
        policy = TransitionSamplerPolicy(transitions)
    elif spec_str == "greedy":
        policy = GreedyGoalPolicy(
            codebook, scene, lam_forbidden=lam_forbidden, lam_close=lam_close, config=config
        )
    elif spec_str.startswith("remote:"):
        endpoint = spec_str.split(":", 1)[1]
        policy = RemotePolicy(endpoint, k=codebook.k, scene_id=scene.scene_id)
    else:
        raise ValueError(f"unknown policy spec {spec_str!r}")
    if lookahead > 1:
        policy = LookaheadPolicy(policy, depth=lookahead)
    return policy
