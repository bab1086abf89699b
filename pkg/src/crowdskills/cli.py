"""Command-line entry point.

Subcommands: ingest, extract-skills, gen-qa, simulate, evaluate, plot.
Every subcommand resolves its settings as defaults < config file < flags,
writes the effective configuration next to its outputs, and is byte-for-byte
reproducible for a fixed configuration.  Exit codes: 0 success, 1 missing
input, 2 parse/validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import metrics, policies, qagen, scene as scene_mod, skills, svgplot, trajdata
from .simcore import SimConfig, episode_from_ground_truth, init_episode, run_episode

ENDPOINT_ENV = "CROWDSKILLS_ENDPOINT"

DEFAULTS = {
    "ingest": {"format": "tsv_frame_id_xy", "source_fps": 25.0, "scene_id": "", "min_length": 0},
    "extract-skills": {"k": 64, "window": 20, "stride": 20, "seed": 0, "min_length": 40},
    "gen-qa": {"m": 3, "seed": 0, "stride": 20, "detour_ratio": 1.5, "r_coll": 0.3, "r_unsafe": 0.6},
    "simulate": {"policy": "greedy", "seed": 0, "lookahead": 1, "lam_forbidden": 10.0, "lam_close": 5.0,
                 "time_scale": 1.0, "endpoint": None, "r_coll": 0.3, "r_unsafe": 0.6,
                 "goal_tolerance": None},
    "evaluate": {"policy": "greedy", "seeds": "0", "lookahead": 1, "lam_forbidden": 10.0,
                 "lam_close": 5.0, "time_scale": 1.0, "endpoint": None, "r_coll": 0.3,
                 "r_unsafe": 0.6, "goal_tolerance": None},
    "plot": {"kind": "trajectories"},
}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = 2):
        super().__init__(message)
        self.exit_code = exit_code


def _load_config_section(config_path: str | None, section: str) -> dict:
    if not config_path:
        return {}
    path = Path(config_path)
    if not path.exists():
        raise CliError(f"config file not found: {config_path}", exit_code=1)
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise CliError("config file must hold a JSON object")
    unknown_sections = set(config) - set(DEFAULTS)
    if unknown_sections:
        raise CliError(f"unknown config sections: {sorted(unknown_sections)}")
    section_cfg = config.get(section, {})
    unknown = set(section_cfg) - set(DEFAULTS[section])
    if unknown:
        raise CliError(f"unknown config keys in [{section}]: {sorted(unknown)}")
    return section_cfg


def _resolve(section: str, args: argparse.Namespace, keys: list[str]) -> dict:
    """defaults < config < explicit flags, with unknown config keys rejected."""
    resolved = dict(DEFAULTS[section])
    resolved.update(_load_config_section(getattr(args, "config", None), section))
    for key in keys:
        attr = key.replace("-", "_")
        value = getattr(args, attr, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _write_effective_config(out_dir: Path, command: str, resolved: dict, inputs: dict) -> None:
    payload = {"command": command, "settings": resolved, "inputs": inputs}
    with open(out_dir / f"{command}.config.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"input not found: {path}", exit_code=1)
    return p


def _apply_goal_tolerance(spec: scene_mod.SceneSpec, resolved: dict) -> scene_mod.SceneSpec:
    tolerance = resolved.get("goal_tolerance")
    if tolerance is not None:
        spec.rules.goal_tolerance = float(tolerance)
    return spec


def _load_scene_arg(name_or_path: str) -> scene_mod.SceneSpec:
    p = Path(name_or_path)
    if p.exists():
        return scene_mod.load_scene(str(p))
    try:
        return scene_mod.load_bundled_scene(name_or_path)
    except FileNotFoundError:
        raise CliError(f"scene not found (file or bundled name): {name_or_path}", exit_code=1) from None


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args: argparse.Namespace) -> int:
    resolved = _resolve("ingest", args, ["format", "source_fps", "scene_id", "min_length"])
    raw = _require_file(args.raw)
    out_dir = _out_dir(args)
    text = raw.read_text(encoding="utf-8")
    detections = trajdata.parse_annotations(text, fmt=resolved["format"])
    tset = trajdata.resample(
        detections,
        source_fps=float(resolved["source_fps"]),
        scene_id=resolved["scene_id"] or raw.stem,
    )
    if int(resolved["min_length"]) > 0:
        tset = trajdata.filter_min_length(tset, int(resolved["min_length"]))
    report = trajdata.validate(tset)
    if not report.ok():
        raise CliError(f"resampled trajectories failed validation: {report.violation_count} violations")
    out_path = out_dir / "trajectories.jsonl"
    trajdata.write_jsonl(tset, str(out_path))
    _write_effective_config(out_dir, "ingest", resolved, {"raw": str(args.raw)})
    print(
        f"ingested {len(detections)} detections -> {len(tset.trajectories)} trajectories "
        f"({tset.dropped_single_detection} dropped, {tset.split_count} splits) -> {out_path}"
    )
    return 0


def _labels_for_transitions(tset: trajdata.TrajectorySet, codebook: skills.SkillCodebook) -> list[list[int]]:
    sequences = []
    for traj in sorted(tset.trajectories, key=lambda t: t.agent_id):
        seq = skills.label_trajectory(traj, codebook, stride=codebook.window)
        if len(seq) >= 1:
            sequences.append(seq)
    return sequences


def cmd_extract_skills(args: argparse.Namespace) -> int:
    resolved = _resolve("extract-skills", args, ["k", "window", "stride", "seed", "min_length"])
    out_dir = _out_dir(args)
    k = int(resolved["k"])
    window = int(resolved["window"])
    stride = int(resolved["stride"])

    sets = []
    for path in args.trajectories:
        sets.append(trajdata.read_jsonl(str(_require_file(path))))
    segments = []
    for tset in sets:
        tset = trajdata.filter_min_length(tset, int(resolved["min_length"]))
        for traj in sorted(tset.trajectories, key=lambda t: t.agent_id):
            for seg in skills.segment(traj, window=window, stride=stride):
                heading = skills.estimate_heading(traj, seg.source_frame)
                segments.append(skills.canonicalize(seg, heading))
    if len(segments) < k:
        raise CliError(f"only {len(segments)} segments extracted; need at least k={k}")
    codebook = skills.fit_codebook(segments, k=k, seed=int(resolved["seed"]), window=window)
    sequences = []
    for tset in sets:
        tset = trajdata.filter_min_length(tset, int(resolved["min_length"]))
        sequences.extend(_labels_for_transitions(tset, codebook))
    transitions = skills.estimate_transitions(sequences, k=k)

    skills.save_codebook(codebook, str(out_dir / "codebook.json"))
    skills.save_transitions(transitions, str(out_dir / "transitions.json"))
    (out_dir / "transitions.svg").write_text(
        svgplot.heatmap_svg(transitions.probs, title=f"skill transitions (k={k})"), encoding="utf-8"
    )
    _write_effective_config(
        out_dir, "extract-skills", resolved, {"trajectories": [str(p) for p in args.trajectories]}
    )
    print(
        f"fitted k={k} codebook from {len(segments)} segments "
        f"(inertia {codebook.fit_meta['inertia']:.4f}, {codebook.fit_meta['iterations']} iterations); "
        f"diagonal mean {transitions.diagonal_mean():.4f} vs off-diagonal {transitions.offdiagonal_mean():.6f}"
    )
    return 0


def cmd_gen_qa(args: argparse.Namespace) -> int:
    resolved = _resolve("gen-qa", args, ["m", "seed", "stride", "detour_ratio", "r_coll", "r_unsafe"])
    out_dir = _out_dir(args)
    gt = trajdata.read_jsonl(str(_require_file(args.trajectories)))
    spec = _load_scene_arg(args.scene)
    codebook = skills.load_codebook(str(_require_file(args.codebook)))
    config = qagen.QAConfig(
        m=int(resolved["m"]),
        seed=int(resolved["seed"]),
        stride=int(resolved["stride"]),
        thresholds=qagen.QAThresholds(detour_ratio=float(resolved["detour_ratio"])),
        sim=SimConfig(r_coll=float(resolved["r_coll"]), r_unsafe=float(resolved["r_unsafe"])),
    )
    batch = qagen.build_qa(gt, spec, codebook, config)
    qagen.write_qa_jsonl(batch, str(out_dir / "qa.jsonl"), str(out_dir / "manifest.json"))
    _write_effective_config(
        out_dir, "gen-qa", resolved,
        {"trajectories": str(args.trajectories), "scene": str(args.scene), "codebook": str(args.codebook)},
    )
    print(f"generated {batch.manifest['counts']['total']} QA samples -> {out_dir / 'qa.jsonl'}")
    return 0


def _build_policy(policy_spec: str, resolved: dict, codebook, spec, gt, transitions, frame_base: str):
    endpoint = os.environ.get(ENDPOINT_ENV) or resolved.get("endpoint")
    if endpoint and (policy_spec == "remote" or policy_spec.startswith("remote:")):
        policy_spec = f"remote:{endpoint}"
    sim_config = SimConfig(
        r_coll=float(resolved.get("r_coll", 0.3)),
        r_unsafe=float(resolved.get("r_unsafe", 0.6)),
        time_scale=float(resolved.get("time_scale", 1.0)),
    )
    return policies.make_policy(
        policy_spec,
        codebook,
        spec,
        transitions=transitions,
        gt=gt,
        config=sim_config,
        lam_forbidden=float(resolved.get("lam_forbidden", 10.0)),
        lam_close=float(resolved.get("lam_close", 5.0)),
        lookahead=int(resolved.get("lookahead", 1)),
        replay_frame_base=frame_base,
    ), sim_config


def _episode_to_jsonl(result, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tick in result.ticks:
            record = {
                "frame": tick.frame,
                "decisions": {str(aid): int(s) for aid, s in sorted(tick.decisions.items())},
                "positions": {
                    str(aid): [[float(x), float(y)] for x, y in pos]
                    for aid, pos in sorted(tick.positions.items())
                },
                "events": [
                    {
                        "frame": ev.frame,
                        "agent_a": ev.agent_a,
                        "agent_b": ev.agent_b,
                        "distance": ev.distance,
                    }
                    for ev in tick.events
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _episode_summary(result, spec) -> dict:
    histories = metrics.active_histories(result)
    return {
        "frames": result.state.frame,
        "agents": {
            str(a.agent_id): {
                "status": a.status.value,
                "final_position": [float(a.position[0]), float(a.position[1])],
                "frozen_at": a.frozen_at,
                "remaining_time": a.remaining_time,
            }
            for a in result.state.agents
        },
        "gsr": metrics.gsr(result.state.agents, spec),
        "srvr": metrics.srvr(histories, spec),
        "collision_events": len(result.all_events()),
    }


def _write_history_csv(result, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame,agent_id,x,y\n")
        for aid in sorted(result.state.history):
            for frame, pos in result.state.history[aid]:
                fh.write(f"{frame},{aid},{pos[0]!r},{pos[1]!r}\n")


def cmd_simulate(args: argparse.Namespace) -> int:
    resolved = _resolve(
        "simulate", args,
        ["policy", "seed", "lookahead", "lam_forbidden", "lam_close", "time_scale", "endpoint",
         "r_coll", "r_unsafe", "goal_tolerance"],
    )
    out_dir = _out_dir(args)
    spec = _apply_goal_tolerance(_load_scene_arg(args.scene), resolved)
    codebook = skills.load_codebook(str(_require_file(args.codebook)))
    transitions = skills.load_transitions(str(_require_file(args.transitions))) if args.transitions else None
    gt = trajdata.read_jsonl(str(_require_file(args.gt))) if args.gt else None

    policy, sim_config = _build_policy(
        resolved["policy"], resolved, codebook, spec, gt, transitions, frame_base="episode"
    )
    if args.scenario:
        scenario = json.loads(_require_file(args.scenario).read_text(encoding="utf-8"))
        state = init_episode(spec, scenario["agents"], seed=int(resolved["seed"]), config=sim_config)
    elif gt is not None:
        state = episode_from_ground_truth(spec, gt, seed=int(resolved["seed"]), config=sim_config)
    else:
        raise CliError("simulate needs --scenario or --gt")
    result = run_episode(state, policy, codebook)

    _episode_to_jsonl(result, out_dir / "episode.jsonl")
    summary = _episode_summary(result, spec)
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    histories = {aid: np.array([p for _, p in entries]) for aid, entries in result.state.history.items()}
    (out_dir / "trajectories.svg").write_text(
        svgplot.scene_trajectories_svg(spec, histories), encoding="utf-8"
    )
    _write_history_csv(result, out_dir / "trajectories.csv")
    _write_effective_config(
        out_dir, "simulate", resolved,
        {
            "scene": str(args.scene),
            "scenario": str(args.scenario) if args.scenario else None,
            "gt": str(args.gt) if args.gt else None,
            "codebook": str(args.codebook),
        },
    )
    print(
        f"episode finished at frame {result.state.frame}: GSR {summary['gsr']:.4f}, "
        f"SRVR {summary['srvr']:.4f}, {summary['collision_events']} collision events"
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    resolved = _resolve(
        "evaluate", args,
        ["policy", "seeds", "lookahead", "lam_forbidden", "lam_close", "time_scale", "endpoint",
         "r_coll", "r_unsafe", "goal_tolerance"],
    )
    out_dir = _out_dir(args)
    if len(args.scene) != len(args.gt):
        raise CliError("--scene and --gt must be given the same number of times")
    seeds = [int(s) for s in str(resolved["seeds"]).split(",") if s != ""]
    if not seeds:
        raise CliError("no seeds given")
    codebook = skills.load_codebook(str(_require_file(args.codebook)))
    transitions = skills.load_transitions(str(_require_file(args.transitions))) if args.transitions else None

    scenes_report: dict[str, dict] = {}
    error_log_rows: list[str] = []
    for scene_arg, gt_arg in zip(args.scene, args.gt):
        spec = _apply_goal_tolerance(_load_scene_arg(scene_arg), resolved)
        gt = trajdata.read_jsonl(str(_require_file(gt_arg)))

        pdm_policy, sim_config = _build_policy(
            resolved["policy"], resolved, codebook, spec, gt, transitions, frame_base="absolute"
        )
        per_seed: dict[str, list[float]] = {"pdm_ade": [], "pdm_fde": [], "srvr": [], "gsr": []}
        for seed in seeds:
            pdm_policy.reset()
            result = metrics.pdm(pdm_policy, gt, spec, codebook, config=sim_config, seed=seed)
            per_seed["pdm_ade"].append(result.ade)
            per_seed["pdm_fde"].append(result.fde)
            for seg in result.segments:
                for i, err in enumerate(seg.errors):
                    error_log_rows.append(f"{spec.scene_id},{seed},{seg.agent_id},{seg.frame},{i + 1},{err!r}")

        episode_policy, _ = _build_policy(
            resolved["policy"], resolved, codebook, spec, gt, transitions, frame_base="episode"
        )
        for seed in seeds:
            episode_policy.reset()
            state = episode_from_ground_truth(spec, gt, seed=seed, config=sim_config)
            episode = run_episode(state, episode_policy, codebook)
            per_seed["srvr"].append(metrics.srvr(metrics.active_histories(episode), spec))
            per_seed["gsr"].append(metrics.gsr(episode.state.agents, spec))

        scene_report = metrics.aggregate(per_seed)
        if len(seeds) >= 2:
            agents = [
                {
                    "agent_id": t.agent_id,
                    "start": t.positions[0].tolist(),
                    "goal": t.positions[-1].tolist(),
                    "remaining_time": int((len(t) - 1) * 1.5),
                }
                for t in sorted(gt.trajectories, key=lambda t: t.agent_id)
            ]
            episode_policy.reset()
            div = metrics.diversity(episode_policy, spec, agents, seeds, codebook, config=sim_config)
            scene_report["div"] = {"value": div.div, "degenerate": div.degenerate}
        scenes_report[spec.scene_id] = scene_report

    config_hash = hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode()
    ).hexdigest()[:16]
    report = metrics.MetricsReport(
        policy=resolved["policy"], seeds=seeds, config_hash=config_hash, scenes=scenes_report
    )
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    (out_dir / "report.txt").write_text(report.render_table(), encoding="utf-8")
    with open(out_dir / "pdm_errors.csv", "w", encoding="utf-8") as fh:
        fh.write("scene,seed,agent_id,frame,step,error\n")
        for row in error_log_rows:
            fh.write(row + "\n")
    _write_effective_config(
        out_dir, "evaluate", resolved,
        {"scenes": [str(s) for s in args.scene], "gt": [str(g) for g in args.gt],
         "codebook": str(args.codebook)},
    )
    print(report.render_table())
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    resolved = _resolve("plot", args, ["kind"])
    out_dir = _out_dir(args)
    if resolved["kind"] == "transitions":
        transitions = skills.load_transitions(str(_require_file(args.transitions)))
        (out_dir / "transitions.svg").write_text(
            svgplot.heatmap_svg(transitions.probs, title=f"skill transitions (k={transitions.k})"),
            encoding="utf-8",
        )
        print(f"wrote {out_dir / 'transitions.svg'}")
    elif resolved["kind"] == "trajectories":
        spec = _load_scene_arg(args.scene)
        histories: dict[int, list] = {}
        with open(_require_file(args.episode_log), "r", encoding="utf-8") as fh:
            for line in fh:
                tick = json.loads(line)
                for aid, pos in tick["positions"].items():
                    histories.setdefault(int(aid), []).extend(pos)
        arrays = {aid: np.array(pos) for aid, pos in histories.items()}
        (out_dir / "trajectories.svg").write_text(
            svgplot.scene_trajectories_svg(spec, arrays), encoding="utf-8"
        )
        print(f"wrote {out_dir / 'trajectories.svg'}")
    else:
        raise CliError(f"unknown plot kind {resolved['kind']!r}")
    _write_effective_config(out_dir, "plot", resolved, {})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdskills", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw annotations and write canonical trajectory JSONL")
    p.add_argument("raw", help="raw annotation text file")
    p.add_argument("--format", choices=list(trajdata.FORMATS), default=None)
    p.add_argument("--source-fps", type=float, default=None, dest="source_fps")
    p.add_argument("--scene-id", default=None, dest="scene_id")
    p.add_argument("--min-length", type=int, default=None, dest="min_length")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract-skills", help="fit the skill codebook and transition matrix")
    p.add_argument("trajectories", nargs="+", help="trajectory JSONL files")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--min-length", type=int, default=None, dest="min_length")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_skills)

    p = sub.add_parser("gen-qa", help="generate the counterfactual QA dataset")
    p.add_argument("trajectories", help="ground-truth trajectory JSONL")
    p.add_argument("--scene", required=True, help="scene file or bundled scene name")
    p.add_argument("--codebook", required=True)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--detour-ratio", type=float, default=None, dest="detour_ratio")
    p.add_argument("--r-coll", type=float, default=None, dest="r_coll")
    p.add_argument("--r-unsafe", type=float, default=None, dest="r_unsafe")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_qa)

    p = sub.add_parser("simulate", help="run one episode under a policy")
    p.add_argument("--scene", required=True)
    p.add_argument("--scenario", default=None, help="scenario JSON with an agents list")
    p.add_argument("--gt", default=None, help="trajectory JSONL (initial conditions / replay source)")
    p.add_argument("--codebook", required=True)
    p.add_argument("--transitions", default=None)
    p.add_argument("--policy", default=None, help="constant:<id> | replay | transition | greedy | remote:<endpoint>")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lookahead", type=int, default=None)
    p.add_argument("--lam-forbidden", type=float, default=None, dest="lam_forbidden")
    p.add_argument("--lam-close", type=float, default=None, dest="lam_close")
    p.add_argument("--time-scale", type=float, default=None, dest="time_scale")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--r-coll", type=float, default=None, dest="r_coll")
    p.add_argument("--r-unsafe", type=float, default=None, dest="r_unsafe")
    p.add_argument("--goal-tolerance", type=float, default=None, dest="goal_tolerance")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="teacher-forced and episode metrics over seeds")
    p.add_argument("--scene", action="append", required=True)
    p.add_argument("--gt", action="append", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--transitions", default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--lookahead", type=int, default=None)
    p.add_argument("--lam-forbidden", type=float, default=None, dest="lam_forbidden")
    p.add_argument("--lam-close", type=float, default=None, dest="lam_close")
    p.add_argument("--time-scale", type=float, default=None, dest="time_scale")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--r-coll", type=float, default=None, dest="r_coll")
    p.add_argument("--r-unsafe", type=float, default=None, dest="r_unsafe")
    p.add_argument("--goal-tolerance", type=float, default=None, dest="goal_tolerance")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="emit SVG plots from logs")
    p.add_argument("--kind", choices=["trajectories", "transitions"], default=None)
    p.add_argument("--episode-log", default=None, dest="episode_log")
    p.add_argument("--scene", default=None)
    p.add_argument("--transitions", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (trajdata.AnnotationParseError, trajdata.AnnotationValidationError,
            scene_mod.SceneFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
