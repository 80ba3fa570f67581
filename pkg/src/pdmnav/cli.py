"""Command-line entry point: ``pdmnav <subcommand> ...``.

Failures exit nonzero with a JSON object ``{"error": ..., "message": ...}``
on standard error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import io
from .inference import DEFAULT_PARTICLES, DEFAULT_SIGMA, InferenceConfig, SceneModel, infer_trajectory
from .metrics import metric_exit_time, metric_min_separation, metric_path_length
from .params import MotionParams
from .pdm import REFERENCE_MODEL, evaluate, fit, loocv
from .sim.scenarios import run_scenario
from .socialnav import run_navigation
from .vehicle import Mode, run_vehicle


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _finite(x):
    return float(x) if x is not None and math.isfinite(x) else None


def _load(path, seed=None) -> io.ScenarioFile:
    data = io.load_structured(path)
    if seed is not None:
        if not isinstance(data, dict):
            raise io.FormatError(f"{path}: scenario file must hold a mapping")
        data = {**data, "seed": int(seed)}
    try:
        return io.parse_scenario(data)
    except io.FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise io.FormatError(f"{path}: {exc}") from None


def _model(path):
    return REFERENCE_MODEL if path is None else io.read_model(path)


def _crowd_metrics(scenario, traj) -> dict:
    metrics = {"completed": bool(traj.completed), "min_separation": _finite(metric_min_separation(traj)),
               "ticks": int(len(traj.ticks))}
    hl = scenario.highlighted
    if hl is not None:
        metrics["highlighted"] = int(hl)
        metrics["path_length"] = metric_path_length(traj, hl)
        if "exit_line" in scenario.meta:
            ex = metric_exit_time(traj, hl, scenario.meta["exit_line"])
            metrics["exit_time"] = ex.time if ex.crossed else None
            metrics["exited"] = bool(ex.crossed)
    return metrics


def cmd_simulate(args):
    sf = _load(args.scenario, args.seed)
    if sf.scenario is None:
        raise CliError(f"{args.scenario} is a vehicle scenario; use the vehicle subcommand")
    traj = run_scenario(sf.scenario)
    out = Path(args.out)
    csv_path = io.write_trajectories(traj, out / "trajectories.csv")
    report = io.RunReport(sf.name, sf.seed, _crowd_metrics(sf.scenario, traj),
                          {"trajectories": csv_path.name})
    report.write(out / "report.json")
    print(report.to_json(), end="")


def cmd_dominance(args):
    try:
        values = [float(v) for v in args.params.split(",")]
    except ValueError:
        raise CliError(f"--params must be five comma-separated numbers, got {args.params!r}") from None
    if len(values) != 5:
        raise CliError(f"--params needs five values, got {len(values)}")
    score = evaluate(_model(args.model), MotionParams.from_array(values))
    print(json.dumps({"raw": score.raw, "clamped": score.clamped}))


def cmd_fit(args):
    model = fit(io.read_samples(args.samples))
    io.write_model(model, args.out)
    print(json.dumps({"coeffs": [float(c) for c in model.coeffs], "model": str(args.out)}))


def cmd_loocv(args):
    print(json.dumps({"loocv_mae": loocv(io.read_samples(args.samples))}))


def cmd_infer(args):
    traj = io.read_trajectories(args.traj, dt=args.dt)
    goal, obstacles, sim_seed = None, (), 0
    if args.scenario is not None:
        sf = _load(args.scenario)
        if sf.scenario is None:
            raise CliError("--scenario must describe a crowd scene")
        world = sf.scenario.initial_world()
        goal = world.agent(args.agent).goal
        obstacles, sim_seed = sf.scenario.obstacles, sf.scenario.seed
    cfg = InferenceConfig(args.particles, args.sigma, args.seed,
                          SceneModel(goal=goal, obstacles=obstacles, sim_seed=sim_seed), _model(args.model))
    timeline, _ = infer_trajectory(traj, args.agent, cfg)
    path = Path(args.out or "timeline.csv")
    io.write_timeline(timeline, path)
    last = timeline[-1]
    print(json.dumps({"timeline": str(path), "frames": len(timeline),
                      "final_params": [float(v) for v in last.params.as_array()],
                      "dominance_raw": last.score.raw, "dominance_clamped": last.score.clamped}))


def cmd_navigate(args):
    sf = _load(args.scenario, args.seed)
    if sf.scenario is None or sf.controller is None:
        raise CliError(f"{args.scenario} needs a crowd scene with a controller block")
    run = run_navigation(sf.scenario, sf.robot_id, sf.controller, _model(args.model))
    out = Path(args.out)
    traj_path = io.write_trajectories(run.trajectories, out / "trajectories.csv")
    log_path = io.write_replans(run.replans, out / "replans.csv")
    metrics = _crowd_metrics(sf.scenario, run.trajectories)
    metrics["replans"] = [{"time": r.time, "d_des": r.d_des, "achieved": r.achieved} for r in run.replans]
    report = io.RunReport(sf.name, sf.seed, metrics,
                          {"trajectories": traj_path.name, "replans": log_path.name})
    report.write(out / "report.json")
    print(report.to_json(), end="")


def cmd_vehicle(args):
    sf = _load(args.scenario, args.seed)
    if sf.vehicle is None:
        raise CliError(f"{args.scenario} has no vehicle block")
    run = run_vehicle(sf.vehicle, _model(args.model))
    out = Path(args.out)
    traj_path = io.write_trajectories(run.trajectories, out / "trajectories.csv")
    log_path = io.write_decisions(run.decisions, out / "decisions.csv")
    metrics = {
        "completed": bool(run.completed),
        "min_separation": _finite(metric_min_separation(run.trajectories, run.trajectories.radii[0])),
        "min_vehicle_clearance": _finite(run.min_clearance),
        "yield_ticks": sum(r.mode is Mode.YIELDING for r in run.decisions),
        "ticks": len(run.decisions),
    }
    report = io.RunReport(sf.name, sf.seed, metrics,
                          {"trajectories": traj_path.name, "decisions": log_path.name})
    report.write(out / "report.json")
    print(report.to_json(), end="")


def cmd_bench(args):
    from .bench import run_all, table

    results = run_all(jobs=args.jobs)
    print(table(results))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return 0 if passed == len(results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pdmnav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a crowd scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("dominance", help="dominance of one parameter vector")
    s.add_argument("--params", required=True, help='"neighbor_dist,max_neighbors,planning_horizon,radius,pref_speed"')
    s.add_argument("--model")
    s.set_defaults(func=cmd_dominance)

    s = sub.add_parser("fit", help="fit the dominance model to labeled samples")
    s.add_argument("--samples", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("loocv", help="leave-one-out mean absolute error")
    s.add_argument("--samples", required=True)
    s.set_defaults(func=cmd_loocv)

    s = sub.add_parser("infer", help="infer an agent's motion parameters from a trajectory CSV")
    s.add_argument("--traj", required=True)
    s.add_argument("--agent", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scenario", help="scenario file supplying the goal and walls")
    s.add_argument("--particles", type=int, default=DEFAULT_PARTICLES)
    s.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    s.add_argument("--dt", type=float)
    s.add_argument("--model")
    s.add_argument("--out", help="timeline CSV path (default timeline.csv)")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("navigate", help="closed-loop robot run with replanning")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--model")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_navigate)

    s = sub.add_parser("vehicle", help="vehicle run with decision log")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--model")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_vehicle)

    s = sub.add_parser("bench", help="run the acceptance suite")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        status = args.func(args)
        return 0 if status is None else int(status)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
