"""File formats: scenario files, CSV time series, model and report JSON.

Every format carries a version: scenario, model and report files hold a
``format`` key, CSV files start with a ``# pdmnav <kind> format 1`` line
that readers skip along with any other ``#`` comment.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath

import numpy as np
import yaml

from .params import PARAM_NAMES, MotionParams
from .pdm import DominanceModel, NormalizationSpec, SurveyResponse
from .sim.core import AgentState, Kind
from .sim.scenarios import Scenario, ScenarioKind, Termination, TrajectorySet, build_scenario
from .socialnav import ControllerConfig, corridor_with_robot
from .vehicle import (
    DominanceSign, ProximityConfig, VehicleConfig, VehicleScenario, crossing_scenario,
)

FORMAT_VERSION = 1
TRAJECTORY_HEADER = ("tick", "time", "agent_id", "x", "y", "vx", "vy")
TIMELINE_HEADER = ("time", "agent_id", *PARAM_NAMES, "dominance_raw", "dominance_clamped")
REPLAN_HEADER = ("time", "robot_id", "d_des", "achieved_d", *PARAM_NAMES)
DECISION_HEADER = ("time", "mode", "chosen_speed", "min_ped_distance", "max_ped_dominance")
SAMPLE_HEADER = (*PARAM_NAMES, "dominance")
SURVEY_HEADER = ("video_id", "V_sub", "V_with", "V_dom", "V_conf")

ROBOT_CORRIDOR = "RobotCorridor"
VEHICLE_CROSSING = "VehicleCrossing"


class FormatError(ValueError):
    """A file does not follow its documented schema."""


def _f(x: float) -> str:
    return f"{float(x):.6f}"


# -- generic CSV helpers -------------------------------------------------------

def _write_csv(path, kind: str, header, rows):
    path = FsPath(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# pdmnav {kind} format {FORMAT_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _read_csv(path, header):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(lines)
    try:
        got = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise FormatError(f"{path}: empty file") from None
    if got != tuple(header):
        raise FormatError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
    rows = [row for row in reader]
    for k, row in enumerate(rows):
        if len(row) != len(header):
            raise FormatError(f"{path}: row {k + 1} has {len(row)} fields, expected {len(header)}")
    return rows


def _floats(row, path):
    try:
        return [float(v) for v in row]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- trajectories ----------------------------------------------------------------

def write_trajectories(traj: TrajectorySet, path):
    rows = []
    for t, tick in enumerate(traj.ticks):
        time = tick * traj.dt
        for k, aid in enumerate(traj.ids):
            (x, y), (vx, vy) = traj.positions[t, k], traj.velocities[t, k]
            rows.append((int(tick), _f(time), aid, _f(x), _f(y), _f(vx), _f(vy)))
    return _write_csv(path, "trajectory", TRAJECTORY_HEADER, rows)


def read_trajectories(path, dt: float | None = None) -> TrajectorySet:
    """Load a trajectory CSV; every agent must appear at every tick."""
    rows = _read_csv(path, TRAJECTORY_HEADER)
    if not rows:
        raise FormatError(f"{path}: no trajectory rows")
    data = np.array([_floats(r, path) for r in rows])
    ticks = np.unique(data[:, 0].astype(np.int64))
    ids = tuple(int(i) for i in dict.fromkeys(data[:, 2].astype(np.int64)))
    T, n = len(ticks), len(ids)
    if len(rows) != T * n:
        raise FormatError(f"{path}: expected {T * n} rows for {n} agents x {T} ticks, got {len(rows)}")
    t_index = {int(t): k for k, t in enumerate(ticks)}
    a_index = {a: k for k, a in enumerate(ids)}
    pos = np.full((T, n, 2), np.nan)
    vel = np.full((T, n, 2), np.nan)
    for row in data:
        t, a = t_index[int(row[0])], a_index[int(row[2])]
        pos[t, a] = row[3:5]
        vel[t, a] = row[5:7]
    if np.isnan(pos).any():
        raise FormatError(f"{path}: duplicate or missing agent rows")
    if dt is None:
        moving = data[data[:, 0] > 0]
        if len(moving) == 0:
            raise FormatError(f"{path}: cannot infer dt from a single tick; pass dt")
        dt = float(np.round(moving[0, 1] / moving[0, 0], 9))
    return TrajectorySet(float(dt), ids, ticks, pos, vel, True)


# -- inference timeline, replans, decisions ---------------------------------------------

def write_timeline(entries, path):
    rows = [
        (_f(e.time), e.agent_id, *(_f(v) for v in e.params.as_array()),
         _f(e.score.raw), _f(e.score.clamped))
        for e in entries
    ]
    return _write_csv(path, "timeline", TIMELINE_HEADER, rows)


def read_timeline(path) -> list:
    return [dict(zip(TIMELINE_HEADER, _floats(r, path))) for r in _read_csv(path, TIMELINE_HEADER)]


def write_replans(records, path):
    rows = [
        (_f(r.time), r.robot_id, _f(r.d_des), _f(r.achieved), *(_f(v) for v in r.params.as_array()))
        for r in records
    ]
    return _write_csv(path, "replan", REPLAN_HEADER, rows)


def read_replans(path) -> list:
    return [dict(zip(REPLAN_HEADER, _floats(r, path))) for r in _read_csv(path, REPLAN_HEADER)]


def write_decisions(records, path):
    rows = [
        (_f(r.time), r.mode.value, _f(r.chosen_speed), _f(r.min_ped_distance), _f(r.max_ped_dominance))
        for r in records
    ]
    return _write_csv(path, "decision", DECISION_HEADER, rows)


def read_decisions(path) -> list:
    out = []
    for r in _read_csv(path, DECISION_HEADER):
        t, speed, dist, dom = _floats([r[0], r[2], r[3], r[4]], path)
        out.append({"time": t, "mode": r[1], "chosen_speed": speed,
                    "min_ped_distance": dist, "max_ped_dominance": dom})
    return out


# -- PDM data ------------------------------------------------------------------------

def write_samples(X, y, path):
    X = np.asarray(X, dtype=float).reshape(-1, 5)
    rows = [(*(repr(float(v)) for v in x), repr(float(d))) for x, d in zip(X, np.ravel(y))]
    return _write_csv(path, "samples", SAMPLE_HEADER, rows)


def read_samples(path):
    """Labeled samples as ``(X, y)`` arrays, ready for ``pdm.fit``."""
    rows = _read_csv(path, SAMPLE_HEADER)
    if not rows:
        raise FormatError(f"{path}: no samples")
    data = np.array([_floats(r, path) for r in rows]).reshape(-1, 6)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite values")
    return data[:, :5], data[:, 5]


def read_survey(path) -> list:
    """``(video_id, SurveyResponse)`` pairs from adjective-mean rows."""
    out = []
    for r in _read_csv(path, SURVEY_HEADER):
        vals = _floats(r[1:], path)
        try:
            out.append((r[0], SurveyResponse(*vals)))
        except ValueError as exc:
            raise FormatError(f"{path}: video {r[0]}: {exc}") from None
    return out


def model_to_dict(model: DominanceModel) -> dict:
    return {
        "format": FORMAT_VERSION,
        "coeffs": [float(v) for v in model.coeffs],
        "defaults": [float(v) for v in model.norm.defaults],
        "half_ranges": [float(v) for v in model.norm.half_ranges],
    }


def model_from_dict(data: dict) -> DominanceModel:
    _check_format(data, "model")
    try:
        norm = NormalizationSpec(np.array(data["defaults"], float), np.array(data["half_ranges"], float))
        return DominanceModel(np.array(data["coeffs"], float), norm)
    except KeyError as exc:
        raise FormatError(f"model file missing key {exc}") from None


def write_model(model: DominanceModel, path):
    path = FsPath(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n")
    return path


def read_model(path) -> DominanceModel:
    return model_from_dict(load_structured(path))


# -- run reports --------------------------------------------------------------------------

@dataclass(frozen=True)
class RunReport:
    """Summary of one run. Metrics that do not apply are ``None``."""

    scenario: str
    seed: int
    metrics: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, value in self.metrics.items():
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"metric {key} must be finite, got {value}")
        sep = self.metrics.get("min_separation")
        if sep is not None and sep < -1e-3:
            raise ValueError(f"min_separation {sep} below the overlap tolerance")

    def to_json(self) -> str:
        return json.dumps({"format": FORMAT_VERSION, **asdict(self)}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        _check_format(data, "report")
        return cls(data["scenario"], int(data["seed"]), data.get("metrics", {}), data.get("artifacts", {}))

    def write(self, path):
        path = FsPath(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path


# -- scenario files --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioFile:
    """Parsed scenario file: a crowd scene, optional robot controller or vehicle run."""

    name: str
    seed: int
    scenario: Scenario | None = None
    robot_id: int | None = None
    controller: ControllerConfig | None = None
    vehicle: VehicleScenario | None = None


def _check_format(data, what):
    if not isinstance(data, dict):
        raise FormatError(f"{what} file must hold a mapping")
    if data.get("format") != FORMAT_VERSION:
        raise FormatError(f"{what} file needs 'format: {FORMAT_VERSION}', got {data.get('format')!r}")


def load_structured(path) -> dict:
    text = FsPath(path).read_text()
    try:
        return yaml.safe_load(text)  # JSON is valid YAML
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _params(value) -> MotionParams:
    if value is None:
        return MotionParams()
    if isinstance(value, dict):
        return MotionParams.from_mapping(value)
    return MotionParams.from_array(value)


def _obstacles(value) -> tuple:
    return tuple(tuple((float(x), float(y)) for x, y in seg) for seg in (value or ()))


def _agent(d: dict) -> AgentState:
    try:
        return AgentState(
            int(d["id"]), tuple(d["position"]), tuple(d.get("velocity", (0.0, 0.0))),
            None if d.get("goal") is None else tuple(d["goal"]),
            _params(d.get("params")), Kind.parse(d.get("kind", "pedestrian")),
        )
    except KeyError as exc:
        raise FormatError(f"agent entry missing key {exc}") from None


def _agent_dict(a: AgentState) -> dict:
    return {
        "id": a.id, "position": list(a.position), "velocity": list(a.velocity),
        "goal": list(a.goal), "params": [float(v) for v in a.params.as_array()],
        "kind": a.kind.name.lower(),
    }


def _termination(value) -> Termination | None:
    if value is None:
        return None
    if isinstance(value, str):
        return Termination(value)
    return Termination(value.get("kind", "all_at_goal"), value.get("max_ticks"))


def _controller(block) -> ControllerConfig:
    block = dict(block or {})
    known = {"replan_period", "cost_weights", "pedestrian_filter_radius", "n_particles",
             "sigma_obs", "seed", "robot_id"}
    unknown = set(block) - known
    if unknown:
        raise FormatError(f"unknown controller keys {sorted(unknown)}")
    block.pop("robot_id", None)
    if "cost_weights" in block:
        block["cost_weights"] = tuple(float(w) for w in block["cost_weights"])
    return ControllerConfig(**block)


def _vehicle_config(block) -> VehicleConfig:
    prox = ProximityConfig(float(block.get("C_ped", 1.0)), float(block.get("s", 0.0)),
                           DominanceSign(block.get("dominance_sign", "AsWritten")))
    keys = ("v_max", "radius", "tau_d", "lookahead", "horizon", "progress_weight", "safety_margin")
    return VehicleConfig(proximity=prox, **{k: float(block[k]) for k in keys if k in block})


def parse_scenario(data: dict) -> ScenarioFile:
    """Build run objects from a parsed scenario mapping (see README for the schema)."""
    _check_format(data, "scenario")
    name = str(data.get("name", "Custom"))
    seed = int(data.get("seed", 0))
    dt = float(data.get("dt", 0.1))
    common = {"seed": seed, "dt": dt}
    if "tick_cap" in data:
        common["tick_cap"] = int(data["tick_cap"])

    if name == VEHICLE_CROSSING or "vehicle" in data:
        block = dict(data.get("vehicle") or {})
        cfg = _vehicle_config(block)
        if name == VEHICLE_CROSSING:
            base = crossing_scenario(float(block.get("crosser_dominance", 0.9)),
                                     ped_params=_params(block.get("crosser_params")), **common)
            path, peds, dom = base.path, base.pedestrians, base.dominance
        else:
            path = tuple(map(tuple, block["path"]))
            peds = tuple(_agent(a) for a in data.get("agents", ()))
            dom = None if block.get("dominance") is None else tuple(map(float, block["dominance"]))
        veh = VehicleScenario(name, path, tuple(peds), cfg, dom,
                              _obstacles(data.get("obstacles")), dt, seed,
                              int(data.get("tick_cap", 600)))
        return ScenarioFile(name, seed, vehicle=veh)

    if name == ROBOT_CORRIDOR:
        peds = [_params(p) for p in data.get("pedestrian_params", ())]
        if not peds:
            raise FormatError("RobotCorridor needs a pedestrian_params list")
        geometry = dict(data.get("geometry") or {})
        sc = corridor_with_robot(peds, **common, **geometry)
        robot = 0
    else:
        kind = ScenarioKind.parse(name)
        term = _termination(data.get("termination"))
        extra = {"termination": term} if term is not None else {}
        if kind is ScenarioKind.CUSTOM:
            sc = build_scenario(
                kind, agents=[_agent(a) for a in data.get("agents", ())],
                obstacles=_obstacles(data.get("obstacles")),
                highlighted=data.get("highlighted"), **common, **extra,
            )
            routes = {int(k): tuple(map(tuple, v)) for k, v in (data.get("routes") or {}).items()}
            meta = dict(data.get("meta") or {})
            if routes or meta:
                sc = Scenario(sc.name, sc.agents, sc.obstacles, sc.highlighted, sc.termination,
                              sc.dt, sc.seed, sc.tick_cap, meta, routes,
                              float(data.get("route_radius", sc.route_radius)))
        else:
            hp = data.get("highlighted_params")
            sc = build_scenario(kind, None if hp is None else _params(hp), **common, **extra,
                                **dict(data.get("geometry") or {}))
        robot = None
    controller = None
    if "controller" in data:
        controller = _controller(data["controller"])
        robot = int((data["controller"] or {}).get("robot_id", 0 if robot is None else robot))
    return ScenarioFile(name, seed, sc, robot, controller)


def load_scenario(path) -> ScenarioFile:
    data = load_structured(path)
    try:
        return parse_scenario(data)
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None


def scenario_to_dict(scenario: Scenario) -> dict:
    """Explicit ``Custom`` form of any scenario, loadable by :func:`parse_scenario`."""
    term = {"kind": scenario.termination.kind}
    if scenario.termination.max_ticks is not None:
        term["max_ticks"] = scenario.termination.max_ticks
    meta = {k: np.asarray(v).tolist() if isinstance(v, (tuple, list, np.ndarray)) else v
            for k, v in scenario.meta.items()}
    return {
        "format": FORMAT_VERSION,
        "name": "Custom",
        "seed": scenario.seed,
        "dt": scenario.dt,
        "tick_cap": scenario.tick_cap,
        "highlighted": scenario.highlighted,
        "termination": term,
        "agents": [_agent_dict(a) for a in scenario.agents],
        "obstacles": [list(s) for s in scenario.obstacles],
        "routes": {int(k): [list(p) for p in v] for k, v in scenario.routes.items()},
        "route_radius": scenario.route_radius,
        "meta": meta,
    }


def write_scenario(scenario: Scenario, path):
    path = FsPath(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(scenario_to_dict(scenario), indent=2) if path.suffix == ".json" \
        else yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False)
    path.write_text(text)
    return path


__all__ = [
    "FormatError", "RunReport", "ScenarioFile", "load_scenario", "parse_scenario",
    "read_decisions", "read_model", "read_replans", "read_samples", "read_survey",
    "read_timeline", "read_trajectories", "scenario_to_dict", "write_decisions",
    "write_model", "write_replans", "write_samples", "write_scenario", "write_timeline",
    "write_trajectories",
]
