"""Dominance-aware vehicle on a fixed path through pedestrians.

A minimal stop/go controller: each tick the vehicle picks a speed from
``{0, v_max/2, v_max}`` by progress reward minus pedestrian proximity cost,
and a threshold rule makes it stop for dominant pedestrians whose predicted
walk crosses the path ahead.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .params import MAX_SPEED_FACTOR, MotionParams
from .pdm import REFERENCE_MODEL, DominanceModel, evaluate
from .sim import _orca
from .sim.core import AgentState, Kind, segments_array, step_arrays
from .sim.scenarios import TrajectorySet

PATH_TOLERANCE = 0.5
DEFAULT_LOOKAHEAD = 8.0
DEFAULT_HORIZON = 3.0
DEFAULT_TAU_D = 0.5
VEHICLE_ID = 0


class Mode(enum.Enum):
    PROCEED = "Proceed"
    YIELDING = "Yielding"


class Decision(enum.Enum):
    PROCEED = "Proceed"
    YIELD = "Yield"


class DominanceSign(enum.Enum):
    AS_WRITTEN = "AsWritten"
    INVERTED = "Inverted"


# -- path geometry -----------------------------------------------------------

@dataclass(frozen=True)
class Path:
    """Polyline with arc-length lookup."""

    points: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if pts.shape[0] < 2:
            raise ValueError("a path needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("path points must be finite")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= 0):
            raise ValueError("path has a zero-length segment")
        object.__setattr__(self, "points", tuple(map(tuple, pts.tolist())))
        object.__setattr__(self, "_pts", pts)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(seg)]))

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def point_at(self, s: float):
        """Position and heading at arc length ``s`` (clamped to the ends)."""
        s = min(max(float(s), 0.0), self.length)
        k = int(np.searchsorted(self._cum, s, side="right") - 1)
        k = min(k, len(self._cum) - 2)
        a, b = self._pts[k], self._pts[k + 1]
        seg = self._cum[k + 1] - self._cum[k]
        u = (s - self._cum[k]) / seg
        p = a + u * (b - a)
        return (float(p[0]), float(p[1])), math.atan2(b[1] - a[1], b[0] - a[0])

    def project(self, point) -> tuple:
        """Arc length of the closest path point and the distance to it."""
        q = np.asarray(point, dtype=float)
        best = (0.0, math.inf)
        for k in range(len(self._pts) - 1):
            a, b = self._pts[k], self._pts[k + 1]
            ab = b - a
            u = float(np.clip(np.dot(q - a, ab) / np.dot(ab, ab), 0.0, 1.0))
            d = float(np.hypot(*(a + u * ab - q)))
            if d < best[1]:
                best = (float(self._cum[k] + u * (self._cum[k + 1] - self._cum[k])), d)
        return best

    def sub_polyline(self, s0: float, s1: float) -> np.ndarray:
        """Vertices of the path between arc lengths ``s0 <= s1``."""
        s0 = min(max(s0, 0.0), self.length)
        s1 = min(max(s1, s0), self.length)
        inner = [self._pts[k] for k in range(len(self._cum)) if s0 < self._cum[k] < s1]
        pts = [self.point_at(s0)[0], *map(tuple, inner), self.point_at(s1)[0]]
        return np.asarray(pts, dtype=float)


def _segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between segments p1-p2 and q1-q2."""
    d1, d2, r = p2 - p1, q2 - q1, p1 - q1
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    if a <= 1e-18 and e <= 1e-18:
        return float(np.hypot(*r))
    if a <= 1e-18:
        s, t = 0.0, float(np.clip(f / e, 0.0, 1.0))
    else:
        c = d1 @ r
        if e <= 1e-18:
            s, t = float(np.clip(-c / a, 0.0, 1.0)), 0.0
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = float(np.clip((b * f - c * e) / denom, 0.0, 1.0)) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                s, t = float(np.clip(-c / a, 0.0, 1.0)), 0.0
            elif t > 1.0:
                s, t = float(np.clip((b - c) / a, 0.0, 1.0)), 1.0
    return float(np.hypot(*(p1 + s * d1 - q1 - t * d2)))


def polyline_distance(a: np.ndarray, b: np.ndarray) -> float:
    return min(
        _segment_distance(a[i], a[i + 1], b[j], b[j + 1])
        for i in range(len(a) - 1) for j in range(len(b) - 1)
    )


# -- state and costs -----------------------------------------------------------

@dataclass(frozen=True)
class VehicleState:
    """Vehicle pose on its path; ``progress`` is the arc length travelled."""

    position: tuple
    heading: float
    speed: float
    path: Path
    mode: Mode = Mode.PROCEED
    progress: float | None = None

    def __post_init__(self):
        path = self.path if isinstance(self.path, Path) else Path(self.path)
        pos = tuple(float(v) for v in self.position)
        if self.speed < 0 or not math.isfinite(self.speed):
            raise ValueError(f"speed must be finite and nonnegative, got {self.speed}")
        s, off = path.project(pos)
        if off > PATH_TOLERANCE:
            raise ValueError(f"vehicle is {off:.3f} m off its path (limit {PATH_TOLERANCE})")
        object.__setattr__(self, "path", path)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "speed", float(self.speed))
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "progress", s if self.progress is None else float(self.progress))

    @classmethod
    def at_start(cls, path, speed: float = 0.0) -> "VehicleState":
        path = path if isinstance(path, Path) else Path(path)
        pos, heading = path.point_at(0.0)
        return cls(pos, heading, speed, path, Mode.PROCEED, 0.0)

    @property
    def remaining(self) -> float:
        return max(self.path.length - self.progress, 0.0)

    @property
    def velocity(self) -> tuple:
        return (self.speed * math.cos(self.heading), self.speed * math.sin(self.heading))


@dataclass(frozen=True)
class ProximityConfig:
    c_ped: float = 1.0
    s: float = 0.0
    dominance_sign: DominanceSign = DominanceSign.AS_WRITTEN

    def __post_init__(self):
        if not (math.isfinite(self.c_ped) and self.c_ped >= 0):
            raise ValueError(f"c_ped must be finite and nonnegative, got {self.c_ped}")
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"safety variable s must lie in [0, 1], got {self.s}")
        object.__setattr__(self, "dominance_sign", DominanceSign(self.dominance_sign))


def _check_dominance(d):
    d = float(d)
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"dominance must lie in [0, 1], got {d}")
    return d


def ped_coefficient(cfg: ProximityConfig, d_i: float) -> float:
    """Per-pedestrian proximity weight ``C_ped * exp(-/+ s * d_i)``."""
    d_i = _check_dominance(d_i)
    sign = -1.0 if cfg.dominance_sign is DominanceSign.AS_WRITTEN else 1.0
    return cfg.c_ped * math.exp(sign * cfg.s * d_i)


def proximity_cost(p_i, p_v, cfg: ProximityConfig, d_i: float) -> float:
    p_i = np.asarray(p_i, dtype=float)
    p_v = np.asarray(p_v, dtype=float)
    if not (np.all(np.isfinite(p_i)) and np.all(np.isfinite(p_v))):
        raise ValueError("proximity_cost needs finite points")
    return ped_coefficient(cfg, d_i) * math.exp(-float(np.hypot(*(p_i - p_v))))


# -- decision -------------------------------------------------------------------

@dataclass(frozen=True)
class PedestrianView:
    """What the vehicle knows about one pedestrian."""

    position: tuple
    velocity: tuple
    dominance: float
    radius: float = 0.8
    id: int = -1


@dataclass(frozen=True)
class ConflictRegion:
    """Path stretch ahead of the vehicle, widened by ``half_width``."""

    polyline: np.ndarray
    half_width: float


def conflict_region(vehicle: VehicleState, lookahead: float = DEFAULT_LOOKAHEAD,
                    half_width: float = 1.0) -> ConflictRegion:
    if lookahead < 0:
        raise ValueError(f"lookahead must be nonnegative, got {lookahead}")
    s0 = vehicle.progress
    return ConflictRegion(vehicle.path.sub_polyline(s0, s0 + lookahead), float(half_width))


def enters_conflict(ped: PedestrianView, region: ConflictRegion, ped_radius: float | None = None,
                    horizon: float = DEFAULT_HORIZON) -> bool:
    """Whether constant-velocity motion over ``horizon`` touches the widened region."""
    p = np.asarray(ped.position, dtype=float)
    walk = np.array([p, p + horizon * np.asarray(ped.velocity, dtype=float)])
    r = ped.radius if ped_radius is None else ped_radius
    line = region.polyline
    if len(line) < 2 or np.allclose(line[0], line[-1]):
        return float(np.hypot(*(walk[0] - line[0]))) <= region.half_width + r
    return polyline_distance(walk, line) <= region.half_width + r


def effective_dominance(cfg: ProximityConfig, d_i: float) -> float:
    """Dominance seen by the yield rule; ``s = 0`` switches dominance off.

    With dominance off every pedestrian is given right of way, which keeps
    an ``s = 0`` vehicle identical to a dominance-blind one.
    """
    return _check_dominance(d_i) if cfg.s > 0 else 1.0


def yield_decision(vehicle: VehicleState, peds, cfg: ProximityConfig,
                   tau_d: float = DEFAULT_TAU_D, conflict: ConflictRegion | None = None,
                   horizon: float = DEFAULT_HORIZON, vehicle_radius: float = 1.0) -> Decision:
    """Yield iff a pedestrian with dominance >= ``tau_d`` is predicted in the conflict region."""
    region = conflict_region(vehicle, DEFAULT_LOOKAHEAD, vehicle_radius) if conflict is None else conflict
    for ped in peds:
        if effective_dominance(cfg, ped.dominance) >= tau_d and enters_conflict(ped, region, horizon=horizon):
            return Decision.YIELD
    return Decision.PROCEED


@dataclass(frozen=True)
class VehicleConfig:
    v_max: float = 5.0
    radius: float = 1.0
    proximity: ProximityConfig = field(default_factory=ProximityConfig)
    tau_d: float = DEFAULT_TAU_D
    lookahead: float = DEFAULT_LOOKAHEAD
    horizon: float = DEFAULT_HORIZON
    progress_weight: float = 1.0
    safety_margin: float = 0.3

    def __post_init__(self):
        if not (self.v_max > 0 and math.isfinite(self.v_max)):
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if not self.radius > 0:
            raise ValueError(f"vehicle radius must be positive, got {self.radius}")
        if not 0.0 <= self.tau_d <= 1.0:
            raise ValueError(f"tau_d must lie in [0, 1], got {self.tau_d}")
        if self.lookahead < 0 or self.horizon < 0 or self.safety_margin < 0:
            raise ValueError("lookahead, horizon and safety_margin must be nonnegative")

    @property
    def candidates(self) -> tuple:
        return (0.0, 0.5 * self.v_max, self.v_max)


def candidate_score(vehicle: VehicleState, speed: float, peds, cfg: VehicleConfig, dt: float) -> float:
    """Progress reward minus proximity cost at the predicted pose; -inf if unsafe."""
    advance = min(speed * dt, vehicle.remaining)
    p_v, _ = vehicle.path.point_at(vehicle.progress + advance)
    p_v = np.asarray(p_v)
    cost = 0.0
    for ped in peds:
        p_i = np.asarray(ped.position, dtype=float) + dt * np.asarray(ped.velocity, dtype=float)
        if advance > 0 and np.hypot(*(p_i - p_v)) < cfg.radius + ped.radius + cfg.safety_margin:
            return -math.inf
        cost += proximity_cost(p_i, p_v, cfg.proximity, ped.dominance)
    return cfg.progress_weight * advance - cost


def vehicle_step(vehicle: VehicleState, world, cfg: VehicleConfig, dt: float) -> VehicleState:
    """One tick of speed selection; ``world`` is a sequence of :class:`PedestrianView`."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    peds = list(world)
    region = conflict_region(vehicle, cfg.lookahead, cfg.radius)
    decision = yield_decision(vehicle, peds, cfg.proximity, cfg.tau_d, region, cfg.horizon)
    if decision is Decision.YIELD:
        speed, mode = 0.0, Mode.YIELDING
    else:
        mode = Mode.PROCEED
        speed, best = 0.0, -math.inf
        for v in cfg.candidates:
            score = candidate_score(vehicle, v, peds, cfg, dt)
            if score > best:  # strict: ties keep the lower speed
                speed, best = v, score
    return advance(vehicle, speed, dt, mode)


def advance(vehicle: VehicleState, speed: float, dt: float, mode: Mode | None = None) -> VehicleState:
    step = min(speed * dt, vehicle.remaining)
    s = vehicle.progress + step
    pos, heading = vehicle.path.point_at(s)
    return VehicleState(pos, heading, step / dt, vehicle.path,
                        vehicle.mode if mode is None else mode, s)


# -- scenario runs ----------------------------------------------------------------

@dataclass(frozen=True)
class VehicleScenario:
    name: str
    path: tuple
    pedestrians: tuple
    config: VehicleConfig = field(default_factory=VehicleConfig)
    dominance: tuple | None = None
    obstacles: tuple = ()
    dt: float = 0.1
    seed: int = 0
    tick_cap: int = 600

    def pedestrian_dominance(self, model: DominanceModel = REFERENCE_MODEL) -> tuple:
        if self.dominance is not None:
            return tuple(_check_dominance(d) for d in self.dominance)
        return tuple(evaluate(model, a.params).clamped for a in self.pedestrians)


@dataclass(frozen=True)
class DecisionRecord:
    time: float
    mode: Mode
    chosen_speed: float
    min_ped_distance: float
    max_ped_dominance: float


@dataclass(frozen=True)
class VehicleRun:
    trajectories: TrajectorySet
    decisions: tuple
    completed: bool
    min_clearance: float


def run_vehicle(scenario: VehicleScenario, model: DominanceModel = REFERENCE_MODEL,
                dominance_blind: bool = False) -> VehicleRun:
    """Simulate pedestrians under ORCA with the vehicle as a moving body.

    Pedestrians and the vehicle read the previous tick; a joint separation
    pass afterwards keeps every body from ending a tick in contact.
    ``dominance_blind`` feeds zero dominance to the vehicle.
    """
    cfg, dt = scenario.config, scenario.dt
    dom = scenario.pedestrian_dominance(model)
    if dominance_blind:
        dom = tuple(0.0 for _ in dom)
    veh = VehicleState.at_start(scenario.path)
    peds = list(scenario.pedestrians)
    n = len(peds) + 1
    ids = np.array([VEHICLE_ID] + [a.id for a in peds], dtype=np.int64)
    if len(set(ids.tolist())) != n:
        raise ValueError(f"pedestrian ids must be unique and differ from {VEHICLE_ID}")
    pos = np.array([veh.position] + [a.position for a in peds], dtype=float).reshape(n, 2)
    vel = np.array([veh.velocity] + [a.velocity for a in peds], dtype=float).reshape(n, 2)
    goal = np.array([veh.position] + [a.goal for a in peds], dtype=float).reshape(n, 2)
    # Placeholder ORCA row for the vehicle: blind and overwritten every tick.
    vrow = np.array([0.0, 0.0, 1.0, cfg.radius, cfg.v_max / MAX_SPEED_FACTOR])
    params = np.vstack([vrow] + [a.params.as_array() for a in peds]).reshape(n, 5)
    kind = np.array([int(Kind.STANDING)] + [int(a.kind) for a in peds], dtype=np.int64)
    segs = segments_array(scenario.obstacles)
    radii = params[:, 3].copy()

    P, V, log = [pos.copy()], [vel.copy()], []
    tick, clearance = 0, math.inf
    while veh.remaining > 1e-9:
        if tick >= scenario.tick_cap:
            break
        views = [PedestrianView(tuple(pos[k + 1]), tuple(vel[k + 1]), dom[k], radii[k + 1], a.id)
                 for k, a in enumerate(peds)]
        chosen = vehicle_step(veh, views, cfg, dt)
        new_pos, new_vel = step_arrays(pos, vel, goal, params, kind, segs, dt, scenario.seed, tick, ids)
        # Replace the placeholder vehicle row and re-check contacts jointly.
        new_vel[0] = (np.asarray(chosen.position) - pos[0]) / dt
        _orca._enforce_separation(pos, new_vel, radii, dt)
        scale = math.hypot(*new_vel[0]) * dt
        veh = advance(veh, scale / dt, dt, chosen.mode) if chosen.speed > 0 else chosen
        new_pos = pos + new_vel * dt
        new_pos[0] = veh.position
        new_vel[0] = (new_pos[0] - pos[0]) / dt
        pos, vel = new_pos, new_vel
        goal[0] = pos[0]
        tick += 1
        d = np.hypot(*(pos[1:] - pos[0]).T) if n > 1 else np.array([math.inf])
        clearance = min(clearance, float(np.min(d - radii[1:] - cfg.radius)) if n > 1 else math.inf)
        log.append(DecisionRecord(tick * dt, veh.mode, veh.speed, float(d.min()),
                                  max(dom) if dom else 0.0))
        P.append(pos.copy())
        V.append(vel.copy())
    T = len(P)
    traj = TrajectorySet(dt, tuple(ids.tolist()), np.arange(T), np.array(P), np.array(V),
                         veh.remaining <= 1e-9, np.tile(radii, (T, 1)))
    return VehicleRun(traj, tuple(log), traj.completed, clearance)


def crossing_scenario(dominance: float, *, s: float = 1.0, seed: int = 0, dt: float = 0.1,
                      ped_params: MotionParams | None = None, tick_cap: int = 600) -> VehicleScenario:
    """Straight 40 m vehicle path with one pedestrian crossing it head-on in time."""
    p = MotionParams() if ped_params is None else ped_params
    path = ((-20.0, 0.0), (20.0, 0.0))
    ped = AgentState(1, (4.0, -7.0), goal=(4.0, 12.0), params=p)
    cfg = VehicleConfig(proximity=ProximityConfig(c_ped=1.0, s=s))
    return VehicleScenario(f"crossing_d{dominance:g}", path, (ped,), cfg, (float(dominance),),
                           dt=dt, seed=seed, tick_cap=tick_cap)


__all__ = [
    "ConflictRegion", "Decision", "DecisionRecord", "DominanceSign", "Mode", "Path",
    "PedestrianView", "ProximityConfig", "VehicleConfig", "VehicleRun", "VehicleScenario",
    "VehicleState", "conflict_region", "crossing_scenario", "effective_dominance",
    "enters_conflict", "ped_coefficient", "proximity_cost", "run_vehicle", "vehicle_step",
    "yield_decision",
]
