"""Benchmark scene builders and the scenario runner."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from ..params import MotionParams
from .core import (
    ARRIVAL_THRESHOLD,
    DEFAULT_DT,
    AgentState,
    Kind,
    WorldState,
    segments_array,
    step_arrays,
)

DEFAULT_TICK_CAP = 5000


class ScenarioKind(str, enum.Enum):
    PASS_THROUGH = "PassThrough"
    CORRIDOR = "Corridor"
    STANDING_GROUP = "StandingGroup"
    NARROW_EXIT = "NarrowExit"
    CUSTOM = "Custom"

    @classmethod
    def parse(cls, value) -> "ScenarioKind":
        if isinstance(value, cls):
            return value
        key = str(value).replace("_", "").replace("-", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown scenario kind {value!r}")


@dataclass(frozen=True)
class Termination:
    """``all_at_goal``, ``highlighted_at_goal`` or ``max_ticks`` with a count."""

    kind: str = "all_at_goal"
    max_ticks: int | None = None

    def __post_init__(self):
        if self.kind not in ("all_at_goal", "highlighted_at_goal", "max_ticks"):
            raise ValueError(f"unknown termination {self.kind!r}")
        if self.kind == "max_ticks" and (self.max_ticks is None or self.max_ticks < 0):
            raise ValueError("max_ticks termination needs a nonnegative tick count")


@dataclass(frozen=True)
class Scenario:
    name: ScenarioKind
    agents: tuple
    obstacles: tuple = ()
    highlighted: int | None = None
    termination: Termination = Termination()
    dt: float = DEFAULT_DT
    seed: int = 0
    tick_cap: int = DEFAULT_TICK_CAP
    # Scene annotations such as the exit line of NarrowExit.
    meta: dict = field(default_factory=dict, compare=False)
    # Agent id -> later goals, taken in order once within route_radius of
    # the current one.
    routes: dict = field(default_factory=dict)
    route_radius: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        world = self.initial_world()
        if self.highlighted is not None:
            world.index_of(self.highlighted)

    def initial_world(self) -> WorldState:
        return WorldState(0, 0.0, tuple(self.agents), tuple(self.obstacles))


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """Per-tick positions and velocities, shape (ticks, agents, 2)."""

    dt: float
    ids: tuple
    ticks: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    completed: bool = True
    radii: np.ndarray | None = None

    def __post_init__(self):
        T = len(self.ticks)
        n = len(self.ids)
        for name in ("positions", "velocities"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(T, n, 2)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "ticks", np.asarray(self.ticks, dtype=np.int64))
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("trajectory positions must be finite")

    @property
    def times(self) -> np.ndarray:
        return self.ticks * self.dt

    def column(self, agent_id: int) -> int:
        try:
            return self.ids.index(int(agent_id))
        except ValueError:
            raise KeyError(f"agent {agent_id} not in trajectory") from None

    def path(self, agent_id: int) -> np.ndarray:
        return self.positions[:, self.column(agent_id), :]

    def __eq__(self, other):
        if not isinstance(other, TrajectorySet):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.ids == other.ids
            and self.completed == other.completed
            and np.array_equal(self.ticks, other.ticks)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.velocities, other.velocities)
        )


# ---------------------------------------------------------------- builders

def _highlighted_params(overrides, clamp):
    if isinstance(overrides, MotionParams):
        return overrides
    return MotionParams.from_mapping(dict(overrides or {}), clamp=clamp)


def _pass_through(hp, rng, geom):
    band = geom.get("band_width", 10.0)
    agents = [AgentState(0, (-10.0, 0.0), goal=(10.0, 0.0), params=hp)]
    cols, rows = 4, 10
    spacing_x = band / cols
    spacing_y = 2.5
    k = 1
    for r in range(rows):
        for c in range(cols):
            x = -band / 2 + spacing_x * (c + 0.5) + rng.uniform(-0.25, 0.25)
            y = geom.get("flow_front", 6.0) - spacing_y * r + rng.uniform(-0.25, 0.25)
            agents.append(AgentState(k, (x, y), goal=(x, y + 60.0)))
            k += 1
    return agents, [], {"band": (-band / 2, band / 2)}


def _corridor(hp, rng, geom):
    length = geom.get("length", 30.0)
    width = geom.get("width", 4.0)
    half_l, half_w = length / 2, width / 2
    walls = [
        ((-half_l, -half_w), (half_l, -half_w)),
        ((-half_l, half_w), (half_l, half_w)),
    ]
    agents = [AgentState(0, (-half_l + 2.0, 0.0), goal=(half_l + 1.0, 0.0), params=hp)]
    lane = half_w - 1.1
    for k in range(5):
        x = half_l - 5.0 - 2.0 * k + rng.uniform(-0.2, 0.2)
        agents.append(AgentState(k + 1, (x, lane), goal=(-half_l - 1.0, lane)))
    return agents, walls, {"length": length, "width": width}


def _standing_group(hp, rng, geom):
    # Bodies of the default radius 0.8 cannot sit on 1.2 m centres; the
    # 1.2 m figure is kept as the gap between neighbouring bodies' edges.
    gap = geom.get("gap", 1.2)
    spacing = 2 * 0.8 + gap
    agents = [AgentState(0, (-10.0, 0.0), goal=(10.0, 0.0), params=hp)]
    offsets = [(0.0, 0.0), (spacing, 0.0), (-spacing, 0.0), (0.0, spacing), (0.0, -spacing)]
    for k, (dx, dy) in enumerate(offsets, start=1):
        agents.append(AgentState(k, (dx, dy), kind=Kind.STANDING))
    return agents, [], {"group_center": (0.0, 0.0), "spacing": spacing}


def _narrow_exit(hp, rng, geom):
    size = geom.get("room_size", 20.0)
    gap = geom.get("gap_width", 3.6)
    h = size / 2
    walls = [
        ((-h, -h), (h, -h)),
        ((-h, -h), (-h, h)),
        ((h, -h), (h, h)),
        ((-h, h), (-gap / 2, h)),
        ((gap / 2, h), (h, h)),
    ]
    # Everyone heads for a point just past the gap, then fans out.
    goal = (0.0, h + geom.get("waypoint_depth", 0.5))
    start = geom.get("highlighted_start", (0.0, -h + 2.0))
    placed = [np.array(start, dtype=float)]
    margin = 0.8 + 0.4
    tries = 0
    while len(placed) < 31:
        tries += 1
        if tries > 100000:
            raise RuntimeError("could not place NarrowExit agents")
        p = rng.uniform(-h + margin, h - margin, size=2)
        if all(np.hypot(*(p - q)) >= 2.0 for q in placed):
            placed.append(p)
    agents = [AgentState(0, tuple(placed[0]), goal=goal, params=hp)]
    for k, p in enumerate(placed[1:], start=1):
        agents.append(AgentState(k, tuple(p), goal=goal))
    exit_line = ((-gap / 2, h), (gap / 2, h))
    # Dispersal goals well clear of the doorway: three staggered rows whose
    # 4 m spacing leaves walkable gaps between agents already parked.
    depth = geom.get("dispersal_depth", 12.0)
    finals = [(4.0 * (c - 5.0) + 2.0 * (r % 2), h + depth + 3.0 * r)
              for r in range(3) for c in range(11)]
    finals.sort(key=lambda g: (abs(g[0]), g[1], g[0]))
    routes = {k: (finals[k],) for k in range(31)}
    meta = {"exit_line": exit_line, "room_size": size, "gap_width": gap}
    return agents, walls, meta, routes


_BUILDERS = {
    ScenarioKind.PASS_THROUGH: (_pass_through, "highlighted_at_goal"),
    ScenarioKind.CORRIDOR: (_corridor, "highlighted_at_goal"),
    ScenarioKind.STANDING_GROUP: (_standing_group, "highlighted_at_goal"),
    ScenarioKind.NARROW_EXIT: (_narrow_exit, "all_at_goal"),
}


def build_scenario(kind, overrides=None, *, seed: int = 0, clamp: bool = False,
                   dt: float = DEFAULT_DT, termination: Termination | None = None,
                   tick_cap: int = DEFAULT_TICK_CAP, agents=None, obstacles=(),
                   highlighted=None, **geometry) -> Scenario:
    """Build one of the four benchmark scenes, or a Custom one from ``agents``.

    ``overrides`` sets the highlighted agent's motion parameters; everyone
    else keeps the defaults.
    """
    kind = ScenarioKind.parse(kind)
    if kind is ScenarioKind.CUSTOM:
        if agents is None:
            raise ValueError("Custom scenarios need an explicit agent list")
        return Scenario(
            kind, tuple(agents), tuple(obstacles), highlighted,
            termination or Termination("all_at_goal"), dt, seed, tick_cap,
        )
    hp = _highlighted_params(overrides, clamp)
    rng = np.random.default_rng(seed)
    builder, default_term = _BUILDERS[kind]
    built = builder(hp, rng, geometry)
    routes = built[3] if len(built) > 3 else {}
    return Scenario(
        kind, tuple(built[0]), tuple(built[1]), 0,
        termination or Termination(default_term), dt, seed, tick_cap, built[2], routes,
    )


# ---------------------------------------------------------------- runner

def _done(term: Termination, pos, goal, kind, hl_index, tick, unfinished):
    if term.kind == "max_ticks":
        return tick >= term.max_ticks
    at_goal = (np.hypot(*(goal - pos).T) <= ARRIVAL_THRESHOLD) & ~unfinished
    if term.kind == "highlighted_at_goal" and hl_index is not None:
        return bool(at_goal[hl_index])
    moving = kind != int(Kind.STANDING)
    return bool(np.all(at_goal[moving]))


def _advance_routes(routes, progress, pos, goal, radius):
    for k, legs in routes.items():
        stage = progress[k]
        if stage < len(legs) and np.hypot(*(goal[k] - pos[k])) <= radius:
            goal[k] = legs[stage]
            progress[k] = stage + 1


def run_scenario(scenario: Scenario, controller=None) -> TrajectorySet:
    """Step until the termination condition or the tick cap.

    ``controller(tick, time, pos, vel, params)`` may return a mapping of
    agent index to new parameter rows; changes apply between ticks.
    """
    world = scenario.initial_world()
    ids = tuple(a.id for a in world.agents)
    pos, vel, goal, params, kind, segs = world.arrays()
    n = len(ids)
    id_arr = np.array(ids, dtype=np.int64)
    hl = world.index_of(scenario.highlighted) if scenario.highlighted is not None else None
    cap = scenario.tick_cap
    if scenario.termination.kind == "max_ticks":
        cap = min(cap, scenario.termination.max_ticks)
    P = [pos.copy()]
    V = [vel.copy()]
    R = [params[:, 3].copy()]
    tick = 0
    completed = True
    routes = {world.index_of(i): tuple(map(tuple, legs)) for i, legs in scenario.routes.items()}
    progress = {k: 0 for k in routes}
    goal = goal.copy()

    unfinished = np.zeros(n, dtype=bool)
    for k, legs in routes.items():
        unfinished[k] = len(legs) > 0

    while not (n == 0 or _done(scenario.termination, pos, goal, kind, hl, tick, unfinished)):
        if tick >= cap:
            completed = False
            break
        if controller is not None:
            updates = controller(tick, tick * scenario.dt, pos, vel, params)
            if updates:
                params = params.copy()
                for k, row in updates.items():
                    params[k] = row
        pos, vel = step_arrays(pos, vel, goal, params, kind, segs, scenario.dt,
                               scenario.seed, tick, id_arr)
        tick += 1
        _advance_routes(routes, progress, pos, goal, scenario.route_radius)
        for k, legs in routes.items():
            unfinished[k] = progress[k] < len(legs)
        P.append(pos)
        V.append(vel)
        R.append(params[:, 3].copy())
    T = len(P)
    radii = np.array(R).reshape(T, n)
    return TrajectorySet(
        scenario.dt, ids, np.arange(T), np.array(P).reshape(T, n, 2),
        np.array(V).reshape(T, n, 2), completed, radii,
    )


def final_world(scenario: Scenario, traj: TrajectorySet) -> WorldState:
    """World state at the last recorded tick (parameters as at scenario start)."""
    world = scenario.initial_world()
    agents = tuple(
        replace(a, position=tuple(traj.positions[-1, k]), velocity=tuple(traj.velocities[-1, k]))
        for k, a in enumerate(world.agents)
    )
    t = int(traj.ticks[-1])
    return replace(world, tick=t, time=t * scenario.dt, agents=agents)


__all__ = [
    "Scenario",
    "ScenarioKind",
    "Termination",
    "TrajectorySet",
    "build_scenario",
    "run_scenario",
    "final_world",
    "segments_array",
]
