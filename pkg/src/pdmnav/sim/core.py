"""World state, neighbour queries and the synchronous ORCA step."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from ..params import MAX_SPEED_FACTOR, MotionParams
from . import _orca

DEFAULT_DT = 0.1
ARRIVAL_THRESHOLD = 0.25
OBSTACLE_HORIZON_STEPS = 10
OVERLAP_TOLERANCE = 1e-3
SPEED_TOLERANCE = 1e-9


class Kind(enum.IntEnum):
    PEDESTRIAN = _orca.KIND_PEDESTRIAN
    ROBOT = _orca.KIND_ROBOT
    STANDING = _orca.KIND_STANDING

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown agent kind {value!r}") from None
        return cls(int(value))


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentState:
    id: int
    position: tuple
    velocity: tuple = (0.0, 0.0)
    goal: tuple | None = None
    params: MotionParams = field(default_factory=MotionParams)
    kind: Kind = Kind.PEDESTRIAN

    def __post_init__(self):
        kind = Kind.parse(self.kind)
        pos = _pair(self.position, "position")
        vel = _pair(self.velocity, "velocity")
        goal = pos if self.goal is None or kind is Kind.STANDING else _pair(self.goal, "goal")
        if not isinstance(self.params, MotionParams):
            raise TypeError("params must be a MotionParams")
        speed = float(np.hypot(*vel))
        if speed > self.params.max_speed + SPEED_TOLERANCE:
            raise ValueError(
                f"agent {self.id}: speed {speed:.6g} exceeds max speed {self.params.max_speed:.6g}"
            )
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)
        object.__setattr__(self, "goal", goal)

    @property
    def max_speed(self) -> float:
        return self.params.max_speed


def _pair(value, name):
    x, y = (float(v) for v in value)
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError(f"{name} must be finite, got {(x, y)}")
    return (x, y)


def segments_array(obstacles) -> np.ndarray:
    """Normalize obstacle segments ``((x1, y1), (x2, y2))`` or rows to an (m, 4) array."""
    if obstacles is None or len(obstacles) == 0:
        return np.zeros((0, 4))
    segs = np.asarray(obstacles, dtype=float).reshape(len(obstacles), 4)
    if not np.all(np.isfinite(segs)):
        raise ValueError("obstacle segments must be finite")
    return segs


@dataclass(frozen=True)
class WorldState:
    tick: int = 0
    time: float = 0.0
    agents: tuple = ()
    obstacles: tuple = ()

    def __post_init__(self):
        agents = tuple(self.agents)
        ids = [a.id for a in agents]
        if len(set(ids)) != len(ids):
            raise ValueError(f"agent ids must be unique, got {ids}")
        obstacles = tuple(tuple(float(v) for v in row) for row in segments_array(self.obstacles))
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "obstacles", obstacles)

    def index_of(self, agent_id: int) -> int:
        for k, a in enumerate(self.agents):
            if a.id == agent_id:
                return k
        raise KeyError(f"unknown agent id {agent_id}")

    def agent(self, agent_id: int) -> AgentState:
        return self.agents[self.index_of(agent_id)]

    def with_params(self, agent_id: int, params: MotionParams) -> "WorldState":
        k = self.index_of(agent_id)
        agents = list(self.agents)
        agents[k] = replace(agents[k], params=params)
        return replace(self, agents=tuple(agents))

    def arrays(self):
        """Positions, velocities, goals, parameter rows, kinds and segments as arrays."""
        n = len(self.agents)
        pos = np.array([a.position for a in self.agents], dtype=float).reshape(n, 2)
        vel = np.array([a.velocity for a in self.agents], dtype=float).reshape(n, 2)
        goal = np.array([a.goal for a in self.agents], dtype=float).reshape(n, 2)
        params = np.array([a.params.as_array() for a in self.agents], dtype=float).reshape(n, 5)
        kind = np.array([int(a.kind) for a in self.agents], dtype=np.int64)
        return pos, vel, goal, params, kind, segments_array(self.obstacles)


def neighbors_of(world: WorldState, agent_id: int) -> list:
    """Ids of agents inside the query agent's neighbour ball, nearest first."""
    k = world.index_of(agent_id)
    pos = np.array([a.position for a in world.agents], dtype=float).reshape(-1, 2)
    params = world.agents[k].params
    idx = _orca.neighbor_indices(k, pos, float(params.neighbor_dist), int(params.max_neighbors))
    return [world.agents[j].id for j in idx]


def preferred_velocity(agent: AgentState, dt: float) -> np.ndarray:
    vx, vy = _orca.preferred_velocity(
        agent.position[0], agent.position[1], agent.goal[0], agent.goal[1],
        float(agent.params.pref_speed), int(agent.kind), float(dt), ARRIVAL_THRESHOLD,
    )
    return np.array([vx, vy])


def orca_velocity(agent: AgentState, neighbors, obstacles=(), dt: float = DEFAULT_DT) -> np.ndarray:
    """Collision-avoiding velocity for ``agent`` against the given neighbours.

    The neighbour order is the constraint insertion order; callers normally
    pass :func:`neighbors_of` output.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    neighbors = list(neighbors)
    k = len(neighbors)
    nb_pos = np.array([n.position for n in neighbors], dtype=float).reshape(k, 2)
    nb_vel = np.array([n.velocity for n in neighbors], dtype=float).reshape(k, 2)
    nb_rad = np.array([n.params.radius for n in neighbors], dtype=float).reshape(k)
    segs = segments_array(obstacles)
    for arr in (nb_pos, nb_vel, nb_rad, segs):
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite ORCA input")
    pref = preferred_velocity(agent, dt)
    vx, vy = _orca.solve_velocity(
        agent.position[0], agent.position[1], agent.velocity[0], agent.velocity[1],
        pref[0], pref[1], float(agent.params.radius), float(agent.params.planning_horizon),
        float(agent.params.max_speed), nb_pos, nb_vel, nb_rad, segs,
        OBSTACLE_HORIZON_STEPS * dt, float(dt),
    )
    return np.array([vx, vy])


def step_arrays(pos, vel, goal, params, kind, segs, dt, seed=0, tick=0, ids=None):
    """Array form of :func:`step`. ``seed < 0`` disables the deadlock breaker."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if pos.shape[0] == 0:
        return pos.copy(), vel.copy()
    if ids is None:
        ids = np.arange(pos.shape[0], dtype=np.int64)
    return _orca.step_world(
        pos, vel, goal, params, kind, segs, float(dt),
        OBSTACLE_HORIZON_STEPS * float(dt), ARRIVAL_THRESHOLD, MAX_SPEED_FACTOR,
        int(seed), int(tick), np.asarray(ids, dtype=np.int64),
    )


def step(world: WorldState, dt: float = DEFAULT_DT, seed: int = 0) -> WorldState:
    """Advance every agent by one tick using only the previous tick's states."""
    pos, vel, goal, params, kind, segs = world.arrays()
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
        raise SimulationError("non-finite agent state")
    ids = np.array([a.id for a in world.agents], dtype=np.int64)
    new_pos, new_vel = step_arrays(pos, vel, goal, params, kind, segs, dt, seed, world.tick, ids)
    agents = tuple(
        replace(a, position=tuple(new_pos[k]), velocity=tuple(new_vel[k]))
        for k, a in enumerate(world.agents)
    )
    tick = world.tick + 1
    return replace(world, tick=tick, time=tick * dt, agents=agents)


def min_clearance(pos: np.ndarray, radii: np.ndarray) -> float:
    """Smallest pairwise ``distance - r_i - r_j``; +inf for fewer than two agents."""
    n = pos.shape[0]
    if n < 2:
        return float("inf")
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    gap = dist - radii[:, None] - radii[None, :]
    iu = np.triu_indices(n, 1)
    return float(gap[iu].min())
