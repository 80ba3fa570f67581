"""Complementary-dominance robot control.

The robot answers the crowd's dominance with its complement: it picks the
cheapest motion parameters whose model dominance equals the mean of
``1 - d_i`` over the pedestrians it considers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .inference import (
    DEFAULT_PARTICLES, DEFAULT_SIGMA, ObservationFrame, SceneModel, estimate,
    init_posterior, update,
)
from .params import LOWER, UPPER, DEFAULT_PARAMS, MotionParams
from .pdm import REFERENCE_MODEL, DominanceModel, evaluate, normalize
from .sim.core import AgentState, Kind, WorldState
from .sim.scenarios import Scenario, ScenarioKind, Termination, run_scenario

MAX_PASSES = 5
NM = 1  # max_neighbors column


@dataclass(frozen=True)
class ComplementTarget:
    d_des: float
    ids: tuple = ()
    values: tuple = ()


def desired_dominance(d_list, ids=None) -> ComplementTarget:
    """Mean of complements, the minimizer of ``sum (d - (1 - d_i))**2``."""
    d = np.asarray(list(d_list), dtype=float).reshape(-1)
    if d.size == 0:
        raise ValueError("desired dominance needs at least one pedestrian")
    if not np.all(np.isfinite(d)) or np.any(d < 0) or np.any(d > 1):
        raise ValueError(f"dominance values must lie in [0, 1], got {d}")
    ids = tuple(range(d.size)) if ids is None else tuple(ids)
    return ComplementTarget(float(np.sum(1.0 - d) / d.size), ids, tuple(d.tolist()))


@dataclass(frozen=True)
class NavCost:
    """Weighted squared deviation from defaults in normalized space.

    A zero weight leaves that dimension free, ``inf`` pins it at its default.
    """

    weights: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape != (5,):
            raise ValueError(f"expected 5 cost weights, got {w.size}")
        if np.any(np.isnan(w)) or np.any(w < 0):
            raise ValueError(f"cost weights must be nonnegative, got {w}")
        if not np.any(w > 0):
            raise ValueError("at least one cost weight must be positive")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    def __call__(self, x) -> float:
        w = np.asarray(self.weights)
        x = np.asarray(x, dtype=float)
        finite = np.isfinite(w)
        if np.any(x[~finite] != 0):
            return math.inf
        return float(np.sum(w[finite] * x[finite] ** 2))


class UnattainableDominance(ValueError):
    """``d_des`` lies outside the dominance range reachable inside the box."""

    def __init__(self, d_des, nearest, boundary_params):
        super().__init__(
            f"dominance {d_des:g} is not attainable; nearest attainable value is {nearest:.6g}"
        )
        self.d_des = d_des
        self.nearest = nearest
        self.boundary_params = boundary_params


@dataclass(frozen=True)
class ParamSelection:
    """Outcome of :func:`select_params`.

    ``x_continuous`` is the normalized optimum inside the box before
    max_neighbors is rounded; ``params`` is what gets installed.
    """

    params: MotionParams
    d_des: float
    achieved: float
    x_continuous: np.ndarray
    x_final: np.ndarray
    clipped: tuple = ()
    passes: int = 0


def _norm_bounds(model: DominanceModel):
    lo = (LOWER - model.norm.defaults) / model.norm.half_ranges
    hi = (UPPER - model.norm.defaults) / model.norm.half_ranges
    return lo, hi


def attainable_range(model: DominanceModel = REFERENCE_MODEL, pinned=()):
    """(min, max) raw dominance over the box and the normalized corners reaching them."""
    lo, hi = _norm_bounds(model)
    D = model.coeffs
    x_max = np.where(D >= 0, hi, lo)
    x_min = np.where(D >= 0, lo, hi)
    for k in pinned:
        x_max[k] = x_min[k] = 0.0
    return float(D @ x_min), float(D @ x_max), x_min, x_max


def _least_cost(D, w, free, r):
    """argmin sum w_k x_k^2 over ``free`` dims subject to D.x = r."""
    x = np.zeros(5)
    idx = [k for k in free if D[k] != 0.0]
    if not idx:
        if r != 0.0:
            raise ValueError("no free dimension can move the dominance")
        return x
    zero = [k for k in idx if w[k] == 0.0]
    if zero:
        # Cost-free dimensions absorb everything; least norm among them.
        denom = sum(D[k] ** 2 for k in zero)
        for k in zero:
            x[k] = r * D[k] / denom
        return x
    denom = sum(D[k] ** 2 / w[k] for k in idx)
    for k in idx:
        x[k] = r * (D[k] / w[k]) / denom
    return x


def _solve_box(D, w, lo, hi, fixed, d_des):
    """Clip-and-re-solve passes; ``fixed`` maps dim -> pinned normalized value."""
    fixed = dict(fixed)
    passes = 0
    while True:
        passes += 1
        free = [k for k in range(5) if k not in fixed]
        r = d_des - sum(D[k] * v for k, v in fixed.items())
        x = _least_cost(D, w, free, r)
        for k, v in fixed.items():
            x[k] = v
        over = [k for k in free if x[k] > hi[k] + 1e-12 or x[k] < lo[k] - 1e-12]
        if not over or passes >= MAX_PASSES:
            return np.clip(x, lo, hi), fixed, passes
        for k in over:
            fixed[k] = float(np.clip(x[k], lo[k], hi[k]))


def select_params(model: DominanceModel, d_des: float, cost: NavCost = NavCost()) -> ParamSelection:
    """Cheapest parameters with model dominance ``d_des``, kept inside the box."""
    d_des = float(d_des)
    if not math.isfinite(d_des):
        raise ValueError(f"d_des must be finite, got {d_des}")
    D = model.coeffs
    w = np.asarray(cost.weights, dtype=float)
    pinned = [k for k in range(5) if not math.isfinite(w[k])]
    if all(D[k] == 0.0 for k in range(5) if k not in pinned):
        raise ValueError("model coefficients are zero on every adjustable dimension")
    lo, hi = _norm_bounds(model)
    d_min, d_max, x_min, x_max = attainable_range(model, pinned)
    if d_des < d_min - 1e-12 or d_des > d_max + 1e-12:
        corner = x_min if d_des < d_min else x_max
        nearest = d_min if d_des < d_min else d_max
        bparams = MotionParams.clipped(model.norm.defaults + model.norm.half_ranges * corner)
        raise UnattainableDominance(d_des, nearest, bparams)

    fixed = {k: 0.0 for k in pinned}
    x_cont, fixed, passes = _solve_box(D, w, lo, hi, fixed, d_des)
    clipped = tuple(sorted(k for k in fixed if k not in pinned))
    x = x_cont
    hr, mu = model.norm.half_ranges, model.norm.defaults
    nm = mu[NM] + hr[NM] * x[NM]
    nm_round = float(np.clip(np.round(nm), LOWER[NM], UPPER[NM]))
    if nm_round != nm:
        # Pin the rounded count and let the other dimensions take up the slack.
        fixed[NM] = (nm_round - mu[NM]) / hr[NM]
        x, fixed, more = _solve_box(D, w, lo, hi, fixed, d_des)
        passes += more
    values = mu + hr * x
    values[NM] = np.round(values[NM])
    params = MotionParams.clipped(values)
    x_final = normalize(params, model.norm)
    return ParamSelection(
        params, d_des, float(D @ x_final), x_cont, x_final, clipped, passes,
    )


@dataclass(frozen=True)
class ReplanResult:
    world: WorldState
    params: MotionParams
    target: ComplementTarget | None
    selection: ParamSelection | None
    attainable: bool = True


def robot_replan(world: WorldState, robot: int, model: DominanceModel, estimates: dict,
                 cost: NavCost = NavCost(), filter_radius: float | None = None) -> ReplanResult:
    """Install complementary parameters on ``robot`` from per-pedestrian scores.

    ``estimates`` maps pedestrian id to a :class:`DominanceScore`; clamped
    values enter the complement. With nobody to answer the robot keeps the
    defaults.
    """
    me = world.agent(robot)
    ids, values = [], []
    for a in world.agents:
        if a.id == robot or a.kind is Kind.ROBOT:
            continue
        if filter_radius is not None:
            if math.dist(a.position, me.position) > filter_radius:
                continue
        if a.id not in estimates:
            raise KeyError(f"no dominance estimate for pedestrian {a.id}")
        ids.append(a.id)
        values.append(estimates[a.id].clamped)
    if not ids:
        warnings.warn("no pedestrians to respond to; robot keeps default parameters",
                      stacklevel=2)
        return ReplanResult(world.with_params(robot, DEFAULT_PARAMS), DEFAULT_PARAMS, None, None)
    target = desired_dominance(values, ids)
    try:
        sel = select_params(model, target.d_des, cost)
    except UnattainableDominance as exc:
        return ReplanResult(world.with_params(robot, exc.boundary_params),
                            exc.boundary_params, target, None, False)
    return ReplanResult(world.with_params(robot, sel.params), sel.params, target, sel)


# ---------------------------------------------------------------- closed loop

@dataclass(frozen=True)
class ControllerConfig:
    replan_period: float = 1.0
    cost_weights: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)
    pedestrian_filter_radius: float | None = None
    n_particles: int = DEFAULT_PARTICLES
    sigma_obs: float = DEFAULT_SIGMA
    seed: int = 0


@dataclass(frozen=True)
class ReplanRecord:
    time: float
    robot_id: int
    d_des: float
    achieved: float
    params: MotionParams
    estimates: dict = field(default_factory=dict)
    attainable: bool = True


@dataclass(frozen=True)
class NavigationRun:
    trajectories: object
    replans: tuple


def run_navigation(scenario: Scenario, robot: int, config: ControllerConfig = ControllerConfig(),
                   model: DominanceModel = REFERENCE_MODEL) -> NavigationRun:
    """Step the scene while the robot infers pedestrian dominance and replans.

    Each pedestrian gets its own particle filter fed with every observed
    transition; the robot replans every ``replan_period`` seconds.
    """
    world0 = scenario.initial_world()
    ids = [a.id for a in world0.agents]
    r_idx = world0.index_of(robot)
    peds = [a for a in world0.agents if a.id != robot and a.kind is not Kind.ROBOT]
    scenes = {
        a.id: SceneModel(a.goal, scenario.obstacles, 0.8, a.kind, scenario.seed) for a in peds
    }
    filters = {
        a.id: init_posterior(config.n_particles, config.seed * 1000003 + a.id, config.sigma_obs)
        for a in peds
    }
    period = max(1, int(round(config.replan_period / scenario.dt)))
    cost = NavCost(tuple(config.cost_weights))
    history = []
    records = []

    def frame(tick, time, pos, prev, params, target):
        vel = (pos - prev) / scenario.dt if prev is not None else np.zeros_like(pos)
        return ObservationFrame(
            time, {i: tuple(pos[k]) for k, i in enumerate(ids)}, target,
            {i: tuple(vel[k]) for k, i in enumerate(ids)}, tick,
            {robot: float(params[r_idx, 3])},
        )

    def controller(tick, time, pos, vel, params):
        history.append((tick, time, pos.copy(), params.copy()))
        if len(history) >= 3:
            # The step from t0 to t1 ran with the parameters seen at t1.
            (t0, s0, p0, _), (t1, s1, p1, q1) = history[-2], history[-1]
            pm = history[-3][2]
            for pid in filters:
                f0 = frame(t0, s0, p0, pm, q1, pid)
                f1 = frame(t1, s1, p1, p0, q1, pid)
                filters[pid] = update(filters[pid], f0, f1, scenario.dt, scenes[pid])
        if tick == 0 or tick % period:
            return None
        pos_now = {i: tuple(pos[k]) for k, i in enumerate(ids)}
        world = WorldState(tick, time, tuple(
            AgentState(a.id, pos_now[a.id], goal=a.goal, kind=a.kind,
                       params=a.params if a.id != robot else MotionParams.from_array(params[r_idx]))
            for a in world0.agents
        ), scenario.obstacles)
        scores = {pid: evaluate(model, estimate(ps)[0]) for pid, ps in filters.items()}
        res = robot_replan(world, robot, model, scores, cost, config.pedestrian_filter_radius)
        d_des = res.target.d_des if res.target is not None else float("nan")
        records.append(ReplanRecord(
            time, robot, d_des, evaluate(model, res.params).raw, res.params,
            {pid: s.clamped for pid, s in scores.items()}, res.attainable,
        ))
        return {r_idx: res.params.as_array()}

    traj = run_scenario(scenario, controller)
    return NavigationRun(traj, tuple(records))


def corridor_with_robot(ped_params, *, seed: int = 0, dt: float = 0.1,
                        length: float = 30.0, width: float = 4.0,
                        robot_params: MotionParams = DEFAULT_PARAMS,
                        spacing: float = 3.0, robot_start: float = -8.0,
                        tick_cap: int = 2000) -> Scenario:
    """Corridor with a robot heading +x and pedestrians walking single file at it.

    The robot starts well inside the walls so encounters happen between
    them; pedestrian goals fan out past the far end so nobody is shoved
    around after arriving.
    """
    half_l, half_w = length / 2, width / 2
    walls = (
        ((-half_l, -half_w), (half_l, -half_w)),
        ((-half_l, half_w), (half_l, half_w)),
    )
    rng = np.random.default_rng(seed)
    agents = [AgentState(0, (robot_start, 0.0), goal=(half_l + 1.0, 0.0),
                         params=robot_params, kind=Kind.ROBOT)]
    for k, p in enumerate(ped_params):
        p = p if isinstance(p, MotionParams) else MotionParams.from_array(p)
        x = half_l - 3.0 - spacing * k + rng.uniform(-0.2, 0.2)
        y = rng.uniform(-0.1, 0.1)
        goal = (-2.0 * half_l, 4.0 * (k - (len(ped_params) - 1) / 2))
        agents.append(AgentState(k + 1, (x, y), goal=goal, params=p))
    return Scenario(
        ScenarioKind.CUSTOM, tuple(agents), walls, 0, Termination("highlighted_at_goal"), dt,
        seed, tick_cap, {"length": length, "width": width},
    )
