"""Particle-filter estimation of one pedestrian's motion parameters.

The forward model is a single ORCA step of the target with every other
observed agent held passive at its observed position and velocity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .params import LOWER, UPPER, MAX_SPEED_FACTOR, MotionParams
from .pdm import REFERENCE_MODEL, DominanceModel, DominanceScore, evaluate
from .sim import _orca
from .sim.core import (
    ARRIVAL_THRESHOLD, OBSTACLE_HORIZON_STEPS, OVERLAP_TOLERANCE, Kind, segments_array,
)

DEFAULT_PARTICLES = 200
DEFAULT_SIGMA = 0.1
JITTER_FRACTION = 0.02
HALF_RANGE = (UPPER - LOWER) / 2.0


class PosteriorCollapse(RuntimeWarning):
    """Every particle weight underflowed; the posterior was reset to the prior."""


@dataclass(frozen=True)
class ParticleSet:
    """Weighted parameter hypotheses, one row per particle.

    ``max_neighbors`` stays continuous here and is only rounded by
    :func:`estimate`. ``generation`` counts updates so each update draws
    from its own ``(rng_seed, generation)`` stream.
    """

    hypotheses: np.ndarray
    weights: np.ndarray
    sigma_obs: float = DEFAULT_SIGMA
    rng_seed: int = 0
    generation: int = 0

    def __post_init__(self):
        H = np.array(self.hypotheses, dtype=float)
        w = np.array(self.weights, dtype=float)
        if H.ndim != 2 or H.shape[1] != 5 or H.shape[0] < 2:
            raise ValueError(f"need at least 2 hypotheses of 5 parameters, got {H.shape}")
        if w.shape != (H.shape[0],):
            raise ValueError("one weight per hypothesis required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if not self.sigma_obs > 0:
            raise ValueError(f"sigma_obs must be positive, got {self.sigma_obs}")
        H.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "hypotheses", H)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.hypotheses.shape[0]

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))

    def _rng(self):
        return np.random.default_rng([self.rng_seed, self.generation])


@dataclass(frozen=True)
class ObservationFrame:
    """Observed positions at one instant, plus optional velocities and radii.

    Missing velocities are treated as zero and missing radii fall back to
    the scene's assumed body radius. :func:`frames_from_trajectory` fills
    velocities with backward differences.
    """

    time: float
    positions: dict
    target: int
    velocities: dict = field(default_factory=dict)
    tick: int = 0
    radii: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.target not in self.positions:
            raise KeyError(f"target {self.target} missing from frame at t={self.time}")


def _uniform_box(rng, K):
    return LOWER + (UPPER - LOWER) * rng.random((K, 5))


def init_posterior(K: int = DEFAULT_PARTICLES, seed: int = 0,
                   sigma_obs: float = DEFAULT_SIGMA) -> ParticleSet:
    """Uniform prior over the parameter box."""
    if K < 2:
        raise ValueError(f"need at least 2 particles, got {K}")
    if not sigma_obs > 0:
        raise ValueError(f"sigma_obs must be positive, got {sigma_obs}")
    H = _uniform_box(np.random.default_rng([seed, 0]), K)
    return ParticleSet(H, np.full(K, 1.0 / K), float(sigma_obs), int(seed), 1)


def systematic_resample(weights: np.ndarray, rng) -> np.ndarray:
    """Indices drawn by systematic resampling (one uniform offset)."""
    K = len(weights)
    points = (rng.random() + np.arange(K)) / K
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, points, side="right")


def _jitter(H, rng):
    noisy = H + rng.normal(size=H.shape) * (JITTER_FRACTION * HALF_RANGE)
    return np.clip(noisy, LOWER, UPPER)


@dataclass(frozen=True)
class SceneModel:
    """What the predictor knows about the scene besides the observations."""

    goal: tuple | None = None
    obstacles: tuple = ()
    neighbor_radius: float = 0.8
    kind: Kind = Kind.PEDESTRIAN
    sim_seed: int = 0


def predict(ps: ParticleSet, frame: ObservationFrame, dt: float,
            scene: SceneModel = SceneModel()) -> np.ndarray:
    """Predicted next target position under every hypothesis, shape (K, 2)."""
    tid = frame.target
    p = np.asarray(frame.positions[tid], dtype=float)
    v = np.asarray(frame.velocities.get(tid, (0.0, 0.0)), dtype=float)
    goal = p if scene.goal is None else np.asarray(scene.goal, dtype=float)
    others = [k for k in sorted(frame.positions) if k != tid]
    m = len(others)
    o_pos = np.array([frame.positions[k] for k in others], dtype=float).reshape(m, 2)
    o_vel = np.array([frame.velocities.get(k, (0.0, 0.0)) for k in others],
                     dtype=float).reshape(m, 2)
    o_rad = np.array([frame.radii.get(k, scene.neighbor_radius) for k in others],
                     dtype=float).reshape(m)
    return _orca.predict_hypotheses(
        p[0], p[1], v[0], v[1], goal[0], goal[1], int(scene.kind),
        np.ascontiguousarray(ps.hypotheses), o_pos, o_vel, o_rad,
        segments_array(scene.obstacles), float(dt), OBSTACLE_HORIZON_STEPS * float(dt),
        ARRIVAL_THRESHOLD, MAX_SPEED_FACTOR, int(scene.sim_seed), int(frame.tick), int(tid),
    )


def obstacle_clearance(point, obstacles) -> float:
    """Distance from ``point`` to the nearest obstacle segment (+inf if none)."""
    segs = segments_array(obstacles)
    if segs.shape[0] == 0:
        return float("inf")
    p = np.asarray(point, dtype=float)
    a, b = segs[:, :2], segs[:, 2:]
    ab = b - a
    L = np.einsum("ij,ij->i", ab, ab)
    t = np.where(L > 0, np.einsum("ij,ij->i", p - a, ab) / np.where(L > 0, L, 1.0), 0.0)
    closest = a + np.clip(t, 0.0, 1.0)[:, None] * ab
    return float(np.min(np.hypot(*(p - closest).T)))


def update(ps: ParticleSet, frame_t: ObservationFrame, frame_next: ObservationFrame,
           dt: float, scene: SceneModel = SceneModel()) -> ParticleSet:
    """Reweight by one observed transition, resampling when ESS < K/2."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if frame_next.target != frame_t.target:
        raise ValueError("frames track different targets")
    if abs((frame_next.time - frame_t.time) - dt) > 1e-6:
        raise ValueError(
            f"frames are {frame_next.time - frame_t.time:g} s apart, expected dt={dt:g}"
        )
    obs = np.asarray(frame_next.positions[frame_next.target], dtype=float)
    pred = predict(ps, frame_t, dt, scene)
    err = np.sum((pred - obs) ** 2, axis=1)
    w = ps.weights * np.exp(-err / (2.0 * ps.sigma_obs ** 2))
    # A body wider than the observed wall clearance cannot be where it was seen.
    room = obstacle_clearance(frame_t.positions[frame_t.target], scene.obstacles)
    w = np.where(ps.hypotheses[:, 3] <= room + OVERLAP_TOLERANCE, w, 0.0)
    rng = ps._rng()
    nxt = ps.generation + 1
    total = w.sum()
    if not total > 0 or not np.isfinite(total):
        warnings.warn("all particle weights underflowed; resetting to the prior",
                      PosteriorCollapse, stacklevel=2)
        K = len(ps)
        return ParticleSet(_uniform_box(rng, K), np.full(K, 1.0 / K),
                           ps.sigma_obs, ps.rng_seed, nxt)
    w = w / total
    H = np.array(ps.hypotheses)
    K = len(w)
    if 1.0 / np.sum(w ** 2) < K / 2.0:
        H = _jitter(H[systematic_resample(w, rng)], rng)
        w = np.full(K, 1.0 / K)
    else:
        w = w / w.sum()
    return ParticleSet(H, w, ps.sigma_obs, ps.rng_seed, nxt)


def estimate(ps: ParticleSet):
    """Weighted mean parameters (box-clipped, max_neighbors rounded) and stds."""
    w = ps.weights
    mean = w @ ps.hypotheses
    var = w @ (ps.hypotheses - mean) ** 2
    return MotionParams.clipped(mean), np.sqrt(np.maximum(var, 0.0))


@dataclass(frozen=True)
class TimelineEntry:
    time: float
    agent_id: int
    params: MotionParams
    score: DominanceScore
    std: tuple = ()


def frames_from_trajectory(traj, target: int):
    """Observation frames with backward-difference velocities (zero at frame 0)."""
    col = traj.column(target)
    P = traj.positions
    V = np.zeros_like(P)
    V[1:] = (P[1:] - P[:-1]) / traj.dt
    frames = []
    for t in range(P.shape[0]):
        frames.append(ObservationFrame(
            float(traj.times[t]),
            {i: tuple(P[t, k]) for k, i in enumerate(traj.ids)},
            traj.ids[col],
            {i: tuple(V[t, k]) for k, i in enumerate(traj.ids)},
            int(traj.ticks[t]),
        ))
    return frames


@dataclass(frozen=True)
class InferenceConfig:
    n_particles: int = DEFAULT_PARTICLES
    sigma_obs: float = DEFAULT_SIGMA
    seed: int = 0
    scene: SceneModel = SceneModel()
    model: DominanceModel = REFERENCE_MODEL


def infer_trajectory(traj, target: int, config: InferenceConfig = InferenceConfig()):
    """Filter over every frame pair and return one :class:`TimelineEntry` per frame.

    The first transition is skipped: frame 0 has no backward-difference
    velocity, so the ORCA velocity input there is unknown.
    """
    traj.column(target)
    if len(traj.ticks) < 3:
        raise ValueError(f"need at least 3 frames to infer, got {len(traj.ticks)}")
    scene = config.scene
    if scene.goal is None:
        scene = SceneModel(tuple(traj.path(target)[-1]), scene.obstacles,
                           scene.neighbor_radius, scene.kind, scene.sim_seed)
    frames = frames_from_trajectory(traj, target)
    ps = init_posterior(config.n_particles, config.seed, config.sigma_obs)

    def entry(frame, ps):
        params, std = estimate(ps)
        return TimelineEntry(frame.time, target, params, evaluate(config.model, params), tuple(std))

    timeline = [entry(frames[0], ps)]
    for t in range(1, len(frames)):
        if t >= 2:
            ps = update(ps, frames[t - 1], frames[t], traj.dt, scene)
        timeline.append(entry(frames[t], ps))
    return timeline, ps


class MotionParamFilter(BaseEstimator):
    """Estimator wrapper around :func:`infer_trajectory`.

    ``fit(traj, target)`` runs the filter; ``params_``, ``dominance_`` and
    ``timeline_`` hold the result.
    """

    def __init__(self, n_particles=DEFAULT_PARTICLES, sigma_obs=DEFAULT_SIGMA,
                 random_state=0, goal=None, obstacles=(), neighbor_radius=0.8,
                 sim_seed=0):
        self.n_particles = n_particles
        self.sigma_obs = sigma_obs
        self.random_state = random_state
        self.goal = goal
        self.obstacles = obstacles
        self.neighbor_radius = neighbor_radius
        self.sim_seed = sim_seed

    def fit(self, traj, target):
        cfg = InferenceConfig(
            self.n_particles, self.sigma_obs, int(self.random_state or 0),
            SceneModel(self.goal, tuple(self.obstacles), self.neighbor_radius,
                       Kind.PEDESTRIAN, self.sim_seed),
        )
        self.timeline_, self.posterior_ = infer_trajectory(traj, target, cfg)
        self.params_ = self.timeline_[-1].params
        self.dominance_ = self.timeline_[-1].score
        self.std_ = np.array(self.timeline_[-1].std)
        return self
