"""Trajectory metrics used by the run reports and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ExitTime:
    crossed: bool
    time: float | None


def _segment_cross(p, q, a, b):
    """Parameter s in [0, 1] along p->q where it crosses segment a-b, or None."""
    r = q - p
    s = b - a
    denom = r[0] * s[1] - r[1] * s[0]
    if denom == 0.0:
        return None
    ap = a - p
    t = (ap[0] * s[1] - ap[1] * s[0]) / denom
    u = (ap[0] * r[1] - ap[1] * r[0]) / denom
    if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
        return t
    return None


def metric_exit_time(traj, agent_id, exit_line) -> ExitTime:
    """First time the agent's path crosses ``exit_line``, interpolated between ticks."""
    path = traj.path(agent_id)
    a = np.asarray(exit_line[0], dtype=float)
    b = np.asarray(exit_line[1], dtype=float)
    times = traj.times
    for k in range(len(path) - 1):
        s = _segment_cross(path[k], path[k + 1], a, b)
        if s is not None:
            return ExitTime(True, float(times[k] + s * (times[k + 1] - times[k])))
    return ExitTime(False, None)


def metric_path_length(traj, agent_id) -> float:
    path = traj.path(agent_id)
    if len(path) < 2:
        raise ValueError("path length needs at least two frames")
    return float(np.sum(np.hypot(*np.diff(path, axis=0).T)))


def metric_min_separation(traj, radii=None) -> float:
    """Smallest ``distance - r_i - r_j`` over all ticks and pairs; +inf if n < 2."""
    P = traj.positions
    n = P.shape[1]
    if n < 2:
        return float("inf")
    if radii is None:
        radii = traj.radii
    R = np.asarray(radii, dtype=float)
    if R.ndim == 1:
        R = np.broadcast_to(R, (P.shape[0], n))
    iu, ju = np.triu_indices(n, 1)
    d = np.linalg.norm(P[:, iu, :] - P[:, ju, :], axis=2)
    return float(np.min(d - R[:, iu] - R[:, ju]))


def max_lateral_offset(traj, agent_id, start=None, goal=None) -> float:
    """Largest distance of the path from the straight start-goal line."""
    path = traj.path(agent_id)
    a = path[0] if start is None else np.asarray(start, dtype=float)
    b = path[-1] if goal is None else np.asarray(goal, dtype=float)
    d = b - a
    length = np.hypot(*d)
    if length == 0.0:
        return float(np.max(np.hypot(*(path - a).T)))
    rel = path - a
    return float(np.max(np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / length))
