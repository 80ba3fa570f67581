"""Compiled ORCA kernels.

Half-planes are stored as rows ``(px, py, dx, dy)``: a point on the
boundary and a unit direction; the permitted side is to the left of the
direction. Obstacle rows come first and stay hard in the infeasible
fallback. Everything here is plain float arithmetic so results are
bit-reproducible.
"""

import math

import numpy as np
from numba import njit

EPS = 1e-5

KIND_PEDESTRIAN = 0
KIND_ROBOT = 1
KIND_STANDING = 2


@njit(cache=True)
def _det(ax, ay, bx, by):
    return ax * by - ay * bx


@njit(cache=True)
def _lp1(lines, line_no, radius, opt_x, opt_y, direction_opt, result):
    px = lines[line_no, 0]
    py = lines[line_no, 1]
    dx = lines[line_no, 2]
    dy = lines[line_no, 3]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        return False
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        denom = _det(dx, dy, lines[i, 2], lines[i, 3])
        numer = _det(lines[i, 2], lines[i, 3], px - lines[i, 0], py - lines[i, 1])
        if abs(denom) <= EPS:
            if numer < 0.0:
                return False
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False
    if direction_opt:
        if opt_x * dx + opt_y * dy > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = dx * (opt_x - px) + dy * (opt_y - py)
        if t < t_left:
            t = t_left
        elif t > t_right:
            t = t_right
    result[0] = px + t * dx
    result[1] = py + t * dy
    return True


@njit(cache=True)
def _lp2(lines, n_lines, radius, opt_x, opt_y, direction_opt, result):
    """Closest point to the optimization velocity; returns index of first failure."""
    if direction_opt:
        result[0] = opt_x * radius
        result[1] = opt_y * radius
    else:
        norm_sq = opt_x * opt_x + opt_y * opt_y
        if norm_sq > radius * radius:
            norm = math.sqrt(norm_sq)
            result[0] = opt_x / norm * radius
            result[1] = opt_y / norm * radius
        else:
            result[0] = opt_x
            result[1] = opt_y
    for i in range(n_lines):
        if _det(lines[i, 2], lines[i, 3], lines[i, 0] - result[0], lines[i, 1] - result[1]) > 0.0:
            keep_x = result[0]
            keep_y = result[1]
            if not _lp1(lines, i, radius, opt_x, opt_y, direction_opt, result):
                result[0] = keep_x
                result[1] = keep_y
                return i
    return n_lines


@njit(cache=True)
def _lp3(lines, n_lines, n_obst, begin, radius, result):
    """Minimize the largest violation of the agent half-planes, obstacles kept hard."""
    distance = 0.0
    proj = np.empty((n_lines, 4))
    for i in range(begin, n_lines):
        dix = lines[i, 2]
        diy = lines[i, 3]
        if _det(dix, diy, lines[i, 0] - result[0], lines[i, 1] - result[1]) > distance:
            n_proj = 0
            for j in range(n_obst):
                proj[n_proj, :] = lines[j, :]
                n_proj += 1
            for j in range(n_obst, i):
                djx = lines[j, 2]
                djy = lines[j, 3]
                determinant = _det(dix, diy, djx, djy)
                if abs(determinant) <= EPS:
                    if dix * djx + diy * djy > 0.0:
                        continue
                    qx = 0.5 * (lines[i, 0] + lines[j, 0])
                    qy = 0.5 * (lines[i, 1] + lines[j, 1])
                else:
                    s = _det(djx, djy, lines[i, 0] - lines[j, 0], lines[i, 1] - lines[j, 1]) / determinant
                    qx = lines[i, 0] + s * dix
                    qy = lines[i, 1] + s * diy
                ex = djx - dix
                ey = djy - diy
                en = math.sqrt(ex * ex + ey * ey)
                proj[n_proj, 0] = qx
                proj[n_proj, 1] = qy
                proj[n_proj, 2] = ex / en
                proj[n_proj, 3] = ey / en
                n_proj += 1
            keep_x = result[0]
            keep_y = result[1]
            if _lp2(proj, n_proj, radius, -diy, dix, True, result) < n_proj:
                # Only floating-point error lands here; keep the previous point.
                result[0] = keep_x
                result[1] = keep_y
            distance = _det(dix, diy, lines[i, 0] - result[0], lines[i, 1] - result[1])


@njit(cache=True)
def _obstacle_lines(px, py, radius, max_speed, segs, tau_obst, inv_dt, lines):
    """One half-plane per nearby segment, from the segment point closest to the agent."""
    n = 0
    reach = tau_obst * max_speed + radius
    for k in range(segs.shape[0]):
        ax = segs[k, 0]
        ay = segs[k, 1]
        bx = segs[k, 2]
        by = segs[k, 3]
        sx = bx - ax
        sy = by - ay
        seg_sq = sx * sx + sy * sy
        t = 0.0
        if seg_sq > 0.0:
            t = ((px - ax) * sx + (py - ay) * sy) / seg_sq
            t = min(1.0, max(0.0, t))
        cx = ax + t * sx
        cy = ay + t * sy
        nx = px - cx
        ny = py - cy
        dist = math.sqrt(nx * nx + ny * ny)
        if dist > reach or dist == 0.0:
            continue
        nx /= dist
        ny /= dist
        if dist >= radius:
            offset = -(dist - radius) / tau_obst
        else:
            offset = (radius - dist) * inv_dt
        # Permitted side {v : v . n >= offset}.
        lines[n, 0] = nx * offset
        lines[n, 1] = ny * offset
        lines[n, 2] = ny
        lines[n, 3] = -nx
        n += 1
    return n


@njit(cache=True)
def _agent_line(px, py, vx, vy, radius, inv_tau, inv_dt, ox, oy, ovx, ovy, orad, lines, row):
    rpx = ox - px
    rpy = oy - py
    rvx = vx - ovx
    rvy = vy - ovy
    dist_sq = rpx * rpx + rpy * rpy
    comb = radius + orad
    comb_sq = comb * comb
    if dist_sq > comb_sq:
        wx = rvx - inv_tau * rpx
        wy = rvy - inv_tau * rpy
        w_sq = wx * wx + wy * wy
        dot1 = wx * rpx + wy * rpy
        if dot1 < 0.0 and dot1 * dot1 > comb_sq * w_sq:
            # Project on the cut-off circle.
            w_len = math.sqrt(w_sq)
            ux_ = wx / w_len
            uy_ = wy / w_len
            dirx = uy_
            diry = -ux_
            scale = comb * inv_tau - w_len
            ux = scale * ux_
            uy = scale * uy_
        else:
            # Project on the nearer leg.
            leg = math.sqrt(dist_sq - comb_sq)
            if _det(rpx, rpy, wx, wy) > 0.0:
                dirx = (rpx * leg - rpy * comb) / dist_sq
                diry = (rpx * comb + rpy * leg) / dist_sq
            else:
                dirx = -(rpx * leg + rpy * comb) / dist_sq
                diry = -(-rpx * comb + rpy * leg) / dist_sq
            dot2 = rvx * dirx + rvy * diry
            ux = dot2 * dirx - rvx
            uy = dot2 * diry - rvy
    else:
        # Already overlapping: separate within one step.
        wx = rvx - inv_dt * rpx
        wy = rvy - inv_dt * rpy
        w_len = math.sqrt(wx * wx + wy * wy)
        if w_len == 0.0:
            # Coincident centres with equal velocity; pick a fixed normal.
            ux_ = -1.0
            uy_ = 0.0
        else:
            ux_ = wx / w_len
            uy_ = wy / w_len
        dirx = uy_
        diry = -ux_
        scale = comb * inv_dt - w_len
        ux = scale * ux_
        uy = scale * uy_
    lines[row, 0] = vx + 0.5 * ux
    lines[row, 1] = vy + 0.5 * uy
    lines[row, 2] = dirx
    lines[row, 3] = diry


@njit(cache=True)
def solve_velocity(px, py, vx, vy, pref_x, pref_y, radius, tau, max_speed,
                   nb_pos, nb_vel, nb_rad, segs, tau_obst, dt):
    """New velocity of one agent given its ordered neighbour list."""
    inv_dt = 1.0 / dt
    lines = np.empty((segs.shape[0] + nb_pos.shape[0], 4))
    n_obst = _obstacle_lines(px, py, radius, max_speed, segs, tau_obst, inv_dt, lines)
    inv_tau = 1.0 / tau
    n = n_obst
    for k in range(nb_pos.shape[0]):
        _agent_line(px, py, vx, vy, radius, inv_tau, inv_dt,
                    nb_pos[k, 0], nb_pos[k, 1], nb_vel[k, 0], nb_vel[k, 1], nb_rad[k],
                    lines, n)
        n += 1
    result = np.empty(2)
    fail = _lp2(lines, n, max_speed, pref_x, pref_y, False, result)
    if fail < n:
        _lp3(lines, n, n_obst, fail, max_speed, result)
    return result[0], result[1]


@njit(cache=True)
def neighbor_indices(i, pos, neighbor_dist, max_neighbors):
    """Agents within the closed neighbour ball, nearest first, ties by index."""
    n = pos.shape[0]
    r_sq = neighbor_dist * neighbor_dist
    cand = np.empty(n, dtype=np.int64)
    d_sq = np.empty(n)
    m = 0
    for j in range(n):
        if j == i:
            continue
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dd = dx * dx + dy * dy
        if dd <= r_sq:
            cand[m] = j
            d_sq[m] = dd
            m += 1
    order = np.argsort(d_sq[:m], kind="mergesort")
    k = min(m, max_neighbors)
    out = np.empty(k, dtype=np.int64)
    for q in range(k):
        out[q] = cand[order[q]]
    return out


@njit(cache=True)
def preferred_velocity(px, py, gx, gy, pref_speed, kind, dt, arrive):
    if kind == KIND_STANDING:
        return 0.0, 0.0
    dx = gx - px
    dy = gy - py
    dist = math.sqrt(dx * dx + dy * dy)
    if dist <= arrive:
        return 0.0, 0.0
    speed = min(pref_speed, dist / dt)
    return dx / dist * speed, dy / dist * speed


STUCK_FRACTION = 0.05


@njit(cache=True)
def _mix(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15))
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@njit(cache=True)
def unstick_direction(seed, tick, agent_id):
    """Unit vector from a counter-based hash of (seed, tick, id)."""
    h = _mix(np.uint64(seed) ^ _mix(np.uint64(tick) ^ _mix(np.uint64(agent_id))))
    angle = 2.0 * math.pi * float(h >> np.uint64(11)) / 9007199254740992.0
    return math.cos(angle), math.sin(angle)


@njit(cache=True)
def _agent_velocity(px, py, vx, vy, gx, gy, kind, prow, nb_pos, nb_vel, nb_rad, segs,
                    dt, tau_obst, arrive, max_speed_factor, seed, tick, agent_id):
    """ORCA velocity with the deadlock breaker.

    An agent that wants to move but whose ORCA velocity is (nearly) zero
    while it is already (nearly) at rest re-solves toward a pseudo-random
    direction; pinned agents then back off instead of waiting forever.
    """
    pref_speed = prow[4]
    max_speed = max_speed_factor * pref_speed
    pvx, pvy = preferred_velocity(px, py, gx, gy, pref_speed, kind, dt, arrive)
    nvx, nvy = solve_velocity(px, py, vx, vy, pvx, pvy, prow[3], prow[2], max_speed,
                              nb_pos, nb_vel, nb_rad, segs, tau_obst, dt)
    slow = STUCK_FRACTION * pref_speed
    if seed >= 0 and (pvx != 0.0 or pvy != 0.0):
        if nvx * nvx + nvy * nvy < slow * slow and vx * vx + vy * vy < slow * slow:
            ux, uy = unstick_direction(seed, tick, agent_id)
            nvx, nvy = solve_velocity(px, py, vx, vy, ux * pref_speed, uy * pref_speed,
                                      prow[3], prow[2], max_speed, nb_pos, nb_vel, nb_rad,
                                      segs, tau_obst, dt)
    return nvx, nvy


@njit(cache=True)
def step_world(pos, vel, goal, params, kind, segs, dt, tau_obst, arrive, max_speed_factor,
               seed, tick, ids):
    """Synchronous update: all velocities from the previous state, then integrate."""
    n = pos.shape[0]
    new_vel = np.empty((n, 2))
    radii = params[:, 3].copy()
    for i in range(n):
        nb = neighbor_indices(i, pos, params[i, 0], int(round(params[i, 1])))
        k = nb.shape[0]
        nb_pos = np.empty((k, 2))
        nb_vel = np.empty((k, 2))
        nb_rad = np.empty(k)
        for q in range(k):
            j = nb[q]
            nb_pos[q, 0] = pos[j, 0]
            nb_pos[q, 1] = pos[j, 1]
            nb_vel[q, 0] = vel[j, 0]
            nb_vel[q, 1] = vel[j, 1]
            nb_rad[q] = radii[j]
        vx, vy = _agent_velocity(pos[i, 0], pos[i, 1], vel[i, 0], vel[i, 1],
                                 goal[i, 0], goal[i, 1], kind[i], params[i], nb_pos, nb_vel,
                                 nb_rad, segs, dt, tau_obst, arrive, max_speed_factor,
                                 seed, tick, ids[i])
        new_vel[i, 0] = vx
        new_vel[i, 1] = vy
    _enforce_separation(pos, new_vel, radii, dt)
    new_pos = pos + new_vel * dt
    return new_pos, new_vel


@njit(cache=True)
def _first_contact(rx, ry, dx, dy, target):
    """First s in [0, 1) where |r + s d| reaches target; caller knows s = 1 violates."""
    a = dx * dx + dy * dy
    b = 2.0 * (rx * dx + ry * dy)
    c = rx * rx + ry * ry - target * target
    if a == 0.0:
        return 1.0
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return 1.0
    s = (-b - math.sqrt(disc)) / (2.0 * a)
    if s >= 1.0:
        return 1.0
    return max(0.0, s - 1e-9)


@njit(cache=True)
def _enforce_separation(pos, vel, radii, dt):
    """Scale back velocities that would make two bodies interpenetrate.

    ORCA's infeasible fallback and asymmetric neighbour sets can produce
    small overlaps; a pair may never end a tick closer than
    ``min(r_i + r_j, current distance)``. Scaling only shrinks speeds, so
    the speed cap is preserved.
    """
    n = pos.shape[0]
    for _ in range(20):
        scale = np.ones(n)
        hit = False
        for i in range(n):
            for j in range(i + 1, n):
                rx = pos[i, 0] - pos[j, 0]
                ry = pos[i, 1] - pos[j, 1]
                comb = radii[i] + radii[j]
                reach = comb + (abs(vel[i, 0]) + abs(vel[i, 1]) + abs(vel[j, 0]) + abs(vel[j, 1])) * dt
                if abs(rx) > reach or abs(ry) > reach:
                    continue
                dx = (vel[i, 0] - vel[j, 0]) * dt
                dy = (vel[i, 1] - vel[j, 1]) * dt
                ex = rx + dx
                ey = ry + dy
                dist = math.sqrt(rx * rx + ry * ry)
                target = min(comb, dist)
                if ex * ex + ey * ey >= target * target:
                    continue
                s = _first_contact(rx, ry, dx, dy, target)
                if s < 1.0:
                    hit = True
                    scale[i] = min(scale[i], s)
                    scale[j] = min(scale[j], s)
        if not hit:
            return
        for i in range(n):
            vel[i, 0] *= scale[i]
            vel[i, 1] *= scale[i]
    # Residual conflicts after the pass budget: hold offenders still until
    # nothing moves into contact.
    changed = True
    while changed:
        changed = False
        for i in range(n):
            for j in range(i + 1, n):
                rx = pos[i, 0] - pos[j, 0]
                ry = pos[i, 1] - pos[j, 1]
                ex = rx + (vel[i, 0] - vel[j, 0]) * dt
                ey = ry + (vel[i, 1] - vel[j, 1]) * dt
                target = min(radii[i] + radii[j], math.sqrt(rx * rx + ry * ry))
                if ex * ex + ey * ey < target * target:
                    if vel[i, 0] != 0.0 or vel[i, 1] != 0.0 or vel[j, 0] != 0.0 or vel[j, 1] != 0.0:
                        changed = True
                    vel[i, 0] = 0.0
                    vel[i, 1] = 0.0
                    vel[j, 0] = 0.0
                    vel[j, 1] = 0.0


@njit(cache=True)
def predict_hypotheses(px, py, vx, vy, gx, gy, kind, hyps, others_pos, others_vel,
                       others_rad, segs, dt, tau_obst, arrive, max_speed_factor,
                       seed, tick, agent_id):
    """One-step position of a single agent under each parameter row of ``hyps``.

    Everyone else is passive: observed position and velocity, not re-solved.
    """
    K = hyps.shape[0]
    m = others_pos.shape[0]
    d_sq = np.empty(m)
    for j in range(m):
        dx = others_pos[j, 0] - px
        dy = others_pos[j, 1] - py
        d_sq[j] = dx * dx + dy * dy
    order = np.argsort(d_sq, kind="mergesort")
    out = np.empty((K, 2))
    for h in range(K):
        r_sq = hyps[h, 0] * hyps[h, 0]
        cap = int(round(hyps[h, 1]))
        k = 0
        while k < m and k < cap and d_sq[order[k]] <= r_sq:
            k += 1
        nb_pos = np.empty((k, 2))
        nb_vel = np.empty((k, 2))
        nb_rad = np.empty(k)
        for q in range(k):
            j = order[q]
            nb_pos[q, 0] = others_pos[j, 0]
            nb_pos[q, 1] = others_pos[j, 1]
            nb_vel[q, 0] = others_vel[j, 0]
            nb_vel[q, 1] = others_vel[j, 1]
            nb_rad[q] = others_rad[j]
        nvx, nvy = _agent_velocity(px, py, vx, vy, gx, gy, kind, hyps[h], nb_pos, nb_vel,
                                   nb_rad, segs, dt, tau_obst, arrive, max_speed_factor,
                                   seed, tick, agent_id)
        out[h, 0] = px + nvx * dt
        out[h, 1] = py + nvy * dt
    return out
