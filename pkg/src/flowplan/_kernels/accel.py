"""Numba-JIT implementations of the hot geometry kernels.

Loop-structured mirrors of ``flowplan._kernels.reference`` with identical
signatures and semantics; compiled lazily on first call, disk-cached.
"""

import math

import numpy as np
from numba import njit

_FAR = 1e18


@njit(cache=True)
def hinge_collision_cost(wx, wy, times, static_pts, dyn_obs, d_safe,
                         dyn_margin=0.0):
    n = wx.shape[0]
    ms = static_pts.shape[0]
    md = dyn_obs.shape[0]
    if ms + md == 0:
        return 0.0
    d2s = d_safe * d_safe
    d2d = (d_safe + dyn_margin) * (d_safe + dyn_margin)
    total = 0.0
    for k in range(n):
        z = -_FAR
        best = _FAR
        for m in range(ms):
            dx = wx[k] - static_pts[m, 0]
            dy = wy[k] - static_pts[m, 1]
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
        if ms > 0:
            z = d2s - best
        best = _FAR
        for m in range(md):
            dx = wx[k] - (dyn_obs[m, 0] + times[k] * dyn_obs[m, 2])
            dy = wy[k] - (dyn_obs[m, 1] + times[k] * dyn_obs[m, 3])
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
        if md > 0 and d2d - best > z:
            z = d2d - best
        if z > 0.0:
            total += z
    return total / n


@njit(cache=True)
def _nearest_offsets(wx_k, wy_k, t_k, static_pts, dyn_obs, d_safe, dyn_margin):
    """Best hinge argument z at one waypoint and the offset producing it.

    Static class wins exact ties; within a class the first (lowest-index)
    nearest obstacle wins via strict-inequality updates.
    """
    z = -_FAR
    bdx = 0.0
    bdy = 0.0
    best = _FAR
    cdx = 0.0
    cdy = 0.0
    for m in range(static_pts.shape[0]):
        dx = wx_k - static_pts[m, 0]
        dy = wy_k - static_pts[m, 1]
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
            cdx = dx
            cdy = dy
    if static_pts.shape[0] > 0:
        z = d_safe * d_safe - best
        bdx = cdx
        bdy = cdy
    best = _FAR
    for m in range(dyn_obs.shape[0]):
        dx = wx_k - (dyn_obs[m, 0] + t_k * dyn_obs[m, 2])
        dy = wy_k - (dyn_obs[m, 1] + t_k * dyn_obs[m, 3])
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
            cdx = dx
            cdy = dy
    if dyn_obs.shape[0] > 0:
        d_dyn = d_safe + dyn_margin
        z_dyn = d_dyn * d_dyn - best
        if z_dyn > z:
            z = z_dyn
            bdx = cdx
            bdy = cdy
    return z, bdx, bdy


@njit(cache=True)
def hinge_collision_cost_grad(wx, wy, times, static_pts, dyn_obs, d_safe,
                              dyn_margin=0.0):
    n = wx.shape[0]
    gx = np.zeros(n)
    gy = np.zeros(n)
    ms = static_pts.shape[0]
    md = dyn_obs.shape[0]
    if ms + md == 0:
        return 0.0, gx, gy
    total = 0.0
    scale = -2.0 / n
    for k in range(n):
        z, bdx, bdy = _nearest_offsets(wx[k], wy[k], times[k], static_pts,
                                       dyn_obs, d_safe, dyn_margin)
        if z > 0.0:
            total += z
            gx[k] = scale * bdx
            gy[k] = scale * bdy
    return total / n, gx, gy


@njit(cache=True)
def smooth_hinge_cost_grad(wx, wy, times, static_pts, dyn_obs, d_safe,
                           sharpness, dyn_margin=0.0):
    n = wx.shape[0]
    gx = np.zeros(n)
    gy = np.zeros(n)
    ms = static_pts.shape[0]
    md = dyn_obs.shape[0]
    if ms + md == 0:
        return 0.0, gx, gy
    knee = 1.0 / sharpness
    total = 0.0
    for k in range(n):
        z, bdx, bdy = _nearest_offsets(wx[k], wy[k], times[k], static_pts,
                                       dyn_obs, d_safe, dyn_margin)
        if z > 0.0:
            if z <= knee:
                total += 0.5 * sharpness * z * z
                weight = sharpness * z
            else:
                total += z - 0.5 * knee
                weight = 1.0
            gx[k] = (-2.0 / n) * weight * bdx
            gy[k] = (-2.0 / n) * weight * bdy
    return total / n, gx, gy


@njit(cache=True)
def refine_objective(xi, xi_in, P, dP, ddP, times, static_pts, dyn_obs,
                     d_opt, dyn_margin, v2_opt, a2_opt, sharpness,
                     w_prox, w_col, w_lim):
    half = xi.shape[0] // 2
    n = P.shape[0]
    ms = static_pts.shape[0]
    md = dyn_obs.shape[0]
    knee = 1.0 / sharpness

    value = 0.0
    grad = np.empty_like(xi)
    for j in range(xi.shape[0]):
        d = xi[j] - xi_in[j]
        value += w_prox * d * d
        grad[j] = 2.0 * w_prox * d

    for k in range(n):
        wx = 0.0
        wy = 0.0
        vx = 0.0
        vy = 0.0
        ax = 0.0
        ay = 0.0
        for j in range(half):
            wx += P[k, j] * xi[j]
            wy += P[k, j] * xi[half + j]
            vx += dP[k, j] * xi[j]
            vy += dP[k, j] * xi[half + j]
            ax += ddP[k, j] * xi[j]
            ay += ddP[k, j] * xi[half + j]

        if ms + md > 0:
            z, bdx, bdy = _nearest_offsets(wx, wy, times[k], static_pts,
                                           dyn_obs, d_opt, dyn_margin)
            if z > 0.0:
                if z <= knee:
                    value += w_col * 0.5 * sharpness * z * z / n
                    weight = sharpness * z
                else:
                    value += w_col * (z - 0.5 * knee) / n
                    weight = 1.0
                gx = w_col * (-2.0 / n) * weight * bdx
                gy = w_col * (-2.0 / n) * weight * bdy
                for j in range(half):
                    grad[j] += gx * P[k, j]
                    grad[half + j] += gy * P[k, j]

        z = vx * vx + vy * vy - v2_opt
        if z > 0.0:
            if z <= knee:
                value += w_lim * 0.5 * sharpness * z * z / n
                weight = sharpness * z
            else:
                value += w_lim * (z - 0.5 * knee) / n
                weight = 1.0
            gvx = w_lim * (2.0 / n) * weight * vx
            gvy = w_lim * (2.0 / n) * weight * vy
            for j in range(half):
                grad[j] += gvx * dP[k, j]
                grad[half + j] += gvy * dP[k, j]

        z = ax * ax + ay * ay - a2_opt
        if z > 0.0:
            if z <= knee:
                value += w_lim * 0.5 * sharpness * z * z / n
                weight = sharpness * z
            else:
                value += w_lim * (z - 0.5 * knee) / n
                weight = 1.0
            gax = w_lim * (2.0 / n) * weight * ax
            gay = w_lim * (2.0 / n) * weight * ay
            for j in range(half):
                grad[j] += gax * ddP[k, j]
                grad[half + j] += gay * ddP[k, j]

    return value, grad


@njit(cache=True)
def min_point_clearance(wx, wy, times, static_pts, dyn_obs):
    n = wx.shape[0]
    ms = static_pts.shape[0]
    md = dyn_obs.shape[0]
    if ms + md == 0:
        return np.inf
    best = _FAR
    for k in range(n):
        for m in range(ms):
            dx = wx[k] - static_pts[m, 0]
            dy = wy[k] - static_pts[m, 1]
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
        for m in range(md):
            dx = wx[k] - (dyn_obs[m, 0] + times[k] * dyn_obs[m, 2])
            dy = wy[k] - (dyn_obs[m, 1] + times[k] * dyn_obs[m, 3])
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
    return math.sqrt(best)


@njit(cache=True)
def rect_signed_distance(px, py, rect):
    xmin, ymin, xmax, ymax = rect[0], rect[1], rect[2], rect[3]
    dx = max(xmin - px, 0.0, px - xmax)
    dy = max(ymin - py, 0.0, py - ymax)
    if dx > 0.0 or dy > 0.0:
        return math.hypot(dx, dy)
    return -min(min(px - xmin, xmax - px), min(py - ymin, ymax - py))


@njit(cache=True)
def disc_clearance(px, py, radius, agent_xyr, rects, circles):
    best = _FAR
    for i in range(agent_xyr.shape[0]):
        d = math.hypot(px - agent_xyr[i, 0], py - agent_xyr[i, 1])
        c = d - radius - agent_xyr[i, 2]
        if c < best:
            best = c
    for i in range(rects.shape[0]):
        c = rect_signed_distance(px, py, rects[i]) - radius
        if c < best:
            best = c
    for i in range(circles.shape[0]):
        d = math.hypot(px - circles[i, 0], py - circles[i, 1])
        c = d - circles[i, 2] - radius
        if c < best:
            best = c
    return best


@njit(cache=True)
def _ray_rect(px, py, dx, dy, xmin, ymin, xmax, ymax, eps):
    tmin = -_FAR
    tmax = _FAR
    if abs(dx) < eps:
        if px < xmin or px > xmax:
            return -1.0
    else:
        t1 = (xmin - px) / dx
        t2 = (xmax - px) / dx
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
    if abs(dy) < eps:
        if py < ymin or py > ymax:
            return -1.0
    else:
        t1 = (ymin - py) / dy
        t2 = (ymax - py) / dy
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > tmin:
            tmin = t1
        if t2 < tmax:
            tmax = t2
    if tmax < tmin or tmax < eps:
        return -1.0
    return tmin if tmin > eps else tmax


@njit(cache=True)
def _ray_circle(px, py, dx, dy, cx, cy, rad, eps):
    ox = px - cx
    oy = py - cy
    b = dx * ox + dy * oy
    c0 = ox * ox + oy * oy - rad * rad
    disc = b * b - c0
    if disc < 0.0:
        return -1.0
    root = math.sqrt(disc)
    t = -b - root
    if t < eps:
        t = -b + root
    return t if t > eps else -1.0


@njit(cache=True)
def cast_rays(px, py, theta, phis, rects, circles, max_range):
    nr = phis.shape[0]
    out = np.full(nr, max_range)
    eps = 1e-12
    for i in range(nr):
        ang = theta + phis[i]
        dirx = math.cos(ang)
        diry = math.sin(ang)
        for r in range(rects.shape[0]):
            t = _ray_rect(px, py, dirx, diry,
                          rects[r, 0], rects[r, 1], rects[r, 2], rects[r, 3], eps)
            if 0.0 < t < out[i]:
                out[i] = t
        for c in range(circles.shape[0]):
            t = _ray_circle(px, py, dirx, diry,
                            circles[c, 0], circles[c, 1], circles[c, 2], eps)
            if 0.0 < t < out[i]:
                out[i] = t
    return out


@njit(cache=True)
def social_force_step(pos, vel, goals, pref, radii, rects, circles,
                      robot_xyr, robot_active, dt, params):
    tau = params[0]
    rep_a = params[1]
    rep_b = params[2]
    rep_cut = params[3]
    bias = params[4]
    wall_a = params[5]
    wall_b = params[6]
    slow_radius = params[7]
    n = pos.shape[0]
    new_pos = np.empty_like(pos)
    new_vel = np.empty_like(vel)
    for i in range(n):
        gx = goals[i, 0] - pos[i, 0]
        gy = goals[i, 1] - pos[i, 1]
        dist = math.hypot(gx, gy)
        if dist > 1e-9:
            gx /= dist
            gy /= dist
        else:
            gx, gy = 0.0, 0.0
        des = pref[i] * min(1.0, dist / slow_radius)
        fx = (des * gx - vel[i, 0]) / tau
        fy = (des * gy - vel[i, 1]) / tau
        sp = math.hypot(vel[i, 0], vel[i, 1])
        if sp > 0.1:
            hx, hy = vel[i, 0] / sp, vel[i, 1] / sp
        else:
            hx, hy = gx, gy
        rx, ry = hy, -hx
        for j in range(n):
            if j == i:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            d = math.hypot(dx, dy)
            if d < 1e-9 or d > rep_cut:
                continue
            m = rep_a * math.exp((radii[i] + radii[j] - d) / rep_b)
            fx += m * (dx / d + bias * rx)
            fy += m * (dy / d + bias * ry)
        if robot_active:
            dx = pos[i, 0] - robot_xyr[0]
            dy = pos[i, 1] - robot_xyr[1]
            d = math.hypot(dx, dy)
            if 1e-9 < d <= rep_cut:
                m = rep_a * math.exp((radii[i] + robot_xyr[2] - d) / rep_b)
                fx += m * (dx / d + bias * rx)
                fy += m * (dy / d + bias * ry)
        for r in range(rects.shape[0]):
            d = rect_signed_distance(pos[i, 0], pos[i, 1], rects[r])
            if 1e-9 < d < rep_cut:
                qx = min(max(pos[i, 0], rects[r, 0]), rects[r, 2])
                qy = min(max(pos[i, 1], rects[r, 1]), rects[r, 3])
                nx = (pos[i, 0] - qx) / d
                ny = (pos[i, 1] - qy) / d
                m = wall_a * math.exp((radii[i] - d) / wall_b)
                fx += m * nx
                fy += m * ny
        for c in range(circles.shape[0]):
            dx = pos[i, 0] - circles[c, 0]
            dy = pos[i, 1] - circles[c, 1]
            d = math.hypot(dx, dy) - circles[c, 2]
            if 1e-9 < d < rep_cut:
                dd = d + circles[c, 2]
                m = wall_a * math.exp((radii[i] - d) / wall_b)
                fx += m * dx / dd
                fy += m * dy / dd
        vx = vel[i, 0] + fx * dt
        vy = vel[i, 1] + fy * dt
        sp = math.hypot(vx, vy)
        if sp > pref[i]:
            vx *= pref[i] / sp
            vy *= pref[i] / sp
        new_vel[i, 0] = vx
        new_vel[i, 1] = vy
        new_pos[i, 0] = pos[i, 0] + vx * dt
        new_pos[i, 1] = pos[i, 1] + vy * dt
    return new_pos, new_vel
