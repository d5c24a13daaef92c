"""Pure-NumPy reference implementations of the hot geometry kernels.

Semantics match ``flowplan._kernels.accel`` to floating-point roundoff;
this module is the fallback when numba is unavailable or disabled via
``FLOWPLAN_NUMBA=0`` and the oracle the JIT path is tested against.

Conventions shared by both backends:
  * waypoints are given as separate x/y float64 vectors plus a time vector;
  * static obstacles are points ``[M, 2]``; dynamic obstacles are rows
    ``(x, y, vx, vy)`` propagated at constant velocity to each waypoint time;
  * rectangles are axis-aligned ``(xmin, ymin, xmax, ymax)``; circles are
    ``(cx, cy, r)``.
"""

import numpy as np

_FAR = 1e18


def hinge_collision_cost(wx, wy, times, static_pts, dyn_obs, d_safe,
                         dyn_margin=0.0):
    """Mean hinge on squared clearance over the waypoints.

    cost = (1/N) * sum_k max(0, d_safe^2 - min_m ||p_k - o_m||^2)

    ``dyn_margin`` widens the margin for dynamic obstacle rows to
    d_safe + dyn_margin (tracker centroids need inflating by the agent
    radius); with the default 0.0 this is exactly the single-margin hinge.
    Returns 0.0 when there are no obstacle points at all.
    """
    n = wx.shape[0]
    if static_pts.shape[0] == 0 and dyn_obs.shape[0] == 0:
        return 0.0
    z = np.full(n, -_FAR)
    if static_pts.shape[0]:
        dx = wx[:, None] - static_pts[None, :, 0]
        dy = wy[:, None] - static_pts[None, :, 1]
        z = np.maximum(z, d_safe * d_safe - (dx * dx + dy * dy).min(axis=1))
    if dyn_obs.shape[0]:
        ox = dyn_obs[None, :, 0] + times[:, None] * dyn_obs[None, :, 2]
        oy = dyn_obs[None, :, 1] + times[:, None] * dyn_obs[None, :, 3]
        dx = wx[:, None] - ox
        dy = wy[:, None] - oy
        d_dyn = d_safe + dyn_margin
        z = np.maximum(z, d_dyn * d_dyn - (dx * dx + dy * dy).min(axis=1))
    return float(np.maximum(0.0, z).sum() / n)


def _per_class_hinge(wx, wy, times, static_pts, dyn_obs, d_safe, dyn_margin):
    """Per-waypoint best hinge argument z and the offset to its obstacle.

    z = max over obstacle classes of (margin_class^2 - nearest d^2); the
    static class wins exact ties (lowest obstacle index within a class via
    argmin's first-occurrence rule).
    """
    n = wx.shape[0]
    z = np.full(n, -_FAR)
    bdx = np.zeros(n)
    bdy = np.zeros(n)
    rows = np.arange(n)
    if static_pts.shape[0]:
        dx = wx[:, None] - static_pts[None, :, 0]
        dy = wy[:, None] - static_pts[None, :, 1]
        d2 = dx * dx + dy * dy
        nearest = np.argmin(d2, axis=1)
        z = d_safe * d_safe - d2[rows, nearest]
        bdx = dx[rows, nearest]
        bdy = dy[rows, nearest]
    if dyn_obs.shape[0]:
        ox = dyn_obs[None, :, 0] + times[:, None] * dyn_obs[None, :, 2]
        oy = dyn_obs[None, :, 1] + times[:, None] * dyn_obs[None, :, 3]
        dx = wx[:, None] - ox
        dy = wy[:, None] - oy
        d2 = dx * dx + dy * dy
        nearest = np.argmin(d2, axis=1)
        d_dyn = d_safe + dyn_margin
        z_dyn = d_dyn * d_dyn - d2[rows, nearest]
        better = z_dyn > z
        z = np.where(better, z_dyn, z)
        bdx = np.where(better, dx[rows, nearest], bdx)
        bdy = np.where(better, dy[rows, nearest], bdy)
    return z, bdx, bdy


def hinge_collision_cost_grad(wx, wy, times, static_pts, dyn_obs, d_safe,
                              dyn_margin=0.0):
    """Hinge cost plus its gradient w.r.t. the waypoint coordinates.

    Ties at the argmin resolve to the lowest obstacle index, static points
    before propagated dynamic points. Inactive waypoints contribute zero
    gradient.
    """
    n = wx.shape[0]
    gx = np.zeros(n)
    gy = np.zeros(n)
    if static_pts.shape[0] + dyn_obs.shape[0] == 0:
        return 0.0, gx, gy
    z, bdx, bdy = _per_class_hinge(wx, wy, times, static_pts, dyn_obs,
                                   d_safe, dyn_margin)
    active = z > 0.0
    cost = float(np.maximum(0.0, z).sum() / n)
    scale = -2.0 / n
    gx[active] = scale * bdx[active]
    gy[active] = scale * bdy[active]
    return cost, gx, gy


def smooth_hinge_cost_grad(wx, wy, times, static_pts, dyn_obs, d_safe,
                           sharpness, dyn_margin=0.0):
    """One-sided Huber hinge and waypoint gradient (optimizer interior).

    Per waypoint, with z = margin^2 - min_m d^2 (per-class margins as in
    hinge_collision_cost):
      0 for z <= 0; 0.5*sharpness*z^2 for z <= 1/sharpness; z - 1/(2*sharpness) above.
    Exactly zero (value and gradient) in the feasible interior, C^1 at the
    boundary, linear for deep violations.
    """
    n = wx.shape[0]
    if static_pts.shape[0] + dyn_obs.shape[0] == 0:
        return 0.0, np.zeros(n), np.zeros(n)
    z, bdx, bdy = _per_class_hinge(wx, wy, times, static_pts, dyn_obs,
                                   d_safe, dyn_margin)
    value, weight = huber_hinge(z, sharpness)
    cost = float(value.sum() / n)
    gx = (-2.0 / n) * weight * bdx
    gy = (-2.0 / n) * weight * bdy
    return cost, gx, gy


def huber_hinge(z, sharpness):
    """(penalty, derivative) of the one-sided Huber hinge, elementwise."""
    z = np.asarray(z, dtype=float)
    knee = 1.0 / sharpness
    value = np.where(z <= 0.0, 0.0,
                     np.where(z <= knee, 0.5 * sharpness * z * z, z - 0.5 * knee))
    weight = np.clip(sharpness * z, 0.0, 1.0)
    return value, weight


def refine_objective(xi, xi_in, P, dP, ddP, times, static_pts, dyn_obs,
                     d_opt, dyn_margin, v2_opt, a2_opt, sharpness,
                     w_prox, w_col, w_lim):
    """Fused projection-refinement objective and gradient.

    J = w_prox*||xi - xi_in||^2
      + w_col * mean_k huber(d_opt^2 - min_m d^2_km)
      + w_lim * mean_k [huber(|v_k|^2 - v2_opt) + huber(|a_k|^2 - a2_opt)]

    Returns (value, grad) with grad in flat [cx; cy] order.
    """
    half = xi.shape[0] // 2
    n = P.shape[0]
    cx, cy = xi[:half], xi[half:]
    wx = P @ cx
    wy = P @ cy
    vx = dP @ cx
    vy = dP @ cy
    ax = ddP @ cx
    ay = ddP @ cy

    diff = xi - xi_in
    value = w_prox * float(diff @ diff)
    grad = 2.0 * w_prox * diff

    col, gwx, gwy = smooth_hinge_cost_grad(wx, wy, times, static_pts, dyn_obs,
                                           d_opt, sharpness, dyn_margin)
    value += w_col * col
    grad[:half] += w_col * (P.T @ gwx)
    grad[half:] += w_col * (P.T @ gwy)

    v_pen, v_w = huber_hinge(vx * vx + vy * vy - v2_opt, sharpness)
    a_pen, a_w = huber_hinge(ax * ax + ay * ay - a2_opt, sharpness)
    value += w_lim * float(v_pen.mean() + a_pen.mean())
    sv = v_w * (2.0 / n)
    sa = a_w * (2.0 / n)
    grad[:half] += w_lim * (dP.T @ (sv * vx) + ddP.T @ (sa * ax))
    grad[half:] += w_lim * (dP.T @ (sv * vy) + ddP.T @ (sa * ay))
    return value, grad


def min_point_clearance(wx, wy, times, static_pts, dyn_obs):
    """Minimum distance from any waypoint to any obstacle point (inf if none).

    Pass one class and an empty array for the other to audit per-class
    clearances separately.
    """
    n = wx.shape[0]
    if static_pts.shape[0] == 0 and dyn_obs.shape[0] == 0:
        return float(np.inf)
    best = np.full(n, _FAR)
    if static_pts.shape[0]:
        dx = wx[:, None] - static_pts[None, :, 0]
        dy = wy[:, None] - static_pts[None, :, 1]
        best = np.minimum(best, (dx * dx + dy * dy).min(axis=1))
    if dyn_obs.shape[0]:
        ox = dyn_obs[None, :, 0] + times[:, None] * dyn_obs[None, :, 2]
        oy = dyn_obs[None, :, 1] + times[:, None] * dyn_obs[None, :, 3]
        dx = wx[:, None] - ox
        dy = wy[:, None] - oy
        best = np.minimum(best, (dx * dx + dy * dy).min(axis=1))
    return float(np.sqrt(best.min()))


def rect_signed_distance(px, py, rect):
    """Signed distance from a point to a rectangle boundary (negative inside)."""
    xmin, ymin, xmax, ymax = rect[0], rect[1], rect[2], rect[3]
    dx = max(xmin - px, 0.0, px - xmax)
    dy = max(ymin - py, 0.0, py - ymax)
    if dx > 0.0 or dy > 0.0:
        return float(np.hypot(dx, dy))
    # inside: negative penetration depth to the nearest face
    return float(-min(px - xmin, xmax - px, py - ymin, ymax - py))


def disc_clearance(px, py, radius, agent_xyr, rects, circles):
    """Minimum signed surface distance from a disc robot to agents and shapes.

    ``agent_xyr`` rows are (x, y, r). Negative means interpenetration.
    """
    best = _FAR
    for i in range(agent_xyr.shape[0]):
        d = np.hypot(px - agent_xyr[i, 0], py - agent_xyr[i, 1])
        best = min(best, d - radius - agent_xyr[i, 2])
    for i in range(rects.shape[0]):
        best = min(best, rect_signed_distance(px, py, rects[i]) - radius)
    for i in range(circles.shape[0]):
        d = np.hypot(px - circles[i, 0], py - circles[i, 1])
        best = min(best, d - circles[i, 2] - radius)
    return float(best)


def cast_rays(px, py, theta, phis, rects, circles, max_range):
    """Ranges of a fan of rays from (px, py); ``phis`` are ego-frame angles.

    Each ray direction in the world frame is ``theta + phi``. Returns
    ``max_range`` where nothing is hit within range.
    """
    nr = phis.shape[0]
    out = np.full(nr, max_range)
    ang = theta + phis
    dirx = np.cos(ang)
    diry = np.sin(ang)
    eps = 1e-12
    for r in range(rects.shape[0]):
        xmin, ymin, xmax, ymax = rects[r]
        for i in range(nr):
            t = _ray_rect(px, py, dirx[i], diry[i], xmin, ymin, xmax, ymax, eps)
            if 0.0 < t < out[i]:
                out[i] = t
    for c in range(circles.shape[0]):
        cx, cy, rad = circles[c]
        for i in range(nr):
            t = _ray_circle(px, py, dirx[i], diry[i], cx, cy, rad, eps)
            if 0.0 < t < out[i]:
                out[i] = t
    return out


def _ray_rect(px, py, dx, dy, xmin, ymin, xmax, ymax, eps):
    tmin, tmax = -_FAR, _FAR
    if abs(dx) < eps:
        if px < xmin or px > xmax:
            return -1.0
    else:
        t1 = (xmin - px) / dx
        t2 = (xmax - px) / dx
        if t1 > t2:
            t1, t2 = t2, t1
        tmin = max(tmin, t1)
        tmax = min(tmax, t2)
    if abs(dy) < eps:
        if py < ymin or py > ymax:
            return -1.0
    else:
        t1 = (ymin - py) / dy
        t2 = (ymax - py) / dy
        if t1 > t2:
            t1, t2 = t2, t1
        tmin = max(tmin, t1)
        tmax = min(tmax, t2)
    if tmax < tmin or tmax < eps:
        return -1.0
    return tmin if tmin > eps else tmax


def _ray_circle(px, py, dx, dy, cx, cy, rad, eps):
    ox = px - cx
    oy = py - cy
    b = dx * ox + dy * oy
    c0 = ox * ox + oy * oy - rad * rad
    disc = b * b - c0
    if disc < 0.0:
        return -1.0
    root = np.sqrt(disc)
    t = -b - root
    if t < eps:
        t = -b + root
    return t if t > eps else -1.0


def social_force_step(pos, vel, goals, pref, radii, rects, circles,
                      robot_xyr, robot_active, dt, params):
    """One social-force integration step for all agents.

    ``params`` unpacks to (tau, rep_a, rep_b, rep_cut, bias, wall_a, wall_b,
    slow_radius). Agents are attracted to their goals at preferred speed
    (relaxation time ``tau``), repelled exponentially by other agents, the
    robot disc and static shapes, with a right-hand bias that breaks
    head-on deadlocks. Speed is clipped to the preferred speed.
    """
    tau, rep_a, rep_b, rep_cut, bias, wall_a, wall_b, slow_radius = params
    n = pos.shape[0]
    new_pos = np.empty_like(pos)
    new_vel = np.empty_like(vel)
    for i in range(n):
        gx = goals[i, 0] - pos[i, 0]
        gy = goals[i, 1] - pos[i, 1]
        dist = np.hypot(gx, gy)
        if dist > 1e-9:
            gx /= dist
            gy /= dist
        else:
            gx, gy = 0.0, 0.0
        des = pref[i] * min(1.0, dist / slow_radius)
        fx = (des * gx - vel[i, 0]) / tau
        fy = (des * gy - vel[i, 1]) / tau
        sp = np.hypot(vel[i, 0], vel[i, 1])
        if sp > 0.1:
            hx, hy = vel[i, 0] / sp, vel[i, 1] / sp
        else:
            hx, hy = gx, gy
        rx, ry = hy, -hx  # agent's right-hand direction
        for j in range(n):
            if j == i:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            d = np.hypot(dx, dy)
            if d < 1e-9 or d > rep_cut:
                continue
            m = rep_a * np.exp((radii[i] + radii[j] - d) / rep_b)
            fx += m * (dx / d + bias * rx)
            fy += m * (dy / d + bias * ry)
        if robot_active:
            dx = pos[i, 0] - robot_xyr[0]
            dy = pos[i, 1] - robot_xyr[1]
            d = np.hypot(dx, dy)
            if 1e-9 < d <= rep_cut:
                m = rep_a * np.exp((radii[i] + robot_xyr[2] - d) / rep_b)
                fx += m * (dx / d + bias * rx)
                fy += m * (dy / d + bias * ry)
        for r in range(rects.shape[0]):
            d = rect_signed_distance(pos[i, 0], pos[i, 1], rects[r])
            if d < rep_cut and d > 1e-9:
                qx = min(max(pos[i, 0], rects[r, 0]), rects[r, 2])
                qy = min(max(pos[i, 1], rects[r, 1]), rects[r, 3])
                nx = (pos[i, 0] - qx) / d
                ny = (pos[i, 1] - qy) / d
                m = wall_a * np.exp((radii[i] - d) / wall_b)
                fx += m * nx
                fy += m * ny
        for c in range(circles.shape[0]):
            dx = pos[i, 0] - circles[c, 0]
            dy = pos[i, 1] - circles[c, 1]
            d = np.hypot(dx, dy) - circles[c, 2]
            if 1e-9 < d < rep_cut:
                dd = d + circles[c, 2]
                m = wall_a * np.exp((radii[i] - d) / wall_b)
                fx += m * dx / dd
                fy += m * dy / dd
        vx = vel[i, 0] + fx * dt
        vy = vel[i, 1] + fy * dt
        sp = np.hypot(vx, vy)
        if sp > pref[i]:
            vx *= pref[i] / sp
            vy *= pref[i] / sp
        new_vel[i, 0] = vx
        new_vel[i, 1] = vy
        new_pos[i, 0] = pos[i, 0] + vx * dt
        new_pos[i, 1] = pos[i, 1] + vy * dt
    return new_pos, new_vel
