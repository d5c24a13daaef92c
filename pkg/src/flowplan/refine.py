"""Projection refinement: pull a coefficient vector to the nearest
collision-free, kinodynamically bounded trajectory.

Penalty-based projected gradient descent with backtracking. The internal
objective uses a one-sided Huber hinge (exactly zero in the feasible
interior, quadratic at the boundary with curvature ``sharpness``, linear
for deep violations) against slightly tightened margins, so the soft
equilibrium lands strictly inside the true limits. The feasibility flag and
the reported cost come from an exact post-hoc audit on the dense waypoint
grid, independent of the smoothing. The first control point stays pinned to
the robot's current position.
"""

from dataclasses import dataclass

import numpy as np

from .bernstein import BasisMatrix, TrajectoryCoeffs
from .config import RefineConfig
from .costs import obstacle_arrays
from .errors import NumericalError
from .scene import Scenario
from ._kernels import (hinge_collision_cost, min_point_clearance,
                       refine_objective)

__all__ = ["RefineConfig", "RefineResult", "project_refine"]

AUDIT_TOL = 1e-6
# internal tightening: optimize against these, audit against the real limits
_CLEARANCE_MARGIN = 0.06      # meters added to d_safe
_LIMIT_MARGIN = 0.05          # fraction shaved off v_max / a_max
_NUDGE = 0.02                 # lateral ridge-escape amplitude, meters


@dataclass(frozen=True)
class RefineResult:
    coeffs: TrajectoryCoeffs
    cost: float
    feasible: bool
    iters_used: int
    clearance: float
    max_speed: float
    max_accel: float
    trace: tuple = ()   # internal objective at each accepted iterate


class _Objective:
    """Thin wrapper binding the fused objective kernel to one refine call."""

    def __init__(self, xi_in, basis, static, dyn, cfg: RefineConfig):
        self.xi_in = xi_in
        self.basis = basis
        self.static = static
        self.dyn = dyn
        self.cfg = cfg
        self.d_opt = cfg.d_safe + _CLEARANCE_MARGIN
        self.v2_opt = (cfg.v_max * (1.0 - _LIMIT_MARGIN)) ** 2
        self.a2_opt = (cfg.a_max * (1.0 - _LIMIT_MARGIN)) ** 2

    def _call(self, xi):
        cfg = self.cfg
        return refine_objective(xi, self.xi_in, self.basis.P, self.basis.dP,
                                self.basis.ddP, self.basis.times, self.static,
                                self.dyn, self.d_opt, cfg.dyn_inflation,
                                self.v2_opt, self.a2_opt, cfg.sharpness,
                                cfg.proximity_weight, cfg.collision_weight,
                                cfg.limit_weight)

    def value(self, xi):
        return self._call(xi)[0]

    def value_and_grad(self, xi):
        return self._call(xi)


def _audit(xi, basis, static, dyn, cfg: RefineConfig):
    half = xi.shape[0] // 2
    wx = basis.P @ xi[:half]
    wy = basis.P @ xi[half:]
    no_dyn = np.zeros((0, 4))
    c_static = min_point_clearance(wx, wy, basis.times, static, no_dyn)
    c_dyn = min_point_clearance(wx, wy, basis.times, np.zeros((0, 2)), dyn)
    clearance = min(c_static, c_dyn)
    vx = basis.dP @ xi[:half]
    vy = basis.dP @ xi[half:]
    ax = basis.ddP @ xi[:half]
    ay = basis.ddP @ xi[half:]
    max_speed = float(np.sqrt((vx * vx + vy * vy).max()))
    max_accel = float(np.sqrt((ax * ax + ay * ay).max()))
    feasible = (c_static >= cfg.d_safe - AUDIT_TOL
                and c_dyn >= cfg.d_safe + cfg.dyn_inflation - AUDIT_TOL
                and max_speed <= cfg.v_max + AUDIT_TOL
                and max_accel <= cfg.a_max + AUDIT_TOL)
    col = hinge_collision_cost(wx, wy, basis.times, static, dyn, cfg.d_safe,
                               cfg.dyn_inflation)
    v_pen = np.maximum(vx * vx + vy * vy - cfg.v_max ** 2, 0.0).mean()
    a_pen = np.maximum(ax * ax + ay * ay - cfg.a_max ** 2, 0.0).mean()
    return clearance, max_speed, max_accel, feasible, col, float(v_pen + a_pen)


def _ridge_escape(xi, basis, static, dyn, d_opt):
    """Break the lateral symmetry when the input collides head-on.

    The hinge gradient of an obstacle sitting exactly on the path is purely
    longitudinal, a saddle ridge gradient descent cannot leave. Nudge the
    interior control points sideways, away from the active obstacles' mean
    lateral offset (to the left on an exact tie, which only arises for
    perfectly symmetric scenes).
    """
    half = xi.shape[0] // 2
    wx = basis.P @ xi[:half]
    wy = basis.P @ xi[half:]
    chord = np.array([wx[-1] - wx[0], wy[-1] - wy[0]])
    norm = np.hypot(chord[0], chord[1])
    if norm < 1e-9:
        chord = np.array([1.0, 0.0])
        norm = 1.0
    left = np.array([-chord[1], chord[0]]) / norm

    side = 0.0
    pts = [static] if static.shape[0] else []
    if dyn.shape[0]:
        pts.append(dyn[:, :2])
    for block in pts:
        dx = wx[:, None] - block[None, :, 0]
        dy = wy[:, None] - block[None, :, 1]
        d2 = dx * dx + dy * dy
        active = d2.min(axis=1) < d_opt * d_opt
        if active.any():
            nearest = d2.argmin(axis=1)
            ox = block[nearest[active], 0] - wx[active]
            oy = block[nearest[active], 1] - wy[active]
            side += float((ox * left[0] + oy * left[1]).sum())
    sign = 1.0 if side == 0.0 else -float(np.sign(side))

    n_ctrl = half
    bump = np.sin(np.pi * np.arange(n_ctrl) / (n_ctrl - 1))
    out = xi.copy()
    out[:half] += sign * _NUDGE * bump * left[0]
    out[half:] += sign * _NUDGE * bump * left[1]
    return out


def project_refine(coeffs_in: TrajectoryCoeffs, scenario: Scenario,
                   basis: BasisMatrix, cfg: RefineConfig,
                   start_xy=(0.0, 0.0)) -> RefineResult:
    """Refine ``coeffs_in`` toward feasibility while staying close to it.

    ``start_xy`` pins the first control point (the robot's current position
    in the trajectory frame; the ego-frame origin in the pipeline).
    """
    static, dyn = obstacle_arrays(scenario, cfg.include_dynamic)
    xi = coeffs_in.flat().astype(float).copy()
    half = xi.shape[0] // 2
    xi[0] = start_xy[0]
    xi[half] = start_xy[1]
    pin = [0, half]

    objective = _Objective(xi.copy(), basis, static, dyn, cfg)
    wx = basis.P @ xi[:half]
    wy = basis.P @ xi[half:]
    if (static.shape[0] or dyn.shape[0]) and min_point_clearance(
            wx, wy, basis.times, static, dyn) < objective.d_opt + cfg.dyn_inflation:
        xi = _ridge_escape(xi, basis, static, dyn, objective.d_opt)
        xi[0] = start_xy[0]
        xi[half] = start_xy[1]

    value, grad = objective.value_and_grad(xi)
    trace = [value]
    step = cfg.step_size
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        grad[pin] = 0.0
        gnorm2 = float(np.dot(grad, grad))
        if gnorm2 < 1e-18:
            break
        accepted = False
        while step > 1e-7:
            candidate = xi - step * grad
            cand_value = objective.value(candidate)
            if not np.isfinite(cand_value):
                raise NumericalError("projection refinement produced a non-finite objective")
            if cand_value <= value - 1e-4 * step * gnorm2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        moved = float(np.abs(candidate - xi).max())
        xi = candidate
        value, grad = objective.value_and_grad(xi)
        trace.append(value)
        step = min(step * 1.5, 10.0 * cfg.step_size)
        if moved < cfg.convergence_tol:
            break
    if not np.isfinite(xi).all():
        raise NumericalError("projection refinement diverged to non-finite coefficients")

    clearance, max_speed, max_accel, feasible, col_exact, lim_exact = _audit(
        xi, basis, static, dyn, cfg)
    diff = xi - objective.xi_in
    cost = (cfg.proximity_weight * float(np.dot(diff, diff))
            + cfg.collision_weight * col_exact
            + cfg.limit_weight * lim_exact)
    return RefineResult(coeffs=TrajectoryCoeffs(xi[:half], xi[half:]),
                        cost=cost, feasible=feasible, iters_used=iters,
                        clearance=clearance, max_speed=max_speed,
                        max_accel=max_accel, trace=tuple(trace))
