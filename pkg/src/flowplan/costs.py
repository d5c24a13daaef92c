"""Collision cost over trajectory coefficients and its analytic gradient.

The cost is a mean hinge on squared clearance: each waypoint contributes
max(0, d_safe^2 - min over obstacle points of squared distance). Obstacle
points are the masked static point cloud plus, by default, the dynamic
obstacles propagated at constant velocity to the waypoint's timestamp.
The gradient chains through the Bernstein map analytically (P^T on the
per-waypoint gradient), so no network autodiff is involved.
"""

import numpy as np

from .bernstein import BasisMatrix, TrajectoryCoeffs
from .scene import Scenario
from ._kernels import (hinge_collision_cost, hinge_collision_cost_grad,
                       min_point_clearance)

_EMPTY_DYN = np.zeros((0, 4))


def obstacle_arrays(scenario: Scenario, include_dynamic: bool = True):
    """Masked (static_points, dynamic_rows) for the cost kernels."""
    static = np.ascontiguousarray(scenario.static_points(), dtype=float)
    if include_dynamic and scenario.dyn_len:
        dyn = np.ascontiguousarray(scenario.dynamic_rows(), dtype=float)
    else:
        dyn = _EMPTY_DYN
    return static, dyn


def _waypoints(flat: np.ndarray, basis: BasisMatrix):
    half = flat.shape[0] // 2
    return basis.P @ flat[:half], basis.P @ flat[half:]


def collision_cost(coeffs, basis: BasisMatrix, pointcloud, dyn_obstacles,
                   d_safe: float, dyn_margin: float = 0.0) -> float:
    """Mean hinge collision cost; 0 when there are no obstacle points.

    ``dyn_margin`` inflates the margin for dynamic rows (tracker centroids)
    by the agent radius; the default keeps the plain single-margin hinge.
    """
    flat = coeffs.flat() if isinstance(coeffs, TrajectoryCoeffs) else np.asarray(coeffs, float)
    wx, wy = _waypoints(flat, basis)
    return hinge_collision_cost(wx, wy, basis.times,
                                np.ascontiguousarray(pointcloud, dtype=float),
                                np.ascontiguousarray(dyn_obstacles, dtype=float),
                                d_safe, dyn_margin)


def collision_cost_grad(coeffs, basis: BasisMatrix, pointcloud, dyn_obstacles,
                        d_safe: float, dyn_margin: float = 0.0):
    """(cost, gradient) with the gradient in flat [cx; cy] coefficient order.

    At hinge boundaries the subgradient is 0 (inactive side); argmin ties
    resolve to the lowest obstacle index, static points first.
    """
    flat = coeffs.flat() if isinstance(coeffs, TrajectoryCoeffs) else np.asarray(coeffs, float)
    wx, wy = _waypoints(flat, basis)
    cost, gwx, gwy = hinge_collision_cost_grad(
        wx, wy, basis.times,
        np.ascontiguousarray(pointcloud, dtype=float),
        np.ascontiguousarray(dyn_obstacles, dtype=float), d_safe, dyn_margin)
    grad = np.concatenate([basis.P.T @ gwx, basis.P.T @ gwy])
    return cost, grad


def scenario_collision_cost(coeffs, basis: BasisMatrix, scenario: Scenario,
                            d_safe: float, include_dynamic: bool = True,
                            dyn_margin: float = 0.0) -> float:
    static, dyn = obstacle_arrays(scenario, include_dynamic)
    return collision_cost(coeffs, basis, static, dyn, d_safe, dyn_margin)


def scenario_clearance(coeffs, basis: BasisMatrix, scenario: Scenario,
                       include_dynamic: bool = True) -> float:
    """Exact min waypoint-to-obstacle-point distance (inf when no obstacles)."""
    flat = coeffs.flat() if isinstance(coeffs, TrajectoryCoeffs) else np.asarray(coeffs, float)
    wx, wy = _waypoints(flat, basis)
    static, dyn = obstacle_arrays(scenario, include_dynamic)
    return min_point_clearance(wx, wy, basis.times, static, dyn)


def scenario_clearances(coeffs, basis: BasisMatrix, scenario: Scenario):
    """(static clearance, dynamic clearance), each inf when that class is empty."""
    flat = coeffs.flat() if isinstance(coeffs, TrajectoryCoeffs) else np.asarray(coeffs, float)
    wx, wy = _waypoints(flat, basis)
    static, dyn = obstacle_arrays(scenario, include_dynamic=True)
    c_static = min_point_clearance(wx, wy, basis.times, static, _EMPTY_DYN)
    c_dyn = min_point_clearance(wx, wy, basis.times, np.zeros((0, 2)), dyn)
    return c_static, c_dyn
