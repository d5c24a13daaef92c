"""Ego-frame scenario construction: ray-cast point cloud, dynamic obstacle
rows, goal heading. Everything downstream of the simulator consumes these."""

from dataclasses import dataclass

import numpy as np

from .config import SceneConfig
from ._kernels import cast_rays


@dataclass(frozen=True)
class Scenario:
    """Ego-frame sensor snapshot.

    Rows beyond ``pointcloud_len`` / ``dyn_len`` hold the sentinel padding
    value and must be masked by every consumer.
    """

    pointcloud: np.ndarray    # [n_pts, 2], ego frame, padded
    pointcloud_len: int
    dyn_obstacles: np.ndarray  # [n_obs, 4] = (x, y, vx, vy), ego frame, padded
    dyn_len: int
    goal_heading: np.ndarray   # unit [2]

    def static_points(self) -> np.ndarray:
        return self.pointcloud[:self.pointcloud_len]

    def dynamic_rows(self) -> np.ndarray:
        return self.dyn_obstacles[:self.dyn_len]


@dataclass(frozen=True)
class WorldView:
    """World-frame inputs the sensor model needs at one instant."""

    rects: np.ndarray      # [R, 4]
    circles: np.ndarray    # [C, 3]
    agents: np.ndarray     # [N, >=4] rows (x, y, vx, vy, ...)
    robot_goal: np.ndarray  # [2]


def _ego_rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def make_scenario(world: WorldView, robot_pose, cfg: SceneConfig) -> Scenario:
    """Build the ego-frame Scenario seen from ``robot_pose`` = (x, y, theta).

    A 360-degree fan of ``cfg.n_rays`` rays is cast against static shapes
    only; hits within the sensing radius become point-cloud rows (nearest
    first, truncated at ``cfg.n_pts``). Agents within the sensing radius
    become dynamic obstacle rows sorted by range, truncated at ``cfg.n_obs``.
    """
    px, py, theta = float(robot_pose[0]), float(robot_pose[1]), float(robot_pose[2])
    rot = _ego_rotation(theta)

    phis = 2.0 * np.pi * np.arange(cfg.n_rays) / cfg.n_rays
    ranges = cast_rays(px, py, theta, phis, world.rects, world.circles,
                       cfg.sensing_radius)
    hit = ranges < cfg.sensing_radius
    hit_r = ranges[hit]
    hit_phi = phis[hit]
    order = np.argsort(hit_r, kind="stable")[:cfg.n_pts]
    pts = np.stack([hit_r[order] * np.cos(hit_phi[order]),
                    hit_r[order] * np.sin(hit_phi[order])], axis=1)

    pcd = np.full((cfg.n_pts, 2), cfg.sentinel)
    pcd[:pts.shape[0]] = pts

    dyn = np.zeros((cfg.n_obs, 4))
    dyn[:, :2] = cfg.sentinel
    dyn_count = 0
    if world.agents.shape[0]:
        rel = world.agents[:, :2] - np.array([px, py])
        rng_to = np.hypot(rel[:, 0], rel[:, 1])
        near = rng_to <= cfg.sensing_radius
        idx = np.argsort(rng_to[near], kind="stable")[:cfg.n_obs]
        rel_ego = rel[near][idx] @ rot.T
        vel_ego = world.agents[near][idx, 2:4] @ rot.T
        dyn_count = rel_ego.shape[0]
        dyn[:dyn_count, :2] = rel_ego
        dyn[:dyn_count, 2:] = vel_ego

    to_goal = rot @ (np.asarray(world.robot_goal, dtype=float) - np.array([px, py]))
    norm = np.hypot(to_goal[0], to_goal[1])
    heading = to_goal / norm if norm > 1e-9 else np.array([1.0, 0.0])

    return Scenario(pointcloud=pcd, pointcloud_len=int(pts.shape[0]),
                    dyn_obstacles=dyn, dyn_len=int(dyn_count),
                    goal_heading=heading)


def empty_scenario(cfg: SceneConfig, goal_heading=(1.0, 0.0)) -> Scenario:
    """A scenario with no obstacles at all (testing and toy problems)."""
    pcd = np.full((cfg.n_pts, 2), cfg.sentinel)
    dyn = np.zeros((cfg.n_obs, 4))
    dyn[:, :2] = cfg.sentinel
    g = np.asarray(goal_heading, dtype=float)
    g = g / np.hypot(g[0], g[1])
    return Scenario(pcd, 0, dyn, 0, g)
