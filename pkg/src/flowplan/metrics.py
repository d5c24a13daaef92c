"""Trajectory and episode metrics, plus the hand-tuned cost selector baseline."""

from dataclasses import dataclass

import numpy as np

from .bernstein import BasisMatrix, eval_trajectory
from .config import EvalConfig
from .costs import obstacle_arrays, collision_cost
from .errors import InvalidInputError
from .scene import Scenario
from .sim import EpisodeResult


def hlp(candidate_xy, expert_xy) -> float:
    """Mean pointwise Euclidean deviation between two aligned paths."""
    cand = np.asarray(candidate_xy, dtype=float)
    exp = np.asarray(expert_xy, dtype=float)
    if cand.shape != exp.shape or cand.ndim != 2 or cand.shape[0] < 1:
        raise InvalidInputError(
            f"hlp needs two equal [T, 2] paths, got {cand.shape} and {exp.shape}")
    return float(np.sqrt(((cand - exp) ** 2).sum(axis=1)).mean())


def cost_select(cands, scenario: Scenario, basis: BasisMatrix,
                cfg: EvalConfig, d_safe: float = 0.5,
                include_dynamic: bool = True, dyn_margin: float = 0.0) -> int:
    """Hand-tuned selector: collision + mean squared acceleration - progress.

    Progress is the terminal point's projection on the goal heading, so
    candidates that actually go somewhere are preferred. Lowest index wins
    ties.
    """
    static, dyn = obstacle_arrays(scenario, include_dynamic)
    heading = scenario.goal_heading
    costs = np.empty(cands.k)
    for i, coeffs in enumerate(cands.coeffs):
        col = collision_cost(coeffs, basis, static, dyn, d_safe, dyn_margin)
        traj = eval_trajectory(coeffs, basis, with_derivatives=True)
        smooth = float((traj.acc ** 2).sum(axis=1).mean())
        progress = float(traj.xy[-1] @ heading)
        costs[i] = (cfg.cost_w_collision * col
                    + cfg.cost_w_smooth * smooth
                    - cfg.cost_w_progress * progress)
    return int(np.argmin(costs))


@dataclass(frozen=True)
class EpisodeMetrics:
    length: float
    time: float
    velocity: float | None   # None when the episode has zero duration


def episode_metrics(result: EpisodeResult) -> EpisodeMetrics:
    if result.duration > 0:
        velocity = result.path_length / result.duration
    else:
        velocity = None
    return EpisodeMetrics(result.path_length, result.duration, velocity)
