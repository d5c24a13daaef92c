"""Synthetic expert: multi-seed refined optima standing in for demonstrations.

Seeds cover the obvious homotopies of a local maneuver (straight to the
goal heading, left/right lateral bumps of two amplitudes, a slow-down);
each is refined by the projection optimizer and the cheapest feasible
result wins. The multi-modal variant returns up to one feasible result per
homotopy class so a generative model trained on the output sees genuinely
distinct maneuvers for the same scene.
"""

from dataclasses import dataclass

import numpy as np

from .bernstein import BasisMatrix, Trajectory, TrajectoryCoeffs, eval_trajectory, fit_coeffs
from .config import RefineConfig
from .errors import OracleError
from .refine import RefineResult, project_refine
from .scene import Scenario

SEED_CLASSES = ("straight", "left", "right", "slow")


@dataclass(frozen=True)
class OracleResult:
    coeffs: TrajectoryCoeffs
    trajectory: Trajectory
    feasible: bool
    cost: float
    label: str


def _seed_waypoints(scenario: Scenario, basis: BasisMatrix, cruise_speed: float):
    """(label, waypoints) seeds in the ego frame, all starting at the origin."""
    heading = scenario.goal_heading
    perp = np.array([-heading[1], heading[0]])
    t = basis.times
    span = t[-1] - t[0]
    along = np.outer(cruise_speed * t, heading)
    bump = np.sin(np.pi * (t - t[0]) / span)[:, None] * perp[None, :]
    seeds = [("straight", along)]
    for amp in (1.2, 2.2):
        seeds.append(("left", along + amp * bump))
        seeds.append(("right", along - amp * bump))
    seeds.append(("slow", 0.45 * along))
    return seeds


def _refine_seeds(scenario, basis, cfg: RefineConfig, cruise_speed):
    results = []
    failures = 0
    for label, waypoints in _seed_waypoints(scenario, basis, cruise_speed):
        coeffs, _ = fit_coeffs(waypoints, basis)
        try:
            refined = project_refine(coeffs, scenario, basis, cfg)
        except ArithmeticError:
            failures += 1
            continue
        results.append((label, refined))
    if not results:
        raise OracleError(f"all {failures} oracle seeds diverged during refinement")
    return results


def _to_result(label: str, refined: RefineResult, basis) -> OracleResult:
    traj = eval_trajectory(refined.coeffs, basis, with_derivatives=True)
    return OracleResult(coeffs=refined.coeffs, trajectory=traj,
                        feasible=refined.feasible, cost=refined.cost, label=label)


def expert_oracle(scenario: Scenario, basis: BasisMatrix, cfg: RefineConfig,
                  cruise_speed: float = 0.8) -> OracleResult:
    """Best refined seed: cheapest feasible, else cheapest overall (flagged)."""
    results = _refine_seeds(scenario, basis, cfg, cruise_speed)
    feasible = [(label, r) for label, r in results if r.feasible]
    pool = feasible if feasible else results
    label, best = min(pool, key=lambda item: item[1].cost)
    return _to_result(label, best, basis)


def expert_oracle_multi(scenario: Scenario, basis: BasisMatrix, cfg: RefineConfig,
                        cruise_speed: float = 0.8, max_modes: int = 3) -> list:
    """Up to ``max_modes`` distinct feasible homotopy results for one scene.

    At most one result per seed class, cheapest-first; empty when nothing
    refines to feasibility.
    """
    results = _refine_seeds(scenario, basis, cfg, cruise_speed)
    best_per_class: dict[str, RefineResult] = {}
    for label, refined in results:
        if not refined.feasible:
            continue
        if label not in best_per_class or refined.cost < best_per_class[label].cost:
            best_per_class[label] = refined
    ranked = sorted(best_per_class.items(), key=lambda item: item[1].cost)
    return [_to_result(label, refined, basis) for label, refined in ranked[:max_modes]]
