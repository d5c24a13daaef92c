"""Pipeline assembly: scenario in, tracked trajectory out.

A PipelinePlanner wires the frozen flow sampler, optional guidance,
optional projection refinement, and a selector (learned scorer or the
hand-tuned cost) into the planner callback run_episode expects. Per-call
RNG is derived from (seed, call counter), so episodes are reproducible.

Variants mirror the ablation axes:
  vanilla        unguided sampling, cost selection, no refinement
  guided         guided sampling, cost selection, no refinement
  refine_cost    guided sampling + refinement, cost selection
  refine_scorer  guided sampling + refinement, learned scorer selection
"""

from dataclasses import dataclass

import numpy as np

from .bernstein import BasisMatrix, eval_trajectory
from .config import RunConfig
from .errors import ConfigError
from .metrics import cost_select
from .refine import project_refine
from .flow import sample_candidates
from .scorer import (candidate_set_from_coeffs, score_candidates, select_best)

VARIANTS = ("vanilla", "guided", "refine_cost", "refine_scorer")


@dataclass
class PlannerOutput:
    cand_idx: int
    candidate_xy: np.ndarray   # [K, N, 2] ego-frame candidate waypoints
    selected_xy: np.ndarray    # [N, 2]


class PipelinePlanner:
    """Planner callback; remembers the last candidate set for rendering."""

    def __init__(self, variant: str, flow_store, stats, flow_cfg,
                 run_cfg: RunConfig, basis: BasisMatrix,
                 scorer_store=None, seed: int = 0):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown planner variant {variant!r}; pick from {VARIANTS}")
        if variant == "refine_scorer" and scorer_store is None:
            raise ConfigError("refine_scorer variant needs a scorer checkpoint")
        self.variant = variant
        self.flow_store = flow_store
        self.stats = stats
        self.flow_cfg = flow_cfg
        self.run_cfg = run_cfg
        self.basis = basis
        self.scorer_store = scorer_store
        self.seed = seed
        self.calls = 0
        self.last: PlannerOutput | None = None

    def __call__(self, scenario):
        rng = np.random.default_rng([self.seed, 0x9A7, self.calls])
        self.calls += 1
        guided = self.variant != "vanilla"
        lam = self.flow_cfg.guidance_scale if guided else 0.0
        raw = sample_candidates(
            self.flow_store, scenario, self.flow_cfg.num_candidates,
            self.flow_cfg.euler_steps, lam, rng, self.flow_cfg, self.stats,
            self.basis, include_dynamic=self.run_cfg.refine.include_dynamic,
            d_safe=self.run_cfg.refine.d_safe,
            dyn_margin=self.run_cfg.refine.dyn_inflation)

        if self.variant in ("refine_cost", "refine_scorer"):
            results = [project_refine(c, scenario, self.basis, self.run_cfg.refine)
                       for c in raw]
            coeffs = [r.coeffs for r in results]
            costs = np.array([r.cost for r in results])
        else:
            coeffs = raw
            costs = np.zeros(len(raw))
        cands = candidate_set_from_coeffs(coeffs, self.basis, costs)

        if self.variant == "refine_scorer":
            scores = score_candidates(self.scorer_store, cands, scenario, self.run_cfg)
            idx = select_best(scores)
        else:
            idx = cost_select(cands, scenario, self.basis, self.run_cfg.eval,
                              d_safe=self.run_cfg.refine.d_safe,
                              include_dynamic=self.run_cfg.refine.include_dynamic,
                              dyn_margin=self.run_cfg.refine.dyn_inflation)
        traj = eval_trajectory(cands.coeffs[idx], self.basis)
        self.last = PlannerOutput(cand_idx=idx, candidate_xy=cands.trajectories,
                                  selected_xy=traj.xy)
        return traj, idx
