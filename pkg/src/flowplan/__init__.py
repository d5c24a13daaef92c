"""Flow-matching local planner over Bernstein trajectory coefficients.

Pipeline: a conditional flow-matching generator samples candidate
coefficient vectors (optionally guided by a collision-cost gradient),
a projection optimizer refines them to feasible trajectories, and a
learned scorer or a hand-tuned cost picks the one to track. A 2D crowd
simulator provides the closed-loop benchmark.
"""

__version__ = "0.1.0"

from . import errors
from .bernstein import (BasisMatrix, Trajectory, TrajectoryCoeffs, build_basis,
                        canonical_basis, eval_trajectory, fit_coeffs)
from .config import RefineConfig, RunConfig, load_config
from .costs import collision_cost, collision_cost_grad
from .flow import cfm_loss, load_flow, sample_candidates, train_flow
from .metrics import cost_select, episode_metrics, hlp
from .planner import PipelinePlanner
from .refine import RefineResult, project_refine
from .scene import Scenario, WorldView, empty_scenario, make_scenario
from .scorer import (CandidateSet, label_closest, load_scorer, score_candidates,
                     scorer_loss, select_best, train_scorer)
from .sim import EpisodeResult, run_episode
from .worlds import WorldSpec, sample_world
