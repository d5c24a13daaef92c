"""Learned trajectory scorer: joint transformer over candidate tokens and
scene context, trained by cross-entropy against the candidate closest to an
expert demonstration.

The scorer owns fresh instances of the three modality encoders (same
architecture as the flow conditioning branches, independent weights) plus a
trajectory encoder: control points through a small conv stack, mean pool,
MLP. Candidate tokens share one learned modality embedding and the joint
transformer applies no positional information across them, so permuting
candidates permutes scores exactly; the transformer's token-axis reductions
run in canonical (sorted) order, which makes that equivariance hold at the
bit level, not just to rounding.

Labels are regenerated from scratch for every training step: a frozen flow
model samples candidates, each is refined, and the argmin distance to the
expert defines the class target.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .bernstein import eval_trajectory
from .config import FlowNetConfig, RunConfig, ScorerConfig
from .encoder import encode_branches, init_encoder_branches, scenario_arrays
from .errors import CheckpointError, InvalidInputError, TrainingError
from .flow import sample_candidates
from .params import ParamStore, adam_step, load_checkpoint, save_checkpoint
from .refine import project_refine

CHECKPOINT_KIND = "scorer"


@dataclass(frozen=True)
class CandidateSet:
    """K refined candidates with their refinement costs and cached waypoints."""

    coeffs: list                 # K TrajectoryCoeffs
    refine_costs: np.ndarray     # [K]
    trajectories: np.ndarray     # [K, N, 2]

    def __post_init__(self):
        if len(self.coeffs) < 2:
            raise InvalidInputError(
                f"a CandidateSet needs K >= 2 candidates, got {len(self.coeffs)}")
        if not (len(self.coeffs) == self.refine_costs.shape[0]
                == self.trajectories.shape[0]):
            raise InvalidInputError("CandidateSet field lengths disagree")

    @property
    def k(self) -> int:
        return len(self.coeffs)


def candidate_set_from_coeffs(coeffs_list, basis, refine_costs=None) -> CandidateSet:
    trajs = np.stack([eval_trajectory(c, basis).xy for c in coeffs_list])
    costs = np.zeros(len(coeffs_list)) if refine_costs is None else np.asarray(refine_costs, float)
    return CandidateSet(list(coeffs_list), costs, trajs)


def _encoder_cfg(run_cfg: RunConfig) -> FlowNetConfig:
    return dataclasses.replace(run_cfg.flow, d_model=run_cfg.scorer.d_model)


def init_scorer(run_cfg: RunConfig, seed: int) -> ParamStore:
    cfg = run_cfg.scorer
    d = cfg.d_model
    rng = np.random.default_rng([seed, 0x5C0E])
    store = ParamStore()
    init_encoder_branches(store, rng, _encoder_cfg(run_cfg), run_cfg.scene,
                          prefix="senc")
    nn.init_conv(store, rng, "straj.c0", 2, cfg.traj_channels, 3)
    nn.init_conv(store, rng, "straj.c1", cfg.traj_channels, cfg.traj_channels, 3)
    nn.init_mlp(store, rng, "straj.head", (cfg.traj_channels, d, d))
    for name in ("static", "dyn", "goal", "traj"):
        store.add(f"smod.{name}", 0.02 * rng.standard_normal(d).astype(np.float32))
    nn.init_transformer(store, rng, "strans", d, cfg.trans_layers)
    nn.init_mlp(store, rng, "shead", (d, d, 1))
    return store


def _traj_tokens(store, cands: CandidateSet):
    ctrl = np.stack([np.stack([c.cx, c.cy]) for c in cands.coeffs]).astype(np.float32)
    h = ad.relu(nn.conv(store, "straj.c0", Tensor(ctrl), padding=1))
    h = ad.relu(nn.conv(store, "straj.c1", h, padding=1))
    pooled = ad.mean_(h, axis=2)
    return nn.mlp(store, "straj.head", pooled, 2)


def score_candidates(store, cands: CandidateSet, scenario,
                     run_cfg: RunConfig) -> ad.Tensor:
    """Raw score logits [K]; differentiable w.r.t. scorer parameters."""
    cfg = run_cfg.scorer
    pcd, pcd_len, dyn, dyn_len, goal = scenario_arrays([scenario])
    c_static, c_dyn, c_goal = encode_branches(
        store, pcd, pcd_len, dyn, dyn_len, goal, _encoder_cfg(run_cfg), prefix="senc")
    traj_tokens = ad.add(_traj_tokens(store, cands), store["smod.traj"])
    context_tokens = ad.concat([
        ad.add(c_static, store["smod.static"]),
        ad.add(c_dyn, store["smod.dyn"]),
        ad.add(c_goal, store["smod.goal"]),
    ], axis=0)
    seq = ad.concat([traj_tokens, context_tokens], axis=0)   # [K+3, d]
    out = nn.transformer(store, "strans", seq, cfg.trans_heads, cfg.trans_layers,
                         canonical=True)
    cand_out = ad.slice_(out, (slice(0, cands.k), slice(None)))
    hidden = ad.relu(nn.linear(store, "shead.0", cand_out))
    # BLAS matrix-vector products are not bitwise row-permutation stable;
    # the canonical contraction keeps score permutation equivariance exact
    scores = ad.add(ad.matmul(hidden, store["shead.1.w"], canonical=True),
                    store["shead.1.b"])
    return ad.reshape(scores, (cands.k,))


def label_closest(cands: CandidateSet, expert_xy) -> int:
    """Index of the candidate nearest the expert (summed waypoint distance).

    Ties resolve to the lowest index. The expert must be sampled on the same
    time grid as the cached candidate trajectories.
    """
    expert = np.asarray(expert_xy, dtype=float)
    if expert.shape != cands.trajectories.shape[1:]:
        raise InvalidInputError(
            f"expert grid {expert.shape} does not match candidates "
            f"{cands.trajectories.shape[1:]}")
    deltas = cands.trajectories - expert[None]
    dists = np.sqrt((deltas ** 2).sum(axis=2)).sum(axis=1)
    return int(np.argmin(dists))


def scorer_loss(scores: ad.Tensor, j: int, refine_costs, reg_weight: float,
                cost_weighted: bool = False) -> ad.Tensor:
    """Cross-entropy against class ``j`` plus the cost regularizer.

    The default regularizer is reg_weight * mean(refine_costs), a constant
    w.r.t. the scorer parameters (kept in the reported loss as specified).
    With ``cost_weighted`` the constant is replaced by the expected
    refinement cost under the predicted distribution, which actively steers
    probability mass toward cheap candidates.
    """
    k = scores.data.shape[0]
    if not 0 <= j < k:
        raise InvalidInputError(f"label {j} outside [0, {k})")
    probs = ad.softmax(ad.reshape(scores, (1, k)), axis=-1)
    ce = ad.neg(ad.log(ad.slice_(probs, (0, j))))
    costs = np.asarray(refine_costs, dtype=np.float32)
    if cost_weighted:
        reg = ad.scale(ad.sum_(ad.mul(ad.reshape(probs, (k,)), Tensor(costs))),
                       reg_weight)
    else:
        reg = Tensor(np.float32(reg_weight * costs.mean()))
    return ad.add(ad.reshape(ce, ()), reg)


def select_best(scores) -> int:
    """Argmax with lowest-index tie-break."""
    arr = scores.data if isinstance(scores, ad.Tensor) else np.asarray(scores)
    if arr.size == 0:
        raise InvalidInputError("select_best needs at least one score")
    return int(np.argmax(arr))


def build_candidate_set(flow_store, stats, flow_cfg, scenario, run_cfg,
                        rng, basis, guided=True, refine=True):
    """Sample K candidates from the frozen flow and optionally refine them."""
    lam = flow_cfg.guidance_scale if guided else 0.0
    raw = sample_candidates(flow_store, scenario, flow_cfg.num_candidates,
                            flow_cfg.euler_steps, lam, rng, flow_cfg, stats,
                            basis, include_dynamic=run_cfg.refine.include_dynamic,
                            d_safe=run_cfg.refine.d_safe,
                            dyn_margin=run_cfg.refine.dyn_inflation)
    if refine:
        results = [project_refine(c, scenario, basis, run_cfg.refine) for c in raw]
        coeffs = [r.coeffs for r in results]
        costs = np.array([r.cost for r in results])
    else:
        coeffs = raw
        costs = np.zeros(len(raw))
    return candidate_set_from_coeffs(coeffs, basis, costs)


def scorer_extra(run_cfg: RunConfig) -> dict:
    return {"kind": CHECKPOINT_KIND,
            "config": dataclasses.asdict(run_cfg.scorer),
            "num_candidates": run_cfg.flow.num_candidates}


def load_scorer(path):
    store, extra = load_checkpoint(path)
    if extra.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(
            f"{path} is not a scorer checkpoint (kind={extra.get('kind')!r})")
    return store, ScorerConfig(**extra["config"]), extra


def train_scorer(flow_store, stats, flow_cfg, records, run_cfg: RunConfig,
                 steps: int, seed: int, basis, out_path=None, resume=None):
    """Train the scorer against dynamically relabeled flow candidates.

    Records must carry expert waypoints on the canonical grid. Steps whose
    candidate sets collapse below K=2 are skipped with a warning entry in
    the log. Returns (store, log) where log rows are (step, loss, label).
    """
    usable = [r for r in records if r.expert_xy is not None]
    if not usable:
        raise TrainingError("train_scorer needs records with expert waypoints")
    if resume is not None:
        store, _ = load_checkpoint(resume)
    else:
        store = init_scorer(run_cfg, seed)
    log = []
    extra = scorer_extra(run_cfg)
    batch = max(1, run_cfg.train.scorer_batch)
    while store.step < steps:
        step = store.step
        rng = np.random.default_rng([seed, 0x5C02E, step])
        losses = []
        last_label = -1
        for _ in range(batch):
            record = usable[int(rng.integers(0, len(usable)))]
            try:
                cands = build_candidate_set(flow_store, stats, flow_cfg,
                                            record.scenario, run_cfg, rng, basis)
            except (InvalidInputError, ArithmeticError):
                continue
            last_label = label_closest(cands, record.expert_xy)
            scores = score_candidates(store, cands, record.scenario, run_cfg)
            losses.append(scorer_loss(scores, last_label, cands.refine_costs,
                                      run_cfg.scorer.reg_weight,
                                      run_cfg.scorer.cost_weighted_ce))
        if not losses:
            log.append((step, float("nan"), -1))
            store.step += 1
            continue
        loss = ad.scale(losses[0], 1.0 / len(losses))
        for extra_loss in losses[1:]:
            loss = ad.add(loss, ad.scale(extra_loss, 1.0 / len(losses)))
        loss_value = float(loss.data)
        if not np.isfinite(loss_value):
            if out_path is not None:
                save_checkpoint(out_path, store, extra=extra)
            raise TrainingError(f"non-finite scorer loss at step {step}")
        loss.backward()
        # cosine decay to 5% keeps the endpoint from being a random snapshot
        # of the noisy-objective oscillation
        factor = max(0.05, 0.5 * (1.0 + math.cos(math.pi * step / max(steps, 1))))
        adam_step(store, lr=run_cfg.train.scorer_lr * factor,
                  beta1=run_cfg.train.adam_beta1,
                  beta2=run_cfg.train.adam_beta2, eps=run_cfg.train.adam_eps)
        log.append((store.step, loss_value, last_label))
        if out_path is not None and store.step % run_cfg.train.checkpoint_every == 0:
            save_checkpoint(out_path, store, extra=extra)
    if out_path is not None:
        save_checkpoint(out_path, store, extra=extra)
    return store, log
