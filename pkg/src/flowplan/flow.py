"""Conditional flow matching over Bernstein coefficients: training objective,
the training loop, and (guided) Euler sampling of candidate sets.

Training regresses the network onto the constant displacement between a
Gaussian draw and a data sample along the linear interpolation path, so no
ODE integration happens during training. Sampling integrates the learned
field with fixed-step forward Euler from tau=0 to 1; with a positive
guidance scale the collision-cost gradient (exact hinge, chained through
the Bernstein map and the de-standardization) is subtracted from the field
at every step.

Coefficients are standardized per dimension with dataset statistics that
live in the checkpoint header; samples are de-standardized on the way out.
"""

import dataclasses

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bernstein import BasisMatrix, TrajectoryCoeffs
from .config import FlowNetConfig, RunConfig
from .costs import collision_cost_grad, obstacle_arrays
from .encoder import encode_scenarios, init_encoder
from .errors import CheckpointError, NumericalError, TrainingError
from .params import ParamStore, adam_step, load_checkpoint, save_checkpoint
from .unet import init_unet, vector_field

CHECKPOINT_KIND = "flow"


@dataclasses.dataclass(frozen=True)
class CoeffStats:
    mean: np.ndarray   # [2(n+1)]
    std: np.ndarray    # [2(n+1)], floored away from zero

    @classmethod
    def fit(cls, flats: np.ndarray) -> "CoeffStats":
        mean = flats.mean(axis=0)
        std = np.maximum(flats.std(axis=0), 1e-6)
        return cls(mean.astype(np.float32), std.astype(np.float32))

    def standardize(self, flats):
        return ((flats - self.mean) / self.std).astype(np.float32)

    def destandardize(self, flats):
        return flats * self.std + self.mean


def init_flow(cfg: RunConfig, seed: int) -> ParamStore:
    rng = np.random.default_rng([seed, 0xF10])
    store = ParamStore()
    init_encoder(store, rng, cfg.flow, cfg.scene)
    init_unet(store, rng, cfg.flow, cfg.bernstein.order + 1)
    return store


def cfm_loss(store, xi1_std: np.ndarray, scenarios, cfg: FlowNetConfig, rng,
             field_fn=None):
    """Flow-matching regression loss for one minibatch.

    ``xi1_std`` holds standardized target coefficient rows. Per sample the
    loss is the squared norm of (predicted field - (xi1 - xi0)) at a
    uniformly drawn tau on the linear path; the batch mean is returned.
    ``field_fn(xi_tau, tau, context)`` overrides the network (testing).
    """
    batch = xi1_std.shape[0]
    if batch == 0:
        raise TrainingError("cfm_loss needs a nonempty batch")
    tau = rng.random(batch).astype(np.float32)
    xi0 = rng.standard_normal(xi1_std.shape).astype(np.float32)
    xi_tau = (1.0 - tau)[:, None] * xi0 + tau[:, None] * xi1_std
    target = xi1_std - xi0
    context = encode_scenarios(store, scenarios, cfg)
    if field_fn is None:
        field = vector_field(store, xi_tau, tau, context, cfg)
    else:
        field = field_fn(xi_tau, tau, context)
    diff = ad.sub(field, Tensor(target))
    return ad.mean_(ad.sum_(ad.mul(diff, diff), axis=1))


def flow_extra(cfg: RunConfig, stats: CoeffStats) -> dict:
    return {
        "kind": CHECKPOINT_KIND,
        "order": cfg.bernstein.order,
        "horizon": cfg.bernstein.horizon,
        "n_waypoints": cfg.bernstein.n_waypoints,
        "coeff_mean": [float(v) for v in stats.mean],
        "coeff_std": [float(v) for v in stats.std],
        "config": dataclasses.asdict(cfg.flow),
    }


def stats_from_extra(extra: dict) -> CoeffStats:
    return CoeffStats(np.array(extra["coeff_mean"], dtype=np.float32),
                      np.array(extra["coeff_std"], dtype=np.float32))


def train_flow(records, cfg: RunConfig, steps: int, seed: int,
               out_path=None, resume=None, log=None):
    """Minibatch Adam on the CFM loss; deterministic in (records, cfg, seed).

    ``resume`` restores a checkpoint (parameters, moments, step counter) and
    continues to ``steps`` total; per-step RNG is keyed by the absolute step
    index, so interrupted and uninterrupted runs produce identical
    checkpoints. Returns (store, stats, log).
    """
    if not records:
        raise TrainingError("train_flow needs a nonempty dataset")
    flats = np.stack([r.target_coeffs.flat() for r in records])
    stats = CoeffStats.fit(flats)
    xi1_all = stats.standardize(flats)
    scenarios = [r.scenario for r in records]
    log = log if log is not None else []

    if resume is not None:
        store, extra = load_checkpoint(resume)
        stats = stats_from_extra(extra)
        xi1_all = stats.standardize(flats)
    else:
        store = init_flow(cfg, seed)

    batch_size = min(cfg.train.batch_size, len(records))
    extra = flow_extra(cfg, stats)
    while store.step < steps:
        step = store.step  # absolute index keys the RNG for resumability
        rng = np.random.default_rng([seed, 0xBA7C4, step])
        idx = rng.integers(0, len(records), size=batch_size)
        loss = cfm_loss(store, xi1_all[idx], [scenarios[i] for i in idx],
                        cfg.flow, rng)
        loss_value = float(loss.data)
        if not np.isfinite(loss_value):
            # parameters are still pre-step here, i.e. the last good state
            if out_path is not None:
                save_checkpoint(out_path, store, extra=extra)
            raise TrainingError(
                f"non-finite loss at step {step}; last good checkpoint "
                f"{'saved' if out_path else 'not written'}")
        loss.backward()
        adam_step(store, lr=cfg.train.flow_lr, beta1=cfg.train.adam_beta1,
                  beta2=cfg.train.adam_beta2, eps=cfg.train.adam_eps)
        log.append((store.step, loss_value))
        if out_path is not None and store.step % cfg.train.checkpoint_every == 0:
            save_checkpoint(out_path, store, extra=extra)
    if out_path is not None:
        save_checkpoint(out_path, store, extra=extra)
    return store, stats, log


def load_flow(path):
    """(store, stats, flow config, full extra) from a flow checkpoint."""
    store, extra = load_checkpoint(path)
    if extra.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(
            f"{path} is not a flow checkpoint (kind={extra.get('kind')!r})")
    flow_cfg = FlowNetConfig(**{**extra["config"],
                                "unet_channels": tuple(extra["config"]["unet_channels"])})
    return store, stats_from_extra(extra), flow_cfg, extra


def sample_candidates(store, scenario, K: int, steps: int, lam: float, rng,
                      cfg: FlowNetConfig, stats: CoeffStats, basis: BasisMatrix,
                      include_dynamic: bool = True, d_safe: float = 0.5,
                      dyn_margin: float = 0.0, field_fn=None):
    """K candidate coefficient vectors via fixed-step Euler over tau in [0,1].

    With ``lam > 0`` the exact-hinge collision gradient is evaluated on the
    de-standardized coefficients, mapped back through the standardization
    scale, and subtracted from the field at every step. Non-finite
    candidates are dropped; an error is raised only if all K are lost.
    """
    if steps < 1 or lam < 0:
        raise NumericalError(f"sampling needs steps >= 1 and lam >= 0, got {steps}, {lam}")
    xi = rng.standard_normal((K, stats.mean.shape[0])).astype(np.float32)
    context = encode_scenarios(store, [scenario], cfg)
    ctx = Tensor(np.repeat(context.data, K, axis=0))
    static, dyn = obstacle_arrays(scenario, include_dynamic)
    dt = 1.0 / steps
    for s in range(steps):
        tau = np.full(K, s * dt, dtype=np.float32)
        if field_fn is None:
            field = vector_field(store, xi, tau, ctx, cfg).data
        else:
            field = np.asarray(field_fn(xi, tau, ctx), dtype=np.float32)
        if lam > 0.0:
            grad = np.zeros_like(xi)
            phys = stats.destandardize(xi.astype(float))
            for k in range(K):
                _, g = collision_cost_grad(phys[k], basis, static, dyn, d_safe,
                                           dyn_margin)
                grad[k] = (g * stats.std).astype(np.float32)
            field = field - np.float32(lam) * grad
        xi = xi + np.float32(dt) * field
    keep = np.isfinite(xi).all(axis=1)
    if not keep.any():
        raise NumericalError("all sampled candidates became non-finite during integration")
    phys = stats.destandardize(xi[keep].astype(float))
    return [TrajectoryCoeffs.from_flat(row) for row in phys]
