"""Multi-modal conditioning encoder: static point cloud, dynamic obstacles
and goal heading fused into three context tokens.

Point-cloud branch: shared per-point 1D convolutions + ReLU, mask-aware
global max pool, MLP. Dynamic branch: per-obstacle MLP, learned positional
embedding over the range-sorted slots, small self-attention encoder with
padded keys masked out, mask-aware max pool, MLP. Goal branch: MLP. The
three tokens pass through the fusion transformer in a fixed order
(static, dynamic, goal), which downstream consumers rely on.

Empty modalities (no visible points / no visible agents) substitute a
learned token instead of erroring.
"""

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .config import FlowNetConfig, SceneConfig


def scenario_arrays(scenarios):
    """Stack Scenario objects into f32 batch arrays for the encoder."""
    pcd = np.stack([s.pointcloud for s in scenarios]).astype(np.float32)
    pcd_len = np.array([s.pointcloud_len for s in scenarios], dtype=int)
    dyn = np.stack([s.dyn_obstacles for s in scenarios]).astype(np.float32)
    dyn_len = np.array([s.dyn_len for s in scenarios], dtype=int)
    goal = np.stack([s.goal_heading for s in scenarios]).astype(np.float32)
    return pcd, pcd_len, dyn, dyn_len, goal


def init_encoder_branches(store, rng, cfg: FlowNetConfig, scene: SceneConfig,
                          prefix="enc"):
    """The three modality branches (shared architecture, per-model weights)."""
    d = cfg.d_model
    nn.init_conv(store, rng, f"{prefix}.pcd.c0", 2, d, 1)
    nn.init_conv(store, rng, f"{prefix}.pcd.c1", d, d, 1)
    nn.init_mlp(store, rng, f"{prefix}.pcd.head", (d, d, d))
    store.add(f"{prefix}.pcd.empty", 0.02 * rng.standard_normal(d).astype(np.float32))

    nn.init_mlp(store, rng, f"{prefix}.dyn.embed", (4, d, d))
    store.add(f"{prefix}.dyn.pos", 0.02 * rng.standard_normal(
        (scene.n_obs, d)).astype(np.float32))
    nn.init_transformer(store, rng, f"{prefix}.dyn.trans", d, cfg.dyn_layers)
    nn.init_mlp(store, rng, f"{prefix}.dyn.head", (d, d, d))
    store.add(f"{prefix}.dyn.empty", 0.02 * rng.standard_normal(d).astype(np.float32))

    nn.init_mlp(store, rng, f"{prefix}.goal", (2, d, d))


def init_encoder(store, rng, cfg: FlowNetConfig, scene: SceneConfig, prefix="enc"):
    init_encoder_branches(store, rng, cfg, scene, prefix)
    nn.init_transformer(store, rng, f"{prefix}.fusion", cfg.d_model, cfg.fusion_layers)


def _blend_empty(pooled, empty_token, lens):
    """Replace pooled rows for empty modalities with the learned token."""
    present = (lens > 0).astype(np.float32)[:, None]
    return ad.add(ad.mul(pooled, Tensor(present)),
                  ad.mul(empty_token, Tensor(1.0 - present)))


def encode_static(store, pcd, pcd_len, prefix="enc"):
    """[B, n_pts, 2] point clouds -> [B, d] static embeddings (pre-fusion)."""
    x = ad.transpose(Tensor(pcd), (0, 2, 1))           # [B, 2, Np]
    x = ad.relu(nn.conv(store, f"{prefix}.pcd.c0", x))
    x = ad.relu(nn.conv(store, f"{prefix}.pcd.c1", x))
    x = ad.transpose(x, (0, 2, 1))                     # [B, Np, d]
    pooled = ad.max_pool_valid(x, np.maximum(pcd_len, 1))
    pooled = _blend_empty(pooled, store[f"{prefix}.pcd.empty"], pcd_len)
    return nn.mlp(store, f"{prefix}.pcd.head", pooled, 2)


def encode_dynamic(store, dyn, dyn_len, cfg: FlowNetConfig, prefix="enc"):
    """[B, n_obs, 4] obstacle rows -> [B, d] dynamic embeddings (pre-fusion)."""
    n_obs = dyn.shape[1]
    x = nn.mlp(store, f"{prefix}.dyn.embed", Tensor(dyn), 2)
    x = ad.add(x, store[f"{prefix}.dyn.pos"])
    key_mask = np.where(np.arange(n_obs)[None, :] >= np.maximum(dyn_len, 1)[:, None],
                        -1e9, 0.0
                        ).astype(np.float32)[:, None, None, :]  # [B,1,1,No]
    x = nn.transformer(store, f"{prefix}.dyn.trans", x, cfg.dyn_heads,
                       cfg.dyn_layers, mask=key_mask)
    pooled = ad.max_pool_valid(x, np.maximum(dyn_len, 1))
    pooled = _blend_empty(pooled, store[f"{prefix}.dyn.empty"], dyn_len)
    return nn.mlp(store, f"{prefix}.dyn.head", pooled, 2)


def encode_goal(store, goal, prefix="enc"):
    return nn.mlp(store, f"{prefix}.goal", Tensor(goal.astype(np.float32)), 2)


def encode_branches(store, pcd, pcd_len, dyn, dyn_len, goal,
                    cfg: FlowNetConfig, prefix="enc"):
    """Pre-fusion embeddings (C_static, C_dyn, C_goal), each [B, d]."""
    return (encode_static(store, pcd, pcd_len, prefix),
            encode_dynamic(store, dyn, dyn_len, cfg, prefix),
            encode_goal(store, goal, prefix))


def encode_context(store, pcd, pcd_len, dyn, dyn_len, goal,
                   cfg: FlowNetConfig, prefix="enc"):
    """Full conditioning pass -> fused context tokens [B, 3, d]."""
    c_static, c_dyn, c_goal = encode_branches(store, pcd, pcd_len, dyn, dyn_len,
                                              goal, cfg, prefix)
    batch, d = c_static.data.shape
    tokens = ad.concat([ad.reshape(c_static, (batch, 1, d)),
                        ad.reshape(c_dyn, (batch, 1, d)),
                        ad.reshape(c_goal, (batch, 1, d))], axis=1)
    return nn.transformer(store, f"{prefix}.fusion", tokens,
                          cfg.fusion_heads, cfg.fusion_layers)


def encode_scenarios(store, scenarios, cfg: FlowNetConfig, prefix="enc"):
    pcd, pcd_len, dyn, dyn_len, goal = scenario_arrays(scenarios)
    return encode_context(store, pcd, pcd_len, dyn, dyn_len, goal, cfg, prefix)
