"""Conditional 1D U-Net over the flattened coefficient vector.

The 2(n+1) coefficients are treated as a 2-channel sequence of length n+1.
Symmetric encoder-decoder with skip connections; each residual block gets
the sinusoidal flow-time embedding added per channel and the fused context
injected by feature-wise modulation (scale and shift). The final 1x1
convolution is zero-initialized, so a fresh network is the zero vector
field.
"""

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .config import FlowNetConfig
from .errors import NumericalError


def _res_names(prefix, tag):
    return (f"{prefix}.{tag}.conv1", f"{prefix}.{tag}.conv2",
            f"{prefix}.{tag}.film", f"{prefix}.{tag}.time")


def _init_res_block(store, rng, prefix, tag, channels, ctx_dim, time_dim):
    c1, c2, film, time = _res_names(prefix, tag)
    nn.init_conv(store, rng, c1, channels, channels, 3)
    nn.init_conv(store, rng, c2, channels, channels, 3)
    nn.init_linear(store, rng, film, ctx_dim, 2 * channels)
    nn.init_linear(store, rng, time, time_dim, channels)


def _res_block(store, prefix, tag, x, ctx_flat, t_emb):
    c1, c2, film, time = _res_names(prefix, tag)
    channels = x.data.shape[1]
    h = nn.conv(store, c1, x, padding=1)
    gamma_beta = nn.linear(store, film, ctx_flat)          # [B, 2C]
    batch = gamma_beta.data.shape[0]
    gamma = ad.reshape(ad.slice_(gamma_beta, (slice(None), slice(0, channels))),
                       (batch, channels, 1))
    beta = ad.reshape(ad.slice_(gamma_beta, (slice(None), slice(channels, 2 * channels))),
                      (batch, channels, 1))
    t_add = ad.reshape(nn.linear(store, time, t_emb), (batch, channels, 1))
    h = ad.add(ad.add(ad.mul(h, ad.add(gamma, Tensor(np.float32(1.0)))), beta), t_add)
    h = ad.relu(h)
    h = nn.conv(store, c2, h, padding=1)
    return ad.add(x, h)


def _upsample2(x):
    batch, channels, length = x.data.shape
    r = ad.reshape(x, (batch, channels, length, 1))
    rr = ad.concat([r, r], axis=3)
    return ad.reshape(rr, (batch, channels, 2 * length))


def init_unet(store, rng, cfg: FlowNetConfig, n_ctrl: int, prefix="unet"):
    chans = list(cfg.unet_channels)
    ctx_dim = 3 * cfg.d_model
    tdim = cfg.time_embed_dim
    nn.init_conv(store, rng, f"{prefix}.stem", 2, chans[0], 3)
    for i in range(len(chans) - 1):
        _init_res_block(store, rng, prefix, f"down{i}", chans[i], ctx_dim, tdim)
        nn.init_conv(store, rng, f"{prefix}.downconv{i}", chans[i], chans[i + 1], 3)
    _init_res_block(store, rng, prefix, "mid", chans[-1], ctx_dim, tdim)
    for i in reversed(range(len(chans) - 1)):
        nn.init_conv(store, rng, f"{prefix}.upconv{i}", chans[i + 1] + chans[i], chans[i], 3)
        _init_res_block(store, rng, prefix, f"up{i}", chans[i], ctx_dim, tdim)
    nn.init_conv(store, rng, f"{prefix}.head0", chans[0], chans[0], 3)
    nn.init_conv(store, rng, f"{prefix}.head1", chans[0], 2, 1, zero=True)


def vector_field(store, xi, tau, context, cfg: FlowNetConfig, prefix="unet"):
    """Predicted transport field for flattened coefficients.

    ``xi``: [B, 2(n+1)] array or Tensor; ``tau``: [B] flow times in [0, 1];
    ``context``: [B, 3, d] fused tokens. Returns a Tensor of xi's shape.
    """
    x = xi if isinstance(xi, ad.Tensor) else Tensor(np.asarray(xi, dtype=np.float32))
    if not np.isfinite(x.data).all():
        raise NumericalError("vector_field input contains non-finite values")
    batch, flat = x.data.shape
    n_ctrl = flat // 2
    chans = list(cfg.unet_channels)
    ctx_flat = ad.reshape(context, (batch, 3 * cfg.d_model))
    t_emb = Tensor(ad.sinusoidal_embed(tau, cfg.time_embed_dim))

    h = ad.reshape(x, (batch, 2, n_ctrl))
    h = nn.conv(store, f"{prefix}.stem", h, padding=1)
    skips = []
    for i in range(len(chans) - 1):
        h = _res_block(store, prefix, f"down{i}", h, ctx_flat, t_emb)
        skips.append(h)
        h = nn.conv(store, f"{prefix}.downconv{i}", h, stride=2, padding=1)
    h = _res_block(store, prefix, "mid", h, ctx_flat, t_emb)
    for i in reversed(range(len(chans) - 1)):
        skip = skips[i]
        h = _upsample2(h)
        h = ad.slice_(h, (slice(None), slice(None), slice(0, skip.data.shape[2])))
        h = ad.concat([h, skip], axis=1)
        h = nn.conv(store, f"{prefix}.upconv{i}", h, padding=1)
        h = _res_block(store, prefix, f"up{i}", h, ctx_flat, t_emb)
    h = ad.relu(nn.conv(store, f"{prefix}.head0", h, padding=1))
    h = nn.conv(store, f"{prefix}.head1", h)
    return ad.reshape(h, (batch, flat))
