"""Layer helpers on top of the autodiff primitives.

Parameters are registered by dotted name in a ParamStore at init time; the
matching forward helpers fetch them by the same name, so checkpoints are a
stable function of the init calls.
"""

import numpy as np

from . import autodiff as ad
from .params import ParamStore


def he_normal(rng, fan_in, shape):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def init_linear(store: ParamStore, rng, name, fan_in, fan_out, zero=False):
    if zero:
        store.add(f"{name}.w", np.zeros((fan_in, fan_out), dtype=np.float32))
    else:
        store.add(f"{name}.w", he_normal(rng, fan_in, (fan_in, fan_out)))
    store.add(f"{name}.b", np.zeros(fan_out, dtype=np.float32))


def linear(store, name, x):
    return ad.add(ad.matmul(x, store[f"{name}.w"]), store[f"{name}.b"])


def init_mlp(store, rng, name, dims, zero_last=False):
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        init_linear(store, rng, f"{name}.{i}", fan_in, fan_out,
                    zero=zero_last and i == len(dims) - 2)


def mlp(store, name, x, n_layers):
    for i in range(n_layers):
        x = linear(store, f"{name}.{i}", x)
        if i < n_layers - 1:
            x = ad.relu(x)
    return x


def init_layer_norm(store, name, dim):
    store.add(f"{name}.g", np.ones(dim, dtype=np.float32))
    store.add(f"{name}.b", np.zeros(dim, dtype=np.float32))


def apply_layer_norm(store, name, x):
    return ad.layer_norm(x, store[f"{name}.g"], store[f"{name}.b"])


def init_conv(store: ParamStore, rng, name, c_in, c_out, k, zero=False):
    if zero:
        store.add(f"{name}.w", np.zeros((c_out, c_in, k), dtype=np.float32))
    else:
        store.add(f"{name}.w", he_normal(rng, c_in * k, (c_out, c_in, k)))
    store.add(f"{name}.b", np.zeros(c_out, dtype=np.float32))


def conv(store, name, x, stride=1, padding=0):
    return ad.conv1d(x, store[f"{name}.w"], store[f"{name}.b"],
                     stride=stride, padding=padding)


def init_attention(store, rng, name, dim):
    for part in ("wq", "wk", "wv", "wo"):
        store.add(f"{name}.{part}", he_normal(rng, dim, (dim, dim)))


def attention(store, name, q, k, v, heads, mask=None, canonical=False):
    return ad.multi_head_attention(
        q, k, v, heads,
        store[f"{name}.wq"], store[f"{name}.wk"],
        store[f"{name}.wv"], store[f"{name}.wo"],
        mask=mask, canonical=canonical)


def init_transformer_layer(store, rng, name, dim, ffn_mult=4):
    init_attention(store, rng, f"{name}.attn", dim)
    init_layer_norm(store, f"{name}.ln1", dim)
    init_linear(store, rng, f"{name}.ffn.0", dim, ffn_mult * dim)
    init_linear(store, rng, f"{name}.ffn.1", ffn_mult * dim, dim)
    init_layer_norm(store, f"{name}.ln2", dim)


def transformer_layer(store, name, x, heads, mask=None, canonical=False):
    """Post-LN encoder block: LN(x + MHA(x)); LN(x + FFN(x))."""
    attended = attention(store, f"{name}.attn", x, x, x, heads,
                         mask=mask, canonical=canonical)
    x = apply_layer_norm(store, f"{name}.ln1", ad.add(x, attended))
    hidden = ad.relu(linear(store, f"{name}.ffn.0", x))
    x = apply_layer_norm(store, f"{name}.ln2",
                         ad.add(x, linear(store, f"{name}.ffn.1", hidden)))
    return x


def init_transformer(store, rng, name, dim, layers, ffn_mult=4):
    for i in range(layers):
        init_transformer_layer(store, rng, f"{name}.{i}", dim, ffn_mult)


def transformer(store, name, x, heads, layers, mask=None, canonical=False):
    for i in range(layers):
        x = transformer_layer(store, f"{name}.{i}", x, heads,
                              mask=mask, canonical=canonical)
    return x
