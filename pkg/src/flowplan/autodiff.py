"""Minimal reverse-mode autodiff over NumPy arrays.

A dynamic tape: every op builds the output Tensor and a closure that routes
the upstream gradient to its parents. The op set is exactly what the
conditioning encoders, the 1D U-Net and the scorer need; float32 is the
working precision for parameters and activations.

Reductions marked ``canonical`` sum their addends in sorted order, which
makes the forward value invariant to input permutations at the bit level;
the scorer's attention uses this to make candidate-permutation equivariance
exact rather than approximate.
"""

import math

import numpy as np

from .errors import EmptyInputError, ConfigError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Reverse sweep from a scalar output."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _link(out, parents, backward):
    needs = [p for p in parents if p.requires_grad]
    if needs:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(tensor, grad):
    if not tensor.requires_grad:
        return
    grad = _unbroadcast(grad, tensor.data.shape)
    if tensor.grad is None:
        tensor.grad = grad.astype(tensor.data.dtype, copy=True)
    else:
        tensor.grad += grad


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _sorted_sum(values, axis):
    """Permutation-invariant reduction: sort addends, then sum positionally."""
    return np.sort(values, axis=axis).sum(axis=axis)


# ---------------------------------------------------------------------------
# arithmetic primitives


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _link(out, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _link(out, (a, b), backward)


def scale(a, s: float):
    out = Tensor(a.data * s)

    def backward(g):
        _accum(a, g * s)

    return _link(out, (a,), backward)


def neg(a):
    return scale(a, -1.0)


def sub(a, b):
    return add(a, neg(_as_tensor(b)))


def relu(a):
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0).astype(a.data.dtype))

    def backward(g):
        _accum(a, g * mask)

    return _link(out, (a,), backward)


def exp(a):
    value = np.exp(a.data)
    out = Tensor(value)

    def backward(g):
        _accum(a, g * value)

    return _link(out, (a,), backward)


def log(a):
    out = Tensor(np.log(a.data))

    def backward(g):
        _accum(a, g / a.data)

    return _link(out, (a,), backward)


def matmul(a, b, canonical=False):
    """np.matmul semantics for stacked matrices (operands must be >= 2-D).

    With ``canonical=True`` the forward contraction sums addends in sorted
    order (permutation-invariant bits); intended for small token-axis
    contractions only.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    if canonical:
        terms = a.data[..., :, :, None] * b.data[..., None, :, :]
        out = Tensor(_sorted_sum(terms, axis=-2))
    else:
        out = Tensor(np.matmul(a.data, b.data))

    def backward(g):
        _accum(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        _accum(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _link(out, (a, b), backward)


# ---------------------------------------------------------------------------
# shape plumbing


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _link(out, (a,), backward)


def transpose(a, axes):
    out = Tensor(np.transpose(a.data, axes))
    inverse = np.argsort(axes)

    def backward(g):
        _accum(a, np.transpose(g, inverse))

    return _link(out, (a,), backward)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            _accum(t, g[tuple(index)])

    return _link(out, tuple(tensors), backward)


def slice_(a, index):
    out = Tensor(a.data[index])

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _accum(a, full)

    return _link(out, (a,), backward)


def sum_(a, axis=None, keepdims=False):
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _link(out, (a,), backward)


def mean_(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else a.data.shape[axis]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# network layers


def softmax(a, axis=-1, canonical=False):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    if canonical:
        denom = np.expand_dims(_sorted_sum(e, axis=axis), axis)
    else:
        denom = e.sum(axis=axis, keepdims=True)
    value = e / denom
    out = Tensor(value)

    def backward(g):
        inner = (g * value).sum(axis=axis, keepdims=True)
        _accum(a, value * (g - inner))

    return _link(out, (a,), backward)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    if gain.data.shape != (x.data.shape[-1],) or bias.data.shape != (x.data.shape[-1],):
        raise ShapeError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match "
            f"feature dim {x.data.shape[-1]}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = Tensor(xhat * gain.data + bias.data)
    dim = x.data.shape[-1]

    def backward(g):
        dxhat = g * gain.data
        term1 = dxhat
        term2 = dxhat.mean(axis=-1, keepdims=True)
        term3 = xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv_std * (term1 - term2 - term3))
        reduce_axes = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=reduce_axes))
        _accum(bias, g.sum(axis=reduce_axes))

    return _link(out, (x, gain, bias), backward)


def conv1d(x, weight, bias=None, stride=1, padding=0):
    """Cross-correlation over the last axis.

    ``x`` is ``[C_in, L]`` or ``[B, C_in, L]``; ``weight`` is
    ``[C_out, C_in, k]``. Output length is floor((L + 2*pad - k)/stride) + 1.
    """
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or weight.data.ndim != 3:
        raise ShapeError(f"conv1d needs [B,C,L] and [Cout,Cin,k], got {x.shape} and {weight.shape}")
    batch, c_in, length = xd.shape
    c_out, c_in_w, k = weight.data.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv1d channel mismatch: input {c_in} vs kernel {c_in_w}")
    padded_len = length + 2 * padding
    if k > padded_len:
        raise ShapeError(f"kernel size {k} exceeds padded length {padded_len}")
    out_len = (padded_len - k) // stride + 1

    xp = np.zeros((batch, c_in, padded_len), dtype=xd.dtype)
    xp[:, :, padding:padding + length] = xd
    offsets = stride * np.arange(out_len)
    cols = np.empty((batch, c_in, k, out_len), dtype=xd.dtype)
    for kk in range(k):
        cols[:, :, kk, :] = xp[:, :, kk:kk + stride * out_len:stride]
    cols2 = cols.reshape(batch, c_in * k, out_len)
    wm = weight.data.reshape(c_out, c_in * k)
    value = np.matmul(wm, cols2)
    if bias is not None:
        value = value + bias.data[:, None]
    out = Tensor(value[0] if squeeze else value)

    def backward(g):
        gb = g[None] if squeeze else g
        dw = np.einsum("bol,bkl->ok", gb, cols2).reshape(weight.data.shape)
        _accum(weight, dw)
        if bias is not None:
            _accum(bias, gb.sum(axis=(0, 2)))
        dcols = np.matmul(wm.T, gb).reshape(batch, c_in, k, out_len)
        dxp = np.zeros_like(xp)
        for kk in range(k):
            dxp[:, :, kk:kk + stride * out_len:stride] += dcols[:, :, kk, :]
        dx = dxp[:, :, padding:padding + length]
        _accum(x, dx[0] if squeeze else dx)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _link(out, parents, backward)


def max_pool_valid(x, valid_len):
    """Per-feature max over the first ``valid_len`` rows (mask-aware).

    ``x`` is ``[N, D]`` with an int length, or ``[B, N, D]`` with a length
    vector. The gradient routes to the argmax rows only, so sentinel rows
    beyond the valid length can never influence forward or backward.
    """
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    lens = np.atleast_1d(np.asarray(valid_len, dtype=int))
    if xd.ndim != 3 or lens.shape[0] != xd.shape[0]:
        raise ShapeError(f"max_pool_valid got {x.shape} with lengths {lens.shape}")
    if (lens < 1).any():
        raise EmptyInputError("max_pool_valid needs valid_len >= 1")
    mask = np.arange(xd.shape[1])[None, :] >= lens[:, None]
    masked = np.where(mask[:, :, None], -np.inf, xd)
    arg = masked.argmax(axis=1)
    value = np.take_along_axis(masked, arg[:, None, :], axis=1)[:, 0, :]
    out = Tensor(value[0] if squeeze else value)

    def backward(g):
        gb = g[None] if squeeze else g
        dx = np.zeros_like(xd)
        np.put_along_axis(dx, arg[:, None, :], gb[:, None, :], axis=1)
        _accum(x, dx[0] if squeeze else dx)

    return _link(out, (x,), backward)


def multi_head_attention(q, k, v, heads, wq, wk, wv, wo, mask=None, canonical=False):
    """Scaled dot-product attention with projections; tokens on axis -2.

    ``q``/``k``/``v`` are ``[..., T, D]``; ``mask`` (optional) is an additive
    pre-softmax bias broadcastable to ``[..., heads, Tq, Tk]`` (use -1e9 to
    hide padded keys). ``canonical=True`` makes the token-axis reductions
    permutation-invariant at the bit level.
    """
    d_model = q.data.shape[-1]
    if d_model % heads:
        raise ConfigError(f"model dim {d_model} not divisible by heads {heads}")
    dh = d_model // heads

    def split_heads(t):
        # [..., T, D] -> [..., heads, T, dh]
        tokens = t.data.shape[-2]
        lead = t.data.shape[:-2]
        r = reshape(t, lead + (tokens, heads, dh))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return transpose(r, axes)

    qh = split_heads(matmul(q, wq))
    kh = split_heads(matmul(k, wk))
    vh = split_heads(matmul(v, wv))
    logits = scale(matmul(qh, transpose(kh, _swap_last(kh))), 1.0 / math.sqrt(dh))
    if mask is not None:
        logits = add(logits, Tensor(mask))
    attn = softmax(logits, axis=-1, canonical=canonical)
    ctx = matmul(attn, vh, canonical=canonical)  # [..., heads, Tq, dh]
    lead = ctx.data.shape[:-3]
    tq = ctx.data.shape[-2]
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    merged = reshape(transpose(ctx, axes), lead + (tq, heads * dh))
    return matmul(merged, wo)


def _swap_last(t):
    axes = list(range(t.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def sinusoidal_embed(tau, dim):
    """Interleaved sin/cos embedding of flow time tau (scalar or vector).

    Frequencies are geometric over [1, 1e4]; tau is pre-scaled by 1000, so
    embed(0) gives all-zero sine channels and all-one cosine channels.
    """
    if dim % 2:
        raise ConfigError(f"sinusoidal embedding dim must be even, got {dim}")
    tau = np.atleast_1d(np.asarray(tau, dtype=np.float32))
    half = dim // 2
    exponent = np.arange(half) / max(half - 1, 1)
    div = (10000.0 ** exponent).astype(np.float32)
    angles = (tau[:, None] * 1000.0) / div[None, :]
    emb = np.empty((tau.shape[0], dim), dtype=np.float32)
    emb[:, 0::2] = np.sin(angles)
    emb[:, 1::2] = np.cos(angles)
    return emb
