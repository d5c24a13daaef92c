"""Named parameter store, the Adam update, and the checkpoint file format."""

import json

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointError, TrainingError

CHECKPOINT_VERSION = 1
_DTYPE = np.dtype("<f4")


class ParamStore:
    """Insertion-ordered map name -> parameter Tensor, plus Adam moments."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, array) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        tensor = Tensor(np.asarray(array, dtype=np.float32), requires_grad=True)
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self):
        return list(self._params)

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.grad = None

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values())


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam over every parameter with a gradient; zeroes grads."""
    store.step += 1
    t = store.step
    for name in store.names():
        tensor = store[name]
        grad = tensor.grad
        if grad is None:
            continue
        if not np.isfinite(grad).all():
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        if name not in store.m:
            store.m[name] = np.zeros_like(tensor.data)
            store.v[name] = np.zeros_like(tensor.data)
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        tensor.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(np.float32)
    store.zero_grad()


def save_checkpoint(path, store: ParamStore, extra: dict | None = None,
                    with_moments: bool = True) -> None:
    """Header line (JSON) followed by little-endian f32 blobs in header order."""
    header = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": "<f4",
        "step": store.step,
        "moments": bool(with_moments and store.m),
        "extra": extra or {},
        "params": [[name, list(store[name].data.shape)] for name in store.names()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in store.names():
            fh.write(np.ascontiguousarray(store[name].data, dtype=_DTYPE).tobytes())
        if header["moments"]:
            for name in store.names():
                fh.write(np.ascontiguousarray(store.m[name], dtype=_DTYPE).tobytes())
            for name in store.names():
                fh.write(np.ascontiguousarray(store.v[name], dtype=_DTYPE).tobytes())


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
        version = header.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} unsupported (expected {CHECKPOINT_VERSION})")
        store = ParamStore()
        blob = fh.read()
    offset = 0

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 4
        if end > len(blob):
            raise CheckpointError("checkpoint truncated: blob shorter than header promises")
        arr = np.frombuffer(blob[offset:end], dtype=_DTYPE).reshape(shape)
        offset = end
        return arr.copy()

    for name, shape in header["params"]:
        store.add(name, take(shape))
    if header.get("moments"):
        for name, shape in header["params"]:
            store.m[name] = take(shape).astype(np.float32)
        for name, shape in header["params"]:
            store.v[name] = take(shape).astype(np.float32)
    store.step = int(header.get("step", 0))
    return store, header.get("extra", {})
