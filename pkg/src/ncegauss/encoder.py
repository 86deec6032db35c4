"""Small deterministic encoders: linear maps and 2-layer ReLU MLPs.

Forward evaluation produces both raw and unit-normalized embeddings;
backward passes return analytic parameter gradients.  Checkpoints are a
JSON header plus a little-endian float64 blob and round-trip bit-exactly.
"""

import json
import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._util import derive_rng

ACTIVATIONS = ("none", "relu")


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass
class Encoder:
    layers: List[Layer]
    activation: str = "none"  # applied between layers only
    seed: Optional[int] = None

    def __post_init__(self):
        if not 1 <= len(self.layers) <= 2:
            raise ValueError("encoder supports 1 or 2 layers")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise ValueError("layer shapes are not composable")

    @property
    def d_in(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def d_out(self) -> int:
        return self.layers[-1].weights.shape[0]

    def parameters(self):
        """Flat list [W1, b1, (W2, b2)] referencing the live arrays."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def set_parameters(self, params):
        it = iter(params)
        for layer in self.layers:
            layer.weights = next(it)
            layer.bias = next(it)


@dataclass
class EmbeddingBatch:
    """Raw encoder outputs and their unit-normalized counterparts."""

    raw: np.ndarray  # (n, d)
    normalized: np.ndarray  # (n, d), rows on the unit sphere
    fallback_direction: np.ndarray  # c0, used for zero-norm raw rows
    hidden_pre: Optional[np.ndarray] = field(default=None, repr=False)  # pre-activation cache


# zero-norm raw rows map to this fixed sphere point
def fallback_direction(d: int) -> np.ndarray:
    c0 = np.zeros(d)
    c0[0] = 1.0
    return c0


def init_encoder(d_in: int, d_out: int, hidden: Optional[int] = None,
                 activation: str = "none", seed=0) -> Encoder:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    rng = derive_rng(seed)
    dims = [d_in, d_out] if hidden is None else [d_in, hidden, d_out]
    layers = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(Layer(weights=w, bias=np.zeros(fan_out)))
    seed_val = seed if isinstance(seed, int) else None
    return Encoder(layers=layers, activation=activation, seed=seed_val)


def forward(encoder: Encoder, batch: np.ndarray) -> EmbeddingBatch:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != encoder.d_in:
        raise ValueError(f"batch must be (n, {encoder.d_in})")
    h = batch @ encoder.layers[0].weights.T + encoder.layers[0].bias
    hidden_pre = None
    if len(encoder.layers) == 2:
        hidden_pre = h
        a = np.maximum(h, 0.0) if encoder.activation == "relu" else h
        h = a @ encoder.layers[1].weights.T + encoder.layers[1].bias
    raw = h
    norms = np.linalg.norm(raw, axis=1)
    c0 = fallback_direction(encoder.d_out)
    safe = np.where(norms > 0.0, norms, 1.0)
    normalized = raw / safe[:, None]
    zero_rows = norms == 0.0
    if zero_rows.any():
        normalized = normalized.copy()
        normalized[zero_rows] = c0
    return EmbeddingBatch(raw=raw, normalized=normalized, fallback_direction=c0,
                          hidden_pre=hidden_pre)


def backward(encoder: Encoder, batch: np.ndarray, upstream_grad_raw: np.ndarray,
             hidden_pre: Optional[np.ndarray] = None):
    """Gradients of sum_i <upstream_grad_raw[i], raw[i]> w.r.t. all parameters.

    Returns a flat list matching Encoder.parameters().  ReLU subgradient
    at exactly 0 is taken as 0.  `hidden_pre` may pass the forward cache
    to skip recomputing the first layer.
    """
    batch = np.asarray(batch, dtype=np.float64)
    g = np.asarray(upstream_grad_raw, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != encoder.d_in:
        raise ValueError(f"batch must be (n, {encoder.d_in})")
    if g.shape != (batch.shape[0], encoder.d_out):
        raise ValueError("upstream gradient shape mismatch")
    if len(encoder.layers) == 1:
        return [g.T @ batch, g.sum(axis=0)]
    if hidden_pre is None:
        hidden_pre = batch @ encoder.layers[0].weights.T + encoder.layers[0].bias
    act = np.maximum(hidden_pre, 0.0) if encoder.activation == "relu" else hidden_pre
    g_w2 = g.T @ act
    g_b2 = g.sum(axis=0)
    g_hidden = g @ encoder.layers[1].weights
    if encoder.activation == "relu":
        g_hidden = g_hidden * (hidden_pre > 0.0)
    g_w1 = g_hidden.T @ batch
    g_b1 = g_hidden.sum(axis=0)
    return [g_w1, g_b1, g_w2, g_b2]


def grad_through_normalization(raw_row: np.ndarray, upstream_grad_u: np.ndarray) -> np.ndarray:
    """Chain rule through u = raw/||raw||: returns (I - u u^T) g / ||raw||."""
    raw_row = np.asarray(raw_row, dtype=np.float64)
    norm = np.linalg.norm(raw_row)
    if norm == 0.0:
        raise ValueError("normalization is not differentiable at zero norm")
    u = raw_row / norm
    g = np.asarray(upstream_grad_u, dtype=np.float64)
    return (g - u * (u @ g)) / norm


def grad_through_normalization_batch(raw: np.ndarray, upstream_grad_u: np.ndarray) -> np.ndarray:
    """Row-wise grad_through_normalization for an (n, d) batch."""
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("normalization is not differentiable at zero norm")
    u = raw / norms[:, None]
    radial = np.sum(u * upstream_grad_u, axis=1, keepdims=True)
    return (upstream_grad_u - u * radial) / norms[:, None]


_MAGIC = b"NCEK"


def save_encoder(path, encoder: Encoder) -> None:
    """JSON header (shapes, activation, seed) + float64-LE parameter blob."""
    header = {
        "activation": encoder.activation,
        "seed": encoder.seed,
        "shapes": [list(layer.weights.shape) for layer in encoder.layers],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for layer in encoder.layers:
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_encoder(path) -> Encoder:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not an encoder checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        layers = []
        for out_dim, in_dim in header["shapes"]:
            w = np.frombuffer(fh.read(out_dim * in_dim * 8), dtype="<f8").reshape(out_dim, in_dim)
            b = np.frombuffer(fh.read(out_dim * 8), dtype="<f8")
            layers.append(Layer(weights=w.copy(), bias=b.copy()))
    return Encoder(layers=layers, activation=header["activation"], seed=header["seed"])
